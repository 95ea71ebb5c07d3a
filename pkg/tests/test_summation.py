"""
Tests for multi-sum evaluation, enumeration cutoffs and the sum-side generators.
"""
from fractions import Fraction

import pytest

from errors import BadParameters, NonSummable, SchemaError
from products import eval_rhs, product_series
from qfactors import PochArg, poch_finite, poch_inf, pochhammer, qbinom, standard_arg
from qseries import QSeries
from summation import (
    andrews_gordon_rhs,
    andrews_gordon_spec,
    bressoud_rhs,
    bressoud_spec,
    build_spec,
    contributing_points,
    cutoff_bounds,
    eval_multisum,
    gm_series,
    term,
    thm31_spec,
    zagier_spec,
)

RR_G = [1, 1, 1, 1, 2, 2, 3, 3, 4, 5, 6, 7, 9, 10, 12, 14, 17, 19, 23, 26, 31]


@pytest.fixture
def rr_spec():
    """sum_n q^(n^2)/(q;q)_n"""
    return build_spec("n", "n^2")


class TestTerm:
    """Single summands"""

    def test_rr_term(self, rr_spec):
        """n=2 gives q^4/((1-q)(1-q^2))"""
        result = term(rr_spec, (2,), 10)

        assert result.coefficient_list(10) == [0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 4]

    def test_origin_is_one(self):
        spec = build_spec("i j", "i^2+i*j+j^2", factors=["(-q;q^2)_i"], bases=[1, 2])

        assert term(spec, (0, 0), 10).coefficient_list(10) == [1] + [0] * 10

    def test_negative_offset_numerator(self):
        """(-q^-1;q^2)_1 q^2/(q^2;q^2)_1 = (q^2+q)/(1-q^2) = q/(1-q)"""
        spec = build_spec("n", "n^2+n", factors=["(-q^(-1);q^2)_n"], bases=[2])

        result = term(spec, (1,), 8)

        assert result.coefficient_list(8) == [0] + [1] * 8


class TestEvalMultisum:
    """Sums over the certified enumeration box"""

    def test_rogers_ramanujan(self, rr_spec):
        result = eval_multisum(rr_spec, 20)

        assert result.coefficient_list(20) == RR_G

    def test_contributing_points(self, rr_spec):
        """q^(n^2) reaches q^50 only for n <= 7"""
        points = sorted(tv.point for tv in contributing_points(rr_spec, 50))

        assert points == [(n,) for n in range(8)]

    def test_truncation_is_consistent(self, rr_spec):
        high = eval_multisum(rr_spec, 30)
        low = eval_multisum(rr_spec, 20)

        assert high.truncate(20) == low

    def test_axis_order_does_not_matter(self):
        spec = build_spec("i j", "j^2+2*i*j+i", sign="i", bases=[2, 2])

        assert eval_multisum(spec, 30) == eval_multisum(spec.permuted([1, 0]), 30)

    def test_double_sum_against_product(self):
        """sum (-1)^i q^(j^2+2ij+i)/((q^2;q^2)_i (q^2;q^2)_j)"""
        spec = build_spec("i j", "j^2+2*i*j+i", sign="i", bases=[2, 2])
        rhs = product_series("(q^3,q^5,q^11,q^13;q^16)_oo/(q^2,q^4,q^6,q^10,q^12,q^14;q^16)_oo", 30)

        assert eval_multisum(spec, 30).agrees_with(rhs, 30)

    def test_indefinite_form_is_not_summable(self):
        """q^((i-j)^2) has infinitely many terms at q^0"""
        spec = build_spec("i j", "(i-j)^2")

        with pytest.raises(NonSummable):
            eval_multisum(spec, 10)

    def test_parameter_grading_bounds_indefinite_form(self):
        """sum q^(i^2-2ij+j^2+j-i) a^(i+j)/((q^4;q^4)_i (q^4;q^4)_j) = 1/(a;q^2)_oo"""
        spec = build_spec("i j", "i^2-2*i*j+j^2+j-i", bases=[4, 4], params={"a": "i+j"})

        lhs = eval_multisum(spec, 20, max_degree=6)
        rhs = product_series("1/(a;q^2)_oo", 20, max_degree=6)

        assert lhs.agrees_with(rhs, 20)

    def test_unknown_symbol(self):
        with pytest.raises(SchemaError):
            build_spec("n", "n^2+m")

    def test_not_quadratic(self):
        with pytest.raises(SchemaError):
            build_spec("n", "n^3")


class TestCutoffBounds:
    """Certified enumeration regions"""

    def test_single_sum_box(self, rr_spec):
        cutoff = cutoff_bounds(rr_spec, 50)

        (lo, hi), = cutoff.bounds
        assert lo == 0
        assert hi >= 7

    def test_region_contains_contributing_points(self):
        spec = build_spec("i j", "i^2+i*j+j^2", bases=[1, 2])

        region = set(cutoff_bounds(spec, 30).points())
        contributing = {tv.point for tv in contributing_points(spec, 30)}

        assert contributing <= region
        assert (0, 0) in contributing

    def test_parameter_degree_bounds_indefinite_form(self):
        """Without a quadratic bound the degree in a bounds i + j"""
        spec = build_spec("i j", "i^2-2*i*j+j^2+j-i", bases=[4, 4], params={"a": "i+j"})

        cutoff = cutoff_bounds(spec, 20, max_degree=6)

        assert cutoff.max_degree == 6
        assert all(hi <= 6 for _, hi in cutoff.bounds)

    def test_free_coordinates_see_the_graded_value(self):
        """Q vanishes on i = k, j = 0; the shell depends on the actual j, not its bound"""
        spec = build_spec("i j k", "i^2+2*j^2+k^2+2*i*j-2*i*k-2*j*k+i+k", sign="i+k",
                          bases=[1, 2, 2], params={"a": "j"})

        cutoff = cutoff_bounds(spec, 20, max_degree=8)

        (cert,) = cutoff.certificates
        assert cert.graded == (1,)
        assert cert.free == (0, 2)
        assert cutoff.bounds[1] == (0, 8)

    def test_graded_cross_terms_sum_correctly(self):
        """sum (-1)^(i+k) q^(...) a^j/((q;q)_i (q^2;q^2)_j (q^2;q^2)_k) = (q^2;q^2)_oo"""
        spec = build_spec("i j k", "i^2+2*j^2+k^2+2*i*j-2*i*k-2*j*k+i+k", sign="i+k",
                          bases=[1, 2, 2], params={"a": "j"})

        lhs = eval_multisum(spec, 20, max_degree=4)
        rhs = product_series("(q^2;q^2)_oo", 20, max_degree=4)

        assert lhs.agrees_with(rhs, 20)


class TestEulerIdentities:
    """Euler's two expansions in a free parameter"""

    def test_euler_reciprocal(self):
        """sum a^n/(q;q)_n = 1/(a;q)_oo"""
        spec = build_spec("n", "0", params={"a": "n"})

        lhs = eval_multisum(spec, 30, max_degree=8)
        rhs = product_series("1/(a;q)_oo", 30, max_degree=8)

        assert lhs.agrees_with(rhs, 30)

    def test_euler_product(self):
        """sum q^((n^2-n)/2) a^n/(q;q)_n = (-a;q)_oo"""
        spec = build_spec("n", "n^2/2-n/2", params={"a": "n"})

        lhs = eval_multisum(spec, 30, max_degree=8)
        rhs = product_series("(-a;q)_oo", 30, max_degree=8)

        assert lhs.agrees_with(rhs, 30)


class TestPolynomialIdentities:
    """Exact identities used in proofs of the double-sum identities"""

    @staticmethod
    def left(n: int) -> QSeries:
        """q^(n^2+n) sum_i [n i]_(q^4) q^(4i^2-(4n+2)i)"""
        total = QSeries.zero()
        for i in range(n + 1):
            total = total + qbinom(n, i, base=4).shift(n * n + n + 4 * i * i - (4 * n + 2) * i)
        return total

    @staticmethod
    def right(n: int) -> QSeries:
        return poch_finite(PochArg(coefficient=-1, offset=2, base=2), n)

    @pytest.mark.parametrize("n", range(0, 31))
    def test_left_equals_right(self, n):
        assert self.left(n) == self.right(n)

    @pytest.mark.parametrize("n", range(1, 31, 6))
    def test_shared_recurrence(self, n):
        """X_n = (1 + q^(2n)) X_(n-1)"""
        for side in (self.left, self.right):
            assert side(n) == side(n - 1).mul_binomial(1, 2 * n)

    @pytest.mark.parametrize("n", range(0, 26, 5))
    def test_coefficient_slice(self, n):
        """sum_(i+j=n) q^(i^2-2ij+j^2+j-i)/((q^4;q^4)_i (q^4;q^4)_j) = 1/(q^2;q^2)_n"""
        spec = build_spec("i j", "i^2-2*i*j+j^2+j-i", bases=[4, 4])

        total = QSeries.zero(40)
        for i in range(n + 1):
            total = total + term(spec, (i, n - i), 40)

        expected = pochhammer(standard_arg(2), n, order=40, power=-1)
        assert total.agrees_with(expected, 40)


class TestDurfeeVariation:
    """g_m(q) = sum_n q^(n(n-m+1))/((q;q)_n (q;q)_(n-m))"""

    ORDER = 40

    @pytest.fixture(scope="class")
    def partitions(self):
        return poch_inf(standard_arg(1), self.ORDER).inverse(self.ORDER)

    def test_leading_terms(self):
        assert gm_series(0, 10).valuation == 0
        assert gm_series(0, 10).coefficient(0) == 1
        assert gm_series(2, 10).valuation == 2
        assert gm_series(2, 10).coefficient(2) == 1

    @pytest.mark.parametrize("m", range(-5, 6))
    def test_recurrence(self, m, partitions):
        """g_m + q^(1-m) g_(m-1) = 1/(q;q)_oo"""
        lhs = gm_series(m, 30) + gm_series(m - 1, 30 + m).shift(1 - m)

        assert lhs.agrees_with(partitions, 30)

    @pytest.mark.parametrize("m", range(-8, 9))
    def test_closed_form(self, m, partitions):
        """g_m = sum_n (-1)^n q^(binom(n+1,2)+(n+1)m) / (q;q)_oo"""
        theta = QSeries.zero()
        for n in range(0, 2 * abs(m) + 20):
            theta = theta + QSeries.monomial((-1) ** n, Fraction(n * (n + 1), 2) + (n + 1) * m)

        assert gm_series(m, self.ORDER).agrees_with(theta * partitions, self.ORDER)


class TestGenerators:
    """Andrews-Gordon, Bressoud and the rank-two families"""

    def test_andrews_gordon_k2_is_rogers_ramanujan(self, rr_spec):
        assert eval_multisum(andrews_gordon_spec(2, 2), 30) == eval_multisum(rr_spec, 30)

    @pytest.mark.parametrize("k,s", [(2, 1), (2, 2), (3, 1), (3, 2), (3, 3)])
    def test_andrews_gordon(self, k, s):
        lhs = eval_multisum(andrews_gordon_spec(k, s), 30)

        assert lhs.agrees_with(eval_rhs(andrews_gordon_rhs(k, s), 30), 30)

    @pytest.mark.parametrize("s", [1, 2, 3])
    def test_bressoud(self, s):
        lhs = eval_multisum(bressoud_spec(3, s), 30)

        assert lhs.agrees_with(eval_rhs(bressoud_rhs(3, s), 30), 30)

    @pytest.mark.parametrize("k,s", [(1, 1), (3, 0), (3, 4)])
    def test_bad_parameters(self, k, s):
        with pytest.raises(BadParameters):
            andrews_gordon_spec(k, s)
        with pytest.raises(BadParameters):
            bressoud_spec(k, s)

    @pytest.mark.parametrize("alpha,nu", [(1, 0), (2, 0), (3, 1)])
    def test_zagier(self, alpha, nu):
        spec, rhs = zagier_spec(alpha, nu)

        assert eval_multisum(spec, 30).agrees_with(eval_rhs(rhs, 30), 30)

    def test_zagier_integer_exponents_at_alpha_two(self):
        spec, _ = zagier_spec(2)

        assert spec.exponent_denominator() == 1

    @pytest.mark.parametrize("alpha,order", [(1, 40), (2, 40), (Fraction(1, 2), 20)])
    def test_companion_family(self, alpha, order):
        spec, rhs = thm31_spec(alpha)

        assert eval_multisum(spec, order).agrees_with(eval_rhs(rhs, order), order)

    def test_alpha_must_be_positive(self):
        with pytest.raises(BadParameters):
            zagier_spec(0)
        with pytest.raises(BadParameters):
            thm31_spec(-1)
