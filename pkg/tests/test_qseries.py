"""
Tests for the truncated series core: ring operations, truncation bookkeeping,
substitutions, the text format and Laurent series in z.
"""
import random
from fractions import Fraction

import pytest

from errors import FractionalExponent, InsufficientPrecision, NotInvertible, NotationError, WindowMiss
from qseries import Coef, CycloRat, QSeries, ZQSeries, mono, qs_inv, qs_mul, qs_rescale, zq_ct


def series(coeffs, order=None):
    return QSeries.from_coefficients(coeffs, order)


SCALARS = [1, -1, 2, -3, Fraction(1, 2), Fraction(-2, 3), CycloRat.zeta(4), CycloRat.zeta(3, 2)]


def random_coef(rng: random.Random) -> Coef:
    terms = {}
    for _ in range(rng.randint(1, 3)):
        m = mono({"a": rng.randint(0, 2), "b": rng.randint(0, 1)})
        terms[m] = rng.choice(SCALARS)
    return Coef(terms)


def random_series(rng: random.Random) -> QSeries:
    """An exact polynomial in q (half-integral exponents allowed) with parameter coefficients"""
    return QSeries.from_coefficients({Fraction(rng.randint(0, 12), rng.choice([1, 2])): random_coef(rng)
                                      for _ in range(rng.randint(1, 5))})


class TestQSeriesArithmetic:
    """Ring operations on truncated series"""

    def test_geometric_inverse(self):
        """1/(1-q) has every coefficient equal to 1"""
        f = series({0: 1, 1: -1})

        g = f.inverse(10)

        assert g.order == 10
        assert g.coefficient_list(10) == [1] * 11

    def test_partition_numbers(self):
        """1/prod(1-q^n) gives the partition numbers"""
        euler = QSeries.one()
        for n in range(1, 11):
            euler = euler.mul_binomial(-1, n)

        p = qs_inv(euler.truncate(10), 10)

        assert p.coefficient_list(10) == [1, 1, 2, 3, 5, 7, 11, 15, 22, 30, 42]

    def test_product_order_tracks_valuation(self):
        """(q + O(q^5)) * (q^2 + O(q^6)) is known to q^7"""
        f = series({1: 1}, order=5)
        g = series({2: 1}, order=6)

        h = f * g

        assert h.order == 7
        assert h.coefficient(3) == 1

    def test_sum_takes_smaller_order(self):
        h = series({0: 1}, order=3) + series({0: 2}, order=8)

        assert h.order == 3
        assert h.coefficient(0) == 3

    def test_coefficient_beyond_order(self):
        """Asking for a coefficient past the truncation order is an error"""
        f = series({0: 1}, order=4)

        with pytest.raises(ValueError):
            f.coefficient(5)

    def test_zero_not_invertible(self):
        with pytest.raises(NotInvertible):
            QSeries.zero(5).inverse()

    def test_fractional_exponents(self):
        """Half-integral exponents share one denominator after addition"""
        f = QSeries.monomial(1, Fraction(1, 2)) + QSeries.monomial(1, 1)

        assert f.denom == 2
        assert f.coefficient(Fraction(1, 2)) == 1
        assert f.coefficient(Fraction(1, 3)) == 0

    def test_div_binomial_matches_inverse(self):
        """Dividing by (1-q^2) agrees with multiplying by its inverse"""
        f = series({0: 1, 3: 2}, order=20)

        by_division = f.div_binomial(-1, 2, order=20)
        by_inverse = f * series({0: 1, 2: -1}).inverse(20)

        assert by_division.agrees_with(by_inverse, 20)


class TestQSeriesParameters:
    """Coefficients that are polynomials in named parameters"""

    def test_parameter_degree_bound(self):
        """Monomials above max_degree are dropped"""
        a = QSeries.monomial(1, 1, mono({"a": 1}), max_degree=2)
        f = QSeries.one() + a

        cube = f * f * f

        assert cube.coefficient(2) == Coef({mono({"a": 2}): 3})
        assert cube.coefficient(3) == 0

    def test_subst_param(self):
        """a -> q^2 in 1 + a q gives 1 + q^3"""
        f = QSeries.one() + QSeries.monomial(1, 1, mono({"a": 1}))

        g = f.subst_param("a", 1, 2)

        assert g.coefficient(0) == 1
        assert g.coefficient(3) == 1
        assert g.params == set()


class TestSubstitutions:
    """q -> q^r and q -> -q"""

    def test_rescale(self):
        f = series({0: 1, 1: 1, 2: 1}, order=2)

        g = f.rescale(3)

        assert g.order == 6
        assert g.coefficient(3) == 1
        assert g.coefficient(4) == 0

    def test_subst_sign(self):
        f = series({0: 1, 1: 1, 2: 1}, order=2)

        g = f.subst_sign()

        assert g.coefficient_list(2) == [1, -1, 1]

    def test_subst_sign_needs_integer_exponents(self):
        f = QSeries.monomial(1, Fraction(1, 2))

        with pytest.raises(FractionalExponent):
            f.subst_sign()


class TestComparison:
    """first_mismatch and equality"""

    def test_first_mismatch(self):
        f = series({0: 1, 3: 2, 5: 1}, order=10)
        g = series({0: 1, 3: 2, 5: 4}, order=10)

        e, c_f, c_g = f.first_mismatch(g)

        assert e == 5
        assert c_f == 1
        assert c_g == 4

    def test_mismatch_limited_by_order(self):
        """Differences past the shared order are not reported"""
        f = series({0: 1, 7: 1}, order=10)
        g = series({0: 1}, order=6)

        assert f.first_mismatch(g) is None
        assert f.agrees_with(g)


class TestTextFormat:
    """The exchange format '# qseries order=N' followed by 'num/den : coef' lines"""

    def test_to_text(self):
        f = series({0: 1, 2: -3}, order=4)

        text = f.to_text()

        assert text.splitlines()[0] == "# qseries order=4"
        assert "0/1 : 1" in text
        assert "2/1 : -3" in text

    def test_round_trip_with_parameters(self):
        f = QSeries.one() + QSeries.monomial(Fraction(1, 2), Fraction(3, 2), mono({"a": 2}), order=5)

        g = QSeries.from_text(f.to_text())

        assert g == f

    def test_bad_line(self):
        with pytest.raises(NotationError):
            QSeries.from_text("# qseries order=3\n1/1 2\n")


class TestCycloRat:
    """Exact arithmetic in cyclotomic fields"""

    def test_i_squared(self):
        i = CycloRat.zeta(4)

        assert i * i == -1

    def test_cube_root_identity(self):
        """1 + w + w^2 = 0 for a primitive cube root of unity"""
        w = CycloRat.zeta(3)

        assert 1 + w + w * w == 0

    def test_inverse(self):
        w = CycloRat.zeta(5, 2)

        assert w * w.inverse() == 1

    def test_rational_collapse(self):
        """Values that land in Q come back as plain rationals"""
        assert CycloRat.zeta(2) == -1
        assert isinstance(CycloRat.zeta(4, 2), int)


class TestZQSeries:
    """Laurent series in z and constant terms"""

    def test_constant_term_of_product(self):
        """CT[(1 + z)(1 + 1/z)] = 2"""
        one = QSeries.one().truncate(5)
        f = ZQSeries({0: one, 1: one}, 5)
        g = ZQSeries({0: one, -1: one}, 5)

        ct = zq_ct(f * g)

        assert ct.coefficient(0) == 2

    def test_window_miss(self):
        one = QSeries.one().truncate(5)
        f = ZQSeries({0: one}, 5, window=(-2, 2))

        with pytest.raises(WindowMiss):
            f.coefficient(3)


class TestRingLaws:
    """Ring axioms on random exact operands"""

    @pytest.mark.parametrize("seed", range(10))
    def test_coef_axioms(self, seed):
        rng = random.Random(seed)
        a, b, c = random_coef(rng), random_coef(rng), random_coef(rng)

        assert a + b == b + a
        assert a * b == b * a
        assert (a + b) + c == a + (b + c)
        assert (a * b) * c == a * (b * c)
        assert a * (b + c) == a * b + a * c
        assert a * Coef.scalar(1) == a
        assert not (a - a)

    @pytest.mark.parametrize("seed", range(10))
    def test_series_axioms(self, seed):
        rng = random.Random(seed)
        f, g, h = random_series(rng), random_series(rng), random_series(rng)

        assert f + g == g + f
        assert f * g == g * f
        assert (f + g) + h == f + (g + h)
        assert (f * g) * h == f * (g * h)
        assert f * (g + h) == f * g + f * h
        assert f * QSeries.one() == f
        assert (f - f).is_zero

    def test_qs_mul_matches_operator(self):
        rng = random.Random(7)
        f, g = random_series(rng).with_denom(2), random_series(rng).with_denom(2)

        assert qs_mul(f, g) == f * g


class TestInverseRoundTrip:
    """f * qs_inv(f) = 1 through the requested order"""

    @pytest.mark.parametrize("seed", range(200))
    def test_unit_series(self, seed):
        rng = random.Random(seed)
        units = [1, -1, 2, Fraction(1, 2), CycloRat.zeta(4), CycloRat.zeta(3)]
        coefficients = {0: rng.choice(units)}
        for _ in range(rng.randint(1, 6)):
            coefficients[rng.randint(1, 15)] = rng.choice(SCALARS)
        f = series(coefficients, order=rng.choice([None, 20, 25]))

        g = qs_inv(f, 20)

        assert (f * g).agrees_with(QSeries.one(), 20)
        assert (f * g).order >= 20


class TestRescaleRoundTrip:
    """q -> q^r followed by q -> q^(1/r) is the identity"""

    @pytest.mark.parametrize("r", [2, 3, Fraction(1, 2), Fraction(3, 2)])
    def test_round_trip(self, r):
        rng = random.Random(3)
        f = (random_series(rng) + QSeries.one()).truncate(10)

        back = qs_rescale(qs_rescale(f, r), 1 / Fraction(r))

        assert back == f
        assert back.order == 10


def random_zq(rng: random.Random, order: int = 10) -> ZQSeries:
    coeffs = {}
    for w in range(-3, 4):
        if rng.random() < 0.7:
            coeffs[w] = series({rng.randint(0, order): rng.choice(SCALARS)
                                for _ in range(rng.randint(1, 3))}, order)
    coeffs.setdefault(0, QSeries.one().truncate(order))
    return ZQSeries(coeffs, order)


class TestConstantTermLaws:
    """CT is linear and blind to z -> z^beta"""

    @pytest.mark.parametrize("seed", range(5))
    def test_linearity(self, seed):
        rng = random.Random(seed)
        f, g = random_zq(rng), random_zq(rng)
        c, d = 3, CycloRat.zeta(4)

        lhs = zq_ct(f.scale(c) + g.scale(d))
        rhs = zq_ct(f).scale(c) + zq_ct(g).scale(d)

        assert lhs.order == 10
        assert lhs.agrees_with(rhs, 10)

    @pytest.mark.parametrize("beta", [1, -1, 2, -2, 3])
    def test_shift_invariance(self, beta):
        rng = random.Random(beta + 10)
        f = random_zq(rng) * random_zq(rng)

        assert zq_ct(f.subst_z(beta)) == zq_ct(f)


class TestRequireOrder:
    """Guard against comparing a series past its known coefficients"""

    def test_short_series_raises(self):
        with pytest.raises(InsufficientPrecision):
            series({0: 1}, order=5).require_order(8, "left side")

    def test_exact_series_passes(self):
        f = series({0: 1, 3: 2})

        assert f.require_order(100) is f
