"""
Tests for the constant-term workbench and the catalog's proof scripts.
"""
from fractions import Fraction

import pytest

from catalog import load_catalog, replay_proofs
from ctkit import CtFactor, CtScript, check_ct_equals_sum, expand_factor, run_ct
from errors import NonTruncating, SchemaError
from products import RhsExpr, product_series
from qfactors import jtp_kernel
from qseries import QSeries
from summation import build_spec


class TestCtFactor:
    """Factor parsing and expansion"""

    def test_from_dict(self):
        factor = CtFactor.from_dict({"kind": "euler", "arg": "-q^(3/2)", "base": 1, "z": 1})

        assert factor.kind == "euler"
        assert factor.coefficient == -1
        assert factor.offset == Fraction(3, 2)
        assert factor.z_power == 1

    def test_euler_inverse_coefficients(self):
        """1/(q z; q)_oo has z^n coefficient q^n/(q;q)_n"""
        factor = CtFactor.from_dict({"kind": "euler_inverse", "arg": "q"})

        series = expand_factor(factor, 10)

        assert series.coefficient(0).coefficient_list(3) == [1, 0, 0, 0]
        assert series.coefficient(2).coefficient_list(5) == [0, 0, 1, 1, 2, 2]

    def test_euler_coefficients(self):
        """(z; q)_oo has z^1 coefficient -1/(1-q)"""
        factor = CtFactor.from_dict({"kind": "euler", "arg": "1"})

        series = expand_factor(factor, 6)

        assert series.coefficient(1).coefficient_list(3) == [-1, -1, -1, -1]

    def test_unbounded_inverse_factor(self):
        """1/(z; q)_oo has infinitely many terms at q^0"""
        factor = CtFactor.from_dict({"kind": "euler_inverse", "arg": "1"})

        with pytest.raises(NonTruncating):
            expand_factor(factor, 10)

    def test_zero_z_power(self):
        with pytest.raises(SchemaError):
            CtScript.from_dict({"factors": [{"kind": "euler", "arg": "q", "z": 0}]})

    def test_missing_factors(self):
        with pytest.raises(SchemaError):
            CtScript.from_dict({"scalar": 1})


class TestRunCt:
    """Constant terms of small scripts"""

    @pytest.fixture
    def script(self):
        """CT[1/(qz;q)_oo 1/(q/z;q)_oo] = sum q^(2n)/(q;q)_n^2"""
        target = build_spec("n", "2*n", factors=["1/(q;q)_n"])
        return CtScript.from_dict({"factors": [{"kind": "euler_inverse", "arg": "q", "z": 1},
                                               {"kind": "euler_inverse", "arg": "q", "z": -1}]},
                                  targets=(target,))

    def test_matches_sum(self, script):
        report = check_ct_equals_sum(script, 30)

        assert report.passed
        assert report.order == 30
        assert report.mismatch_exponent is None

    def test_scalar(self, script):
        doubled = script.model_copy(update={"scalar": 2})

        assert run_ct(doubled, 20) == run_ct(script, 20).scale(2)

    def test_mismatch_reported(self, script):
        wrong = script.model_copy(update={"targets": (build_spec("n", "2*n+1", factors=["1/(q;q)_n"]),)})

        report = check_ct_equals_sum(wrong, 20)

        assert not report.passed
        assert report.mismatch_exponent == "0"
        assert report.got == "1"
        assert report.expected == "0"

    def test_product_target(self):
        """The constant term of the triple product kernel is its n=0 term"""
        script = CtScript.from_dict({"factors": [{"kind": "jtp", "arg": "1"}],
                                     "rhs": "1"})

        report = check_ct_equals_sum(script, 20)

        assert report.passed

    def test_rhs_target(self):
        """A script can be compared with a product side instead of a sum"""
        script = CtScript.from_dict({
            "factors": [{"kind": "euler_inverse", "arg": "q", "z": 1},
                        {"kind": "euler_inverse", "arg": "q", "z": -1}],
            "rhs": "1/(q;q)_oo",
        })

        # sum q^(2n)/(q;q)_n^2 differs from 1/(q;q)_oo at q^1
        report = check_ct_equals_sum(script, 10)

        assert not report.passed
        assert report.mismatch_exponent == "1"


class TestCatalogScripts:
    """Every proof script shipped with the catalog reproduces its sum side"""

    ORDER = 30

    @pytest.fixture(scope="class")
    def records(self):
        return [r for r in load_catalog() if r.proofs]

    def test_enough_scripts(self, records):
        assert sum(len(r.proofs) for r in records) >= 12

    def test_scripts_pass(self, records):
        failures = []
        for record in records:
            for i, report in enumerate(replay_proofs(record, self.ORDER)):
                if not report.passed:
                    failures.append(f"{record.id}[{i}] at q^{report.mismatch_exponent}")

        assert failures == []


def theta_at_one(order, base, coefficient=1) -> QSeries:
    """The triple product kernel summed over all z-powers (z -> 1)"""
    total = QSeries.zero(order)
    for _, f in jtp_kernel(order, base=base, coefficient=coefficient).items():
        total = total + f
    return total


def binom2(n: int) -> int:
    return n * (n - 1) // 2


class TestBilateralFolding:
    """sum_{k>=0} sum_{i in Z} (-1)^k q^(C(i,2)+(alpha-1)C(i+k,2)) folds to half a bilateral sum"""

    PRODUCTS = {1: "(q^2;q^2)_oo^2/(q;q)_oo",
                2: "(q^4;q^4)_oo^2/(q^2;q^2)_oo",
                3: "(q^6;q^6)_oo^2/(q^3;q^3)_oo"}

    @pytest.mark.parametrize("alpha", [1, 2, 3])
    def test_half_bilateral_is_product(self, alpha):
        """(1/2)(sum_{i,j} (-1)^(i+j) q^(C(i,2)+(alpha-1)C(j,2)) + sum_i q^(alpha C(i,2)))"""
        alternating = theta_at_one(30, 1)
        diagonal = theta_at_one(30, alpha, coefficient=-1)
        # the i-sum cancels in pairs i <-> 1-i, so the j-sum never matters
        assert alternating.is_zero
        bilateral = alternating * theta_at_one(30, alpha - 1) if alpha > 1 else alternating

        folded = (bilateral + diagonal).scale(Fraction(1, 2))

        assert folded.agrees_with(product_series(self.PRODUCTS[alpha], 30), 30)

    @pytest.mark.parametrize("alpha", [2, 3])
    def test_one_sided_sum(self, alpha):
        terms = {}
        for i in range(-8, 10):
            for k in range(0, 20):
                e = binom2(i) + (alpha - 1) * binom2(i + k)
                if e <= 30:
                    terms[e] = terms.get(e, 0) + (-1) ** k
        one_sided = QSeries.from_coefficients(terms, 30)

        assert one_sided.agrees_with(product_series(self.PRODUCTS[alpha], 30), 30)
