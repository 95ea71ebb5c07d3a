"""
Constant-term workbench.

A ``CtScript`` is a product of Euler factors (x z^s; q^d)_oo^(+-1) and Jacobi
triple product kernels in one auxiliary variable z.  ``run_ct`` expands every
factor as a Laurent series in z with complete windows, multiplies them and
extracts the z^0 coefficient; ``check_ct_equals_sum`` compares the result with
the sum sides it is meant to reproduce.
"""
import logging
import math
import time
from fractions import Fraction
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, field_validator

from errors import NonTruncating, SchemaError
from notation import parse_arg, parse_scalar
from products import ProductExpr, RhsExpr, eval_product, eval_rhs
from qfactors import apply_pochhammer, jtp_kernel, standard_arg
from qseries import INF, QSeries, ZQSeries, mono_pow, scalar_pow, zq_ct
from summation import MultiSumSpec, eval_multisum

logger = logging.getLogger(__name__)

FactorKind = Literal["euler", "euler_inverse", "jtp"]


class CtFactor(BaseModel):
    """One factor in z.

    ``euler``:         (x z^s; q^d)_oo     = sum_n (-1)^n q^(d n(n-1)/2) x^n z^(sn) / (q^d;q^d)_n
    ``euler_inverse``: 1/(x z^s; q^d)_oo   = sum_n x^n z^(sn) / (q^d;q^d)_n
    ``jtp``:           sum_n (-1)^n q^(d(n^2-n)/2) (x z^s)^n over all integers n

    with x = coefficient * params * q^offset.  ``terms`` caps n for an inverse
    Euler factor whose terms do not grow in q.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: FactorKind
    coefficient: Any = 1
    params: Tuple[Tuple[str, int], ...] = ()
    offset: Fraction = Fraction(0)
    base: Fraction = Fraction(1)
    z_power: int = 1
    power: int = 1
    terms: Optional[int] = None

    @field_validator("offset", "base", mode="before")
    @classmethod
    def _to_fraction(cls, value):
        return value if isinstance(value, Fraction) else Fraction(value)

    @field_validator("z_power")
    @classmethod
    def _nonzero_z(cls, value):
        if value == 0:
            raise ValueError("a factor in z needs a nonzero z-power")
        return value

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CtFactor":
        """Build from a proof-annex entry such as {"kind": "euler", "arg": "-q^(3/2)", "z": 1}."""
        data = dict(data)
        arg = data.pop("arg", "1")
        coefficient, params, exponent = parse_arg(str(arg))
        try:
            offset = Fraction(exponent) if exponent not in ("", None) else Fraction(0)
        except ValueError:
            raise SchemaError(f"factor argument {arg!r} must have a constant q-exponent")
        return cls(kind=data.pop("kind"), coefficient=coefficient, params=params, offset=offset,
                   base=Fraction(str(data.pop("base", 1))), z_power=int(data.pop("z", 1)),
                   power=int(data.pop("power", 1)), terms=data.pop("terms", None), **data)

    def exponent(self, n: int) -> Fraction:
        """q-exponent of the n-th term."""
        if self.kind == "euler_inverse":
            return self.offset * n
        return self.base * n * (n - 1) / 2 + self.offset * n

    def index_range(self, order: Fraction, max_degree: Optional[int]) -> Tuple[int, Optional[int]]:
        """(first, last) term indices that can reach ``order``; last None means unbounded above."""
        last = None
        if self.params and max_degree is not None:
            last = max_degree // max(k for _, k in self.params)
        if self.terms is not None:
            last = self.terms if last is None else min(last, self.terms)
        if self.kind == "euler_inverse":
            if self.offset > 0:
                bound = math.floor(order / self.offset)
                last = bound if last is None else min(last, bound)
            if last is None:
                raise NonTruncating(f"1/({self.coefficient}*q^{self.offset} z^{self.z_power}; q^{self.base})_oo "
                                    f"has infinitely many terms at q^{order}")
            return 0, max(last, -1)
        return (None if self.kind == "jtp" else 0), last

    def valuation(self, max_degree: Optional[int] = None) -> Fraction:
        """Lower bound for the q-valuation of every z-coefficient."""
        if self.kind == "euler_inverse":
            if self.offset >= 0:
                return Fraction(0)
            _, last = self.index_range(Fraction(0), max_degree)
            return self.offset * last
        vertex = Fraction(1, 2) - self.offset / self.base
        candidates = {math.floor(vertex), math.ceil(vertex)}
        if self.kind == "euler":
            candidates = {max(n, 0) for n in candidates}
        return min(self.exponent(n) for n in candidates) * self.power


class CtScript(BaseModel):
    """scalar * prefactor * CT[prod factors], checked against ``targets`` + ``rhs``."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    factors: Tuple[CtFactor, ...]
    scalar: Any = 1
    prefactor: Optional[ProductExpr] = None
    targets: Tuple[MultiSumSpec, ...] = ()
    rhs: Optional[RhsExpr] = None
    param_degree: Optional[int] = None
    note: str = ""

    @classmethod
    def from_dict(cls, data: Dict[str, Any], targets: Tuple[MultiSumSpec, ...] = ()) -> "CtScript":
        try:
            factors = tuple(CtFactor.from_dict(f) for f in data["factors"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad constant-term script: {exc}")
        scalar = data.get("scalar", 1)
        if isinstance(scalar, str):
            scalar = parse_scalar(scalar)
        prefactor = data.get("prefactor")
        rhs = data.get("rhs")
        return cls(factors=factors, scalar=scalar,
                   prefactor=None if prefactor is None else ProductExpr.from_text(prefactor),
                   targets=targets, rhs=None if rhs is None else RhsExpr.from_text(rhs),
                   param_degree=data.get("param_degree"), note=data.get("note", ""))


class CtReport(BaseModel):
    """Result of comparing a constant-term script with its target."""

    model_config = ConfigDict(frozen=True)

    order: int
    passed: bool
    mismatch_exponent: Optional[str] = None
    expected: Optional[str] = None
    got: Optional[str] = None
    seconds: float = 0.0


def expand_factor(factor: CtFactor, order, max_degree: Optional[int] = None) -> ZQSeries:
    """The factor as a Laurent series in z, every coefficient exact to ``order``."""
    order = Fraction(order)
    if factor.kind == "jtp":
        if factor.params:
            raise SchemaError("a triple product kernel takes a scalar argument")
        series = jtp_kernel(order, factor.base, factor.coefficient, factor.z_power, factor.offset)
    else:
        series = _expand_euler(factor, order, max_degree)
    result = series
    for _ in range(factor.power - 1):
        result = result * series
    return result


def _expand_euler(factor: CtFactor, order: Fraction, max_degree: Optional[int]) -> ZQSeries:
    first, last = factor.index_range(order, max_degree)
    coeffs = {}
    n = first
    vertex = Fraction(1, 2) - factor.offset / factor.base
    while last is None or n <= last:
        e = factor.exponent(n)
        if e > order and (factor.kind == "euler_inverse" or n >= vertex):
            break
        if e <= order:
            c = scalar_pow(factor.coefficient, n)
            if factor.kind == "euler" and n % 2:
                c = -c
            term = QSeries.monomial(c, e, mono_pow(factor.params, n), order=order, max_degree=max_degree)
            term = apply_pochhammer(term, standard_arg(factor.base), n, -1)
            if not term.is_zero:
                coeffs[factor.z_power * n] = term
        n += 1
    window = (-INF, INF)
    span = None
    if factor.terms is not None and last == factor.terms and factor.kind == "euler_inverse" \
            and factor.offset <= 0 and not factor.params:
        # capped at n <= terms: complete only up to that z-power
        edge = factor.z_power * factor.terms
        window = (-INF, edge) if factor.z_power > 0 else (edge, INF)
        span = (0, INF) if factor.z_power > 0 else (-INF, 0)
    return ZQSeries(coeffs, order, window, span, factor.valuation(max_degree))


def run_ct(script: CtScript, order) -> QSeries:
    """scalar * prefactor * CT[...] exact to ``order``."""
    order = Fraction(order)
    m = script.param_degree
    vals = [f.valuation(m) for f in script.factors]
    v_pref = Fraction(0)
    if script.prefactor is not None:
        v_pref = script.prefactor.valuation(m)
        if v_pref is None:
            return QSeries.zero(order)
    ct_order = order - min(v_pref, Fraction(0))
    product = None
    for i, factor in enumerate(script.factors):
        raise_by = sum(min(v, Fraction(0)) for j, v in enumerate(vals) if j != i)
        series = expand_factor(factor, ct_order - raise_by, m)
        product = series if product is None else product * series
        logger.debug(f"factor {i}: {len(series.items())} z-powers, window {product.window}")
    ct = zq_ct(product).truncate(ct_order).scale(script.scalar) if product is not None \
        else QSeries.one().truncate(ct_order).scale(script.scalar)
    if script.prefactor is None:
        return ct.truncate(order)
    if ct.is_zero:
        return QSeries.zero(order)
    pref = eval_product(script.prefactor, order - ct.valuation, m)
    return (ct * pref).truncate(order)


def ct_target(script: CtScript, order) -> QSeries:
    total = QSeries.zero(Fraction(order))
    for spec in script.targets:
        total = total + eval_multisum(spec, order, script.param_degree)
    if script.rhs is not None:
        total = total + eval_rhs(script.rhs, order, script.param_degree)
    return total


def check_ct_equals_sum(script: CtScript, order) -> CtReport:
    """Compare run_ct with the script's targets to ``order``."""
    start = time.perf_counter()
    got = run_ct(script, order).require_order(order, "constant term")
    expected = ct_target(script, order).require_order(order, "target")
    mismatch = got.first_mismatch(expected, Fraction(order))
    elapsed = time.perf_counter() - start
    if mismatch is None:
        return CtReport(order=int(order), passed=True, seconds=elapsed)
    e, c_got, c_expected = mismatch
    logger.info(f"constant term differs from target at q^{e}: {c_got.to_text()} vs {c_expected.to_text()}")
    return CtReport(order=int(order), passed=False, mismatch_exponent=str(e),
                    expected=c_expected.to_text(), got=c_got.to_text(), seconds=elapsed)
