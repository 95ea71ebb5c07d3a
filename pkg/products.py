"""
Product sides: weighted sums of generalized eta-type products.
"""
import logging
from fractions import Fraction
from typing import Any, Optional, Tuple

from pydantic import BaseModel, ConfigDict, field_validator

from errors import NotationError
from notation import TermSpec, join_terms, parse_rhs, render_term
from qfactors import PochArg, apply_pochhammer, factor_valuation
from qseries import QSeries, mono_mul

logger = logging.getLogger(__name__)


class ProductFactor(BaseModel):
    """(arg; q^base)_n raised to ``power``; ``n=None`` is the infinite product."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    arg: PochArg
    n: Optional[int] = None
    power: int = 1

    def valuation(self, max_degree: Optional[int] = None):
        return factor_valuation(self.arg, self.n, self.power, max_degree)


class ProductExpr(BaseModel):
    """scalar * params * q^shift * prod(factors)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    scalar: Any = 1
    params: Tuple[Tuple[str, int], ...] = ()
    shift: Fraction = Fraction(0)
    factors: Tuple[ProductFactor, ...] = ()

    @field_validator("shift", mode="before")
    @classmethod
    def _to_fraction(cls, value):
        return value if isinstance(value, Fraction) else Fraction(value)

    @classmethod
    def from_term(cls, term: TermSpec) -> "ProductExpr":
        factors = []
        for spec in term.factors:
            if spec.is_infinite:
                n = None
            else:
                try:
                    n = int(spec.subscript)
                except ValueError:
                    raise NotationError(spec.subscript, 0, "product subscripts must be integers or oo")
            factors.append(ProductFactor(arg=spec.constant_arg(), n=n, power=spec.power))
        try:
            shift = Fraction(term.shift)
        except ValueError:
            raise NotationError(term.shift, 0, "prefactor exponent must be a constant")
        return cls(scalar=term.scalar, params=term.params, shift=shift, factors=tuple(factors))

    @classmethod
    def from_text(cls, text: str) -> "ProductExpr":
        terms = parse_rhs(text)
        if len(terms) != 1:
            raise NotationError(text, 0, "expected a single product term")
        return cls.from_term(terms[0])

    def __mul__(self, other: "ProductExpr") -> "ProductExpr":
        return ProductExpr(scalar=self.scalar * other.scalar,
                           params=mono_mul(self.params, other.params),
                           shift=self.shift + other.shift,
                           factors=self.factors + other.factors)

    def scaled(self, c) -> "ProductExpr":
        return self.model_copy(update={"scalar": self.scalar * c})

    def valuation(self, max_degree: Optional[int] = None):
        """Lower bound for the q-valuation; None when the product vanishes."""
        total = self.shift
        for factor in self.factors:
            v = factor.valuation(max_degree)
            if v is None:
                return None
            total += v
        return total

    def to_text(self) -> str:
        return render_term(self.scalar, self.params, self.shift,
                           [(f.arg, f.n, f.power) for f in self.factors])

    def __str__(self):
        return self.to_text()


class RhsExpr(BaseModel):
    """Sum of product terms."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    terms: Tuple[ProductExpr, ...]

    @field_validator("terms")
    @classmethod
    def _nonempty(cls, value):
        if not value:
            raise ValueError("a product side needs at least one term")
        return value

    @classmethod
    def from_text(cls, text: str) -> "RhsExpr":
        return cls(terms=tuple(ProductExpr.from_term(t) for t in parse_rhs(text)))

    @classmethod
    def single(cls, product: ProductExpr) -> "RhsExpr":
        return cls(terms=(product,))

    def to_text(self) -> str:
        return join_terms([t.to_text() for t in self.terms])

    def __str__(self):
        return self.to_text()


def eval_product(p: ProductExpr, order, max_degree: Optional[int] = None) -> QSeries:
    """Expand a product to ``order`` (parameter degree <= ``max_degree``).

    Each factor is applied at a working order raised by the negative
    valuations of the others, so the result is exact up to ``order``.
    """
    order = Fraction(order)
    if not p.scalar:
        return QSeries.zero(order)
    total = Fraction(0)
    for factor in p.factors:
        v = factor.valuation(max_degree)
        if v is None:
            return QSeries.zero(order)
        total += v
    working = order - total
    f = QSeries.monomial(p.scalar, p.shift, p.params, order=working, max_degree=max_degree)
    if f.is_zero:
        return QSeries.zero(order)
    for factor in p.factors:
        f = apply_pochhammer(f, factor.arg, factor.n, factor.power)
        if f.is_zero:
            return QSeries.zero(order)
    if working != order:
        logger.debug(f"{p.to_text()}: working order {working} for target {order}")
    return f.truncate(order)


def eval_rhs(r: RhsExpr, order, max_degree: Optional[int] = None) -> QSeries:
    total = QSeries.zero(Fraction(order))
    for term in r.terms:
        total = total + eval_product(term, order, max_degree)
    return total


def product_series(text: str, order, max_degree: Optional[int] = None) -> QSeries:
    """Shorthand: parse and expand a product-side expression."""
    return eval_rhs(RhsExpr.from_text(text), order, max_degree)
