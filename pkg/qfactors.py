"""
q-Pochhammer symbols, Gaussian binomials, Rogers-Szego polynomials and the
Jacobi triple product kernel.
"""
import math
import logging
from fractions import Fraction
from functools import lru_cache
from typing import Any, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, field_validator

from errors import NonTruncating, PoleAtNegativeIndex
from qseries import (
    ONE_MONO,
    Monomial,
    QSeries,
    ZQSeries,
    min_order,
    mono_pow,
    scalar_pow,
)

logger = logging.getLogger(__name__)


class PochArg(BaseModel):
    """First argument ``coefficient * params * q^offset`` of ``(.; q^base)``."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    coefficient: Any = 1
    params: Tuple[Tuple[str, int], ...] = ()
    offset: Fraction = Fraction(0)
    base: Fraction = Fraction(1)

    @field_validator("offset", "base", mode="before")
    @classmethod
    def _to_fraction(cls, value):
        return value if isinstance(value, Fraction) else Fraction(value)

    @field_validator("base")
    @classmethod
    def _positive_base(cls, value):
        if value <= 0:
            raise ValueError(f"Pochhammer base must be positive, got q^{value}")
        return value

    def exponent(self, j: int) -> Fraction:
        """q-exponent of the j-th factor (1 - arg * q^(base*j))."""
        return self.offset + self.base * j

    def shifted(self, k) -> "PochArg":
        """The argument multiplied by q^(base*k)."""
        return self.model_copy(update={"offset": self.offset + self.base * k})

    @property
    def is_graded(self) -> bool:
        return bool(self.params)

    def vanishes_at(self, j: int) -> bool:
        """True when the j-th factor is identically 0."""
        return not self.params and self.exponent(j) == 0 and self.coefficient == 1


def standard_arg(base) -> PochArg:
    """Argument of (q^d; q^d)."""
    return PochArg(offset=base, base=base)


# ---------------------------------------------------------------------------
# Factor lists and valuations
# ---------------------------------------------------------------------------

def _factor_indices(arg: PochArg, n: Optional[int], horizon: Optional[Fraction]) -> Tuple[List[int], int]:
    """Indices j of the binomials (1 - arg q^(base*j)) and the power sign.

    Returns (indices, sign) where sign is +1 for numerator factors and -1 when
    a negative subscript turns the symbol into a reciprocal.
    """
    if n is None:
        if horizon is None:
            raise NonTruncating("an infinite product needs a truncation order")
        last = math.floor((horizon - arg.offset) / arg.base)
        return list(range(0, max(last, -1) + 1)), 1
    if n >= 0:
        return list(range(n)), 1
    return list(range(n, 0)), -1


def _binomial_valuation(arg: PochArg, e: Fraction, power: int, max_degree: Optional[int]):
    """Lower bound for the valuation of (1 - arg q^e)^power; None for zero."""
    if power > 0:
        if arg.params:
            return power * min(Fraction(0), e)
        if e == 0:
            return None if arg.coefficient == 1 else Fraction(0)
        return power * min(Fraction(0), e)
    if arg.params:
        if e > 0:
            return Fraction(0)
        if max_degree is None:
            raise NonTruncating("parameter-graded reciprocal needs a parameter degree bound")
        steps = max_degree // max(k for _, k in arg.params)
        return -power * steps * e
    if e == 0:
        if arg.coefficient == 1:
            raise PoleAtNegativeIndex("reciprocal of the zero factor (1 - 1)")
        return Fraction(0)
    return -power * max(Fraction(0), -e)


def factor_valuation(arg: PochArg, n: Optional[int], power: int = 1,
                     max_degree: Optional[int] = None):
    """Lower bound for the q-valuation of (arg; q^base)_n^power.

    ``n=None`` denotes the infinite product.  Returns None when the symbol is
    identically zero.
    """
    if n is None:
        # only factors with a non-positive exponent can lower the valuation
        horizon = Fraction(0)
    else:
        horizon = None
    indices, sign = _factor_indices(arg, n, horizon)
    total = Fraction(0)
    for j in indices:
        v = _binomial_valuation(arg, arg.exponent(j), power * sign, max_degree)
        if v is None:
            return None
        total += v
    return total


def apply_pochhammer(f: QSeries, arg: PochArg, n: Optional[int], power: int = 1,
                     order=None) -> QSeries:
    """Multiply ``f`` by (arg; q^base)_n^power using one binomial step at a time.

    Negative ``n`` follows (a;q)_n = (a;q)_oo / (a q^n;q)_oo.  ``order`` caps
    the working order when ``f`` is exact and the symbol is infinite or a
    reciprocal.
    """
    if order is not None:
        f = f.truncate_to(min_order(f.order, Fraction(order)))
    if f.is_zero or power == 0:
        return f
    horizon = None
    if f.order is not None:
        horizon = f.order - f.valuation
    indices, sign = _factor_indices(arg, n, horizon)
    p = power * sign
    for j in indices:
        e = arg.exponent(j)
        if horizon is not None and e > horizon:
            continue
        if p > 0:
            if arg.vanishes_at(j):
                return QSeries.zero()
            for _ in range(p):
                f = f.mul_binomial(-arg.coefficient, e, arg.params)
        else:
            if arg.vanishes_at(j):
                raise PoleAtNegativeIndex(f"factor 1 - q^0 in the denominator of ({arg}; q^{arg.base})_{n}")
            for _ in range(-p):
                f = f.div_binomial(-arg.coefficient, e, arg.params, order)
        if f.is_zero:
            return f
    return f


def pochhammer(arg: PochArg, n: Optional[int], order=None, power: int = 1,
               max_degree: Optional[int] = None) -> QSeries:
    """(arg; q^base)_n^power truncated at ``order`` (exact when possible)."""
    v = factor_valuation(arg, n, power, max_degree)
    if v is None:
        return QSeries.zero()
    exact = n is not None and n >= 0 and power > 0
    if order is None:
        if not exact:
            raise NonTruncating(f"({arg}; q^{arg.base})_{n} needs a truncation order")
        return apply_pochhammer(QSeries.one().with_max_degree(max_degree), arg, n, power)
    order = Fraction(order)
    start = QSeries.one().with_max_degree(max_degree).truncate(order - v)
    return apply_pochhammer(start, arg, n, power).truncate(order)


def poch_finite(arg: PochArg, n: int, order=None, max_degree: Optional[int] = None) -> QSeries:
    """(arg; q^base)_n for any integer n."""
    if n < 0:
        for j in range(n, 0):
            if arg.vanishes_at(j):
                raise PoleAtNegativeIndex(f"({arg.coefficient}*q^{arg.offset}; q^{arg.base})_{n} has a zero factor")
    return pochhammer(arg, n, order, 1, max_degree)


def poch_inf(arg: PochArg, order, max_degree: Optional[int] = None) -> QSeries:
    """(arg; q^base)_oo truncated at ``order``."""
    if order is None:
        raise NonTruncating("an infinite product needs a truncation order")
    return pochhammer(arg, None, order, 1, max_degree)


# ---------------------------------------------------------------------------
# Gaussian binomials and Rogers-Szego polynomials
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _gauss_row(n: int) -> Tuple[Tuple[int, ...], ...]:
    """Coefficient lists of [n m]_q for m = 0..n (q-Pascal recurrence)."""
    if n == 0:
        return ((1,),)
    prev = _gauss_row(n - 1)
    row = []
    for m in range(n + 1):
        left = prev[m - 1] if m >= 1 else ()
        right = prev[m] if m <= n - 1 else ()
        size = max(len(left), len(right) + m)
        coeffs = [0] * size
        for i, c in enumerate(left):
            coeffs[i] += c
        for i, c in enumerate(right):
            coeffs[i + m] += c
        row.append(tuple(coeffs))
    return tuple(row)


def qbinom(n: int, m: int, base=1) -> QSeries:
    """Gaussian binomial [n m] in q^base; zero outside 0 <= m <= n."""
    if n < 0 or m < 0 or m > n:
        return QSeries.zero()
    for k in range(0, n + 1, 256):
        _gauss_row(k)  # warm the cache in steps to keep recursion shallow
    coeffs = _gauss_row(n)[m]
    base = Fraction(base)
    return QSeries.from_coefficients({base * i: c for i, c in enumerate(coeffs) if c})


def rogers_szego(n: int, coefficient=1, params: Monomial = ONE_MONO, exponent=0, base=1) -> QSeries:
    """H_n(t; q^base) = sum_j t^j [n j] with t = coefficient * params * q^exponent."""
    if n < 0:
        raise ValueError(f"Rogers-Szego index must be non-negative, got {n}")
    total = QSeries.zero()
    for j in range(n + 1):
        total = total + qbinom(n, j, base).mul_monomial(scalar_pow(coefficient, j),
                                                        Fraction(exponent) * j,
                                                        mono_pow(params, j))
    return total


# ---------------------------------------------------------------------------
# Jacobi triple product kernel
# ---------------------------------------------------------------------------

def jtp_kernel(order, base=1, coefficient=1, beta: int = 1, gamma=0) -> ZQSeries:
    """sum_n (-1)^n q^(base*(n^2-n)/2) (coefficient * z^beta * q^gamma)^n.

    Only the terms with q-exponent <= order are kept; they are all of them,
    so the window is unbounded.
    """
    order = Fraction(order)
    d = Fraction(base)
    gamma = Fraction(gamma)
    if beta == 0:
        raise ValueError("kernel substitution needs a nonzero z-power")

    def exponent(n: int) -> Fraction:
        return d * (n * n - n) / 2 + gamma * n

    vertex = math.ceil(Fraction(1, 2) - gamma / d)
    coeffs = {}
    for direction in (1, -1):
        n = vertex if direction == 1 else vertex - 1
        while True:
            e = exponent(n)
            if e > order and (n - vertex) * direction >= 0:
                break
            if e <= order:
                c = scalar_pow(coefficient, n) * (-1) ** (n % 2)
                coeffs[beta * n] = QSeries.monomial(c, e, order=order)
            n += direction
    return ZQSeries(coeffs, order)
