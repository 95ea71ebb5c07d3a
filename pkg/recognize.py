"""
Product recognition for truncated q-series.

``prodmake`` recovers the exponents a_n of q^C * prod_n (1 - q^n)^(a_n) from the
first coefficients of a series, ``detect_period`` looks for an eventually
periodic exponent sequence and ``render`` turns the result back into a product
expression.
"""
import logging
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict
from sympy import divisors

from errors import BadParameters, FractionalExponent, LeadingUnit, NonIntegerExponent
from products import ProductExpr, ProductFactor, RhsExpr
from qfactors import PochArg
from qseries import QSeries

logger = logging.getLogger(__name__)

MIN_WINDOW = 32


class RecognizedProduct(BaseModel):
    """Exponent data of q^shift * prod_{n=1..L} (1 - q^n)^(a_n)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    shift: Fraction = Fraction(0)
    exponents: Tuple[int, ...]
    period: Optional[int] = None
    window: int = 0

    @property
    def length(self) -> int:
        return len(self.exponents)

    def a(self, n: int) -> int:
        """a_n, 1-based."""
        return self.exponents[n - 1]

    def is_modular(self) -> bool:
        return self.period is not None


def _rational_coefficients(f: QSeries, length: int) -> List[Fraction]:
    out = []
    for e in range(length + 1):
        c = f.coefficient(e)
        if not c.is_scalar():
            raise BadParameters(f"prodmake needs a series without parameters, q^{e} has {c.to_text()}")
        value = c.constant()
        if not isinstance(value, (int, Fraction)):
            raise BadParameters(f"prodmake needs rational coefficients, q^{e} has {c.to_text()}")
        out.append(Fraction(value))
    return out


def prodmake(f: QSeries, length: int) -> RecognizedProduct:
    """Exponents a_1..a_length with prod (1 - q^n)^(a_n) = q^(-C) f up to q^length.

    Uses the logarithmic derivative: with g = q f'/f one has
    [q^k] g = -sum_{d | k} d a_d.
    """
    if f.is_zero:
        raise BadParameters("prodmake of the zero series")
    shift = f.valuation
    g = f.shift(-shift)
    if g.order is not None and g.order < length:
        raise BadParameters(f"series is known to q^{g.order}, prodmake needs q^{length}")
    for e, _ in g.items():
        if e.denominator != 1:
            raise FractionalExponent(f"prodmake needs integer exponents after removing q^{shift}, found q^{e}")
        if e > length:
            break
    b = _rational_coefficients(g, length)
    if b[0] != 1:
        raise LeadingUnit(b[0])
    # log-derivative coefficients: k b_k = sum_{j=1..k} logd_j b_{k-j}
    logd = [Fraction(0)] * (length + 1)
    a = [Fraction(0)] * (length + 1)
    for k in range(1, length + 1):
        total = k * b[k]
        for j in range(1, k):
            if b[k - j]:
                total -= logd[j] * b[k - j]
        logd[k] = total
        inner = logd[k]
        for d in divisors(k)[:-1]:
            inner += d * a[d]
        a_k = -inner / k
        if a_k.denominator != 1:
            raise NonIntegerExponent(k, a_k)
        a[k] = a_k
    return RecognizedProduct(shift=shift, exponents=tuple(int(x) for x in a[1:]))


def detect_period(a: Sequence[int], max_period: int, window: Optional[int] = None) -> Optional[int]:
    """Smallest P <= max_period with a_(n+P) = a_n across the last ``window`` entries."""
    if window is None:
        window = max(2 * max_period, MIN_WINDOW)
    tail = list(a)[-window:]
    for p in range(1, max_period + 1):
        if len(tail) < 2 * p:
            break
        if all(tail[i + p] == tail[i] for i in range(len(tail) - p)):
            return p
    return None


def _periodic_start(a: Sequence[int], period: int) -> int:
    """First 1-based index from which a is periodic."""
    start = len(a) - period
    while start >= 1 and a[start - 1] == a[start - 1 + period]:
        start -= 1
    return start + 1


def render(rp: RecognizedProduct) -> RhsExpr:
    """Product expression for the recognized exponents.

    The periodic tail becomes grouped (q^r, ...; q^P)_oo factors, earlier
    entries become finite corrections (1 - q^n)^k.  Without a period every
    entry is a finite factor.
    """
    a = list(rp.exponents)
    factors: List[ProductFactor] = []
    head_end = len(a)
    pattern = {}
    if rp.period is not None:
        p = rp.period
        start = _periodic_start(a, p)
        head_end = start - 1
        for n in range(start, start + p):
            r = n % p or p
            pattern[r] = a[n - 1]
        for power in sorted({v for v in pattern.values() if v}, reverse=True):
            for r in range(1, p + 1):
                if pattern[r] == power:
                    factors.append(ProductFactor(arg=PochArg(offset=r, base=p), n=None, power=power))
    for n in range(1, head_end + 1):
        expected = pattern.get(n % rp.period or rp.period, 0) if rp.period else 0
        correction = a[n - 1] - expected
        if correction:
            factors.append(ProductFactor(arg=PochArg(offset=n, base=1), n=1, power=correction))
    return RhsExpr.single(ProductExpr(shift=rp.shift, factors=tuple(factors)))


def recognize(f: QSeries, length: int, max_period: int, window: Optional[int] = None) -> Tuple[RecognizedProduct, Optional[RhsExpr]]:
    """prodmake + detect_period + render; the product is None when no period shows."""
    rp = prodmake(f, length)
    w = window if window is not None else max(2 * max_period, MIN_WINDOW)
    period = detect_period(rp.exponents, max_period, w)
    rp = rp.model_copy(update={"period": period, "window": w})
    if period is None:
        logger.debug(f"no period <= {max_period} in the last {w} exponents")
        return rp, None
    return rp, render(rp)
