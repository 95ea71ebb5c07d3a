"""
Exact coefficient ring and truncated series arithmetic.

Scalars are ``int``, ``fractions.Fraction`` or :class:`CycloRat` (elements of a
cyclotomic field).  Coefficients are polynomials in named formal parameters
(:class:`Coef`).  :class:`QSeries` is a truncated Puiseux series in ``q`` and
:class:`ZQSeries` a Laurent series in the constant-term variable ``z`` whose
coefficients are ``QSeries``.
"""
import math
import re
import logging
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterator, Mapping, Optional, Tuple, Union

import sympy

from errors import (
    DenominatorMismatch,
    FractionalExponent,
    InsufficientPrecision,
    NonTruncating,
    NotInvertible,
    NotationError,
    WindowMiss,
)

logger = logging.getLogger(__name__)

Monomial = Tuple[Tuple[str, int], ...]
Bucket = Dict[Monomial, object]

ONE_MONO: Monomial = ()
PARAM_LETTERS = "abcdefghijklmnoprstuvwxy"


# ---------------------------------------------------------------------------
# Parameter monomials
# ---------------------------------------------------------------------------

def mono(params: Optional[Mapping[str, int]] = None) -> Monomial:
    """Build a monomial from a mapping of parameter names to exponents."""
    if not params:
        return ONE_MONO
    items = []
    for name, k in params.items():
        if k < 0:
            raise ValueError(f"negative parameter exponent {name}^{k}")
        if k:
            items.append((name, int(k)))
    return tuple(sorted(items))


def mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    if not m1:
        return m2
    if not m2:
        return m1
    merged = dict(m1)
    for name, k in m2:
        merged[name] = merged.get(name, 0) + k
    return tuple(sorted(merged.items()))


def mono_pow(m: Monomial, n: int) -> Monomial:
    if n == 0 or not m:
        return ONE_MONO
    return tuple((name, k * n) for name, k in m)


def mono_exceeds(m: Monomial, bound: Optional[int]) -> bool:
    if bound is None:
        return False
    for _, k in m:
        if k > bound:
            return True
    return False


def mono_degree(m: Monomial, name: str) -> int:
    for other, k in m:
        if other == name:
            return k
    return 0


def mono_text(m: Monomial) -> str:
    return "*".join(name if k == 1 else f"{name}^{k}" for name, k in m)


# ---------------------------------------------------------------------------
# Cyclotomic rationals
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _cyclotomic_table(m: int):
    """Return (phi, ascending coefficients of Phi_m, reduced powers of x)."""
    if m < 1:
        raise ValueError(f"conductor must be positive, got {m}")
    x = sympy.Symbol("x")
    coeffs = [int(c) for c in sympy.Poly(sympy.cyclotomic_poly(m, x), x).all_coeffs()][::-1]
    phi = len(coeffs) - 1
    size = max(m, 2 * phi - 1)
    powers = []
    current = [0] * phi
    current[0] = 1
    for _ in range(size):
        powers.append(tuple(current))
        top = current[-1]
        current = [0] + current[:-1]
        if top:
            for j in range(phi):
                current[j] -= top * coeffs[j]
    return phi, tuple(coeffs), tuple(powers)


def _rational(value) -> Union[int, Fraction]:
    if isinstance(value, Fraction) and value.denominator == 1:
        return int(value.numerator)
    return value


def _is_rational(value) -> bool:
    return isinstance(value, (int, Fraction))


class CycloRat:
    """Element of Q(zeta_m) stored in the power basis modulo Phi_m.

    Instances are only created for genuinely irrational values; arithmetic
    that lands in Q returns ``int``/``Fraction`` instead.
    """

    __slots__ = ("conductor", "coords")

    def __init__(self, conductor: int, coords):
        phi = _cyclotomic_table(conductor)[0]
        coords = tuple(_rational(Fraction(c)) for c in coords)
        if len(coords) != phi:
            raise ValueError(f"conductor {conductor} needs {phi} coordinates, got {len(coords)}")
        self.conductor = conductor
        self.coords = coords

    @staticmethod
    def make(conductor: int, coords):
        """Build an element, collapsing rational values to int/Fraction."""
        coords = tuple(coords)
        if conductor == 1 or all(c == 0 for c in coords[1:]):
            return _rational(Fraction(coords[0]))
        return CycloRat(conductor, coords)

    @staticmethod
    def zeta(m: int, k: int = 1):
        """Return zeta_m^k."""
        _, _, powers = _cyclotomic_table(m)
        return CycloRat.make(m, powers[k % m])

    @staticmethod
    def _coords_in(value, conductor: int):
        phi, _, powers = _cyclotomic_table(conductor)
        if _is_rational(value):
            return [value] + [0] * (phi - 1)
        if value.conductor == conductor:
            return list(value.coords)
        if conductor % value.conductor:
            raise ValueError(f"cannot embed conductor {value.conductor} into {conductor}")
        step = conductor // value.conductor
        out = [0] * phi
        for j, c in enumerate(value.coords):
            if c:
                for i, p in enumerate(powers[j * step]):
                    if p:
                        out[i] += c * p
        return out

    @staticmethod
    def _common(a, b):
        ma = 1 if _is_rational(a) else a.conductor
        mb = 1 if _is_rational(b) else b.conductor
        m = ma * mb // math.gcd(ma, mb)
        return m, CycloRat._coords_in(a, m), CycloRat._coords_in(b, m)

    def __add__(self, other):
        if not (_is_rational(other) or isinstance(other, CycloRat)):
            return NotImplemented
        m, a, b = CycloRat._common(self, other)
        return CycloRat.make(m, [x + y for x, y in zip(a, b)])

    __radd__ = __add__

    def __neg__(self):
        return CycloRat(self.conductor, [-c for c in self.coords])

    def __sub__(self, other):
        if not (_is_rational(other) or isinstance(other, CycloRat)):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if _is_rational(other):
            if other == 0:
                return 0
            return CycloRat(self.conductor, [c * other for c in self.coords])
        if not isinstance(other, CycloRat):
            return NotImplemented
        m, a, b = CycloRat._common(self, other)
        phi, _, powers = _cyclotomic_table(m)
        conv = [0] * (2 * phi - 1)
        for i, x in enumerate(a):
            if x:
                for j, y in enumerate(b):
                    if y:
                        conv[i + j] += x * y
        out = [0] * phi
        for k, c in enumerate(conv):
            if c:
                for i, p in enumerate(powers[k]):
                    if p:
                        out[i] += c * p
        return CycloRat.make(m, out)

    __rmul__ = __mul__

    def inverse(self):
        """Inverse in Q(zeta_m) via the extended Euclidean algorithm against Phi_m."""
        if not self:
            raise NotInvertible("zero has no inverse")
        x = sympy.Symbol("x")
        poly = sum(sympy.Rational(c.numerator, c.denominator) * x**j
                   for j, c in enumerate(Fraction(c) for c in self.coords))
        inv = sympy.invert(poly, sympy.cyclotomic_poly(self.conductor, x), x)
        coeffs = sympy.Poly(inv, x, domain=sympy.QQ).all_coeffs()[::-1]
        phi = _cyclotomic_table(self.conductor)[0]
        coords = [Fraction(int(c.p), int(c.q)) for c in coeffs] + [0] * (phi - len(coeffs))
        return CycloRat.make(self.conductor, coords)

    def __truediv__(self, other):
        return self * scalar_inverse(other)

    def __rtruediv__(self, other):
        return other * self.inverse()

    def __pow__(self, n: int):
        if n < 0:
            return self.inverse() ** (-n)
        result, base = 1, self
        while n:
            if n & 1:
                result = base * result
            base = base * base
            n >>= 1
        return result

    def __eq__(self, other):
        if not (_is_rational(other) or isinstance(other, CycloRat)):
            return NotImplemented
        _, a, b = CycloRat._common(self, other)
        return a == b

    def __hash__(self):
        return hash((self.conductor, self.coords))

    def __bool__(self):
        return any(self.coords)

    def __repr__(self):
        return f"CycloRat({scalar_text(self)})"


Scalar = Union[int, Fraction, CycloRat]


def scalar_inverse(c):
    if isinstance(c, CycloRat):
        return c.inverse()
    if c == 0:
        raise NotInvertible("zero has no inverse")
    return _rational(Fraction(1) / c)


def scalar_pow(c, n: int):
    if n >= 0:
        return c ** n
    return scalar_inverse(c) ** (-n)


def scalar_conductor(c) -> int:
    return c.conductor if isinstance(c, CycloRat) else 1


def _rational_text(r) -> str:
    r = Fraction(r)
    return str(r.numerator) if r.denominator == 1 else f"{r.numerator}/{r.denominator}"


def _scalar_terms(c) -> Iterator[Tuple[Fraction, str]]:
    """Yield (rational, zeta-factor text) pairs of a scalar."""
    if isinstance(c, CycloRat):
        for j, r in enumerate(c.coords):
            if r:
                z = "" if j == 0 else (f"z{c.conductor}" if j == 1 else f"z{c.conductor}^{j}")
                yield Fraction(r), z
    elif c:
        yield Fraction(c), ""


def scalar_text(c) -> str:
    return _terms_text((r, z) for r, z in _scalar_terms(c)) or "0"


def _terms_text(pairs) -> str:
    out = []
    for r, rest in pairs:
        sign = "-" if r < 0 else "+"
        r = abs(r)
        if rest and r == 1:
            body = rest
        elif rest:
            body = f"{_rational_text(r)}*{rest}"
        else:
            body = _rational_text(r)
        if not out:
            out.append(body if sign == "+" else f"-{body}")
        else:
            out.append(f" {sign} {body}")
    return "".join(out)


# ---------------------------------------------------------------------------
# Coefficients: polynomials in parameters over Q(zeta_m)
# ---------------------------------------------------------------------------

class Coef:
    """Immutable polynomial in named parameters with cyclotomic-rational coefficients."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Optional[Mapping[Monomial, Scalar]] = None):
        self._terms = {m: c for m, c in (terms or {}).items() if c}

    @classmethod
    def scalar(cls, c) -> "Coef":
        return cls({ONE_MONO: c})

    def items(self):
        return self._terms.items()

    def terms(self) -> Dict[Monomial, Scalar]:
        return dict(self._terms)

    @property
    def degree(self) -> int:
        """Largest total parameter degree (0 for scalars, -1 for zero)."""
        if not self._terms:
            return -1
        return max(sum(k for _, k in m) for m in self._terms)

    def is_scalar(self) -> bool:
        return all(m == ONE_MONO for m in self._terms)

    def constant(self):
        return self._terms.get(ONE_MONO, 0)

    def __add__(self, other: "Coef") -> "Coef":
        out = dict(self._terms)
        for m, c in other.items():
            out[m] = out.get(m, 0) + c
        return Coef(out)

    def __neg__(self) -> "Coef":
        return Coef({m: -c for m, c in self._terms.items()})

    def __sub__(self, other: "Coef") -> "Coef":
        return self + (-other)

    def __mul__(self, other) -> "Coef":
        if not isinstance(other, Coef):
            return Coef({m: c * other for m, c in self._terms.items()})
        out: Dict[Monomial, Scalar] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other.items():
                m = mono_mul(m1, m2)
                out[m] = out.get(m, 0) + c1 * c2
        return Coef(out)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, Coef):
            return self._terms == other._terms
        if _is_rational(other) or isinstance(other, CycloRat):
            return self == Coef.scalar(other)
        return NotImplemented

    def __hash__(self):
        return hash(frozenset((m, str(c)) for m, c in self._terms.items()))

    def __bool__(self):
        return bool(self._terms)

    def to_text(self) -> str:
        pairs = []
        for m in sorted(self._terms, key=lambda m: (sum(k for _, k in m), m)):
            params = mono_text(m)
            for r, z in _scalar_terms(self._terms[m]):
                rest = "*".join(part for part in (z, params) if part)
                pairs.append((r, rest))
        return _terms_text(pairs) or "0"

    @classmethod
    def from_text(cls, text: str) -> "Coef":
        return cls(_parse_coef_terms(text))

    def __repr__(self):
        return f"Coef({self.to_text()})"


def coef_inv(c: Coef) -> Coef:
    """Inverse of a coefficient that is a nonzero scalar."""
    if not c or not c.is_scalar():
        raise NotInvertible(f"coefficient {c.to_text()} is not an invertible scalar")
    return Coef.scalar(scalar_inverse(c.constant()))


_COEF_TERM = re.compile(r"\s*([+-])?\s*([^+-]+)")
_ZETA_TOKEN = re.compile(r"^z(\d+)(?:\^(\d+))?$")
_PARAM_TOKEN = re.compile(rf"^([{PARAM_LETTERS}])(?:\^(\d+))?$")
_RATIONAL_TOKEN = re.compile(r"^\d+(?:/\d+)?$")


def _parse_coef_terms(text: str) -> Dict[Monomial, Scalar]:
    out: Dict[Monomial, Scalar] = {}
    stripped = text.strip()
    if stripped in ("", "0"):
        return out
    pos = 0
    while pos < len(stripped):
        match = _COEF_TERM.match(stripped, pos)
        if not match or match.end() == pos:
            raise NotationError(text, pos, "unexpected character")
        pos = match.end()
        value = Fraction(-1 if match.group(1) == "-" else 1)
        scalar = 1
        params: Dict[str, int] = {}
        for token in match.group(2).strip().split("*"):
            token = token.strip()
            if _RATIONAL_TOKEN.match(token):
                value *= Fraction(token)
            elif _ZETA_TOKEN.match(token):
                zm = _ZETA_TOKEN.match(token)
                scalar = scalar * CycloRat.zeta(int(zm.group(1)), int(zm.group(2) or 1))
            elif _PARAM_TOKEN.match(token):
                pm = _PARAM_TOKEN.match(token)
                params[pm.group(1)] = params.get(pm.group(1), 0) + int(pm.group(2) or 1)
            else:
                raise NotationError(text, pos, f"bad coefficient token {token!r}")
        m = mono(params)
        out[m] = out.get(m, 0) + _rational(value) * scalar
    return {m: c for m, c in out.items() if c}


# ---------------------------------------------------------------------------
# Truncation helpers
# ---------------------------------------------------------------------------

Order = Optional[Fraction]  # None stands for +infinity


def _as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _add_orders(x: Order, y: Order) -> Order:
    if x is None or y is None:
        return None
    return x + y


def min_order(*orders: Order) -> Order:
    finite = [o for o in orders if o is not None]
    return min(finite) if finite else None


def mul_order(n1: Order, v1: Order, n2: Order, v2: Order) -> Order:
    """Truncation order of a product: min(N1+v2, N2+v1, N1+N2)."""
    return min_order(_add_orders(n1, v2), _add_orders(n2, v1), _add_orders(n1, n2))


def _min_degree(a: Optional[int], b: Optional[int]) -> Optional[int]:
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def _limit(order: Order, denom: int) -> Optional[int]:
    return None if order is None else math.floor(order * denom)


# ---------------------------------------------------------------------------
# Truncated Puiseux series in q
# ---------------------------------------------------------------------------

class QSeries:
    """Truncated Puiseux series in q with parameter-polynomial coefficients.

    Exponents are stored scaled by ``denom``; coefficients are known exactly
    for every exponent ``<= order`` (``order=None`` means the series is exact).
    ``max_degree`` bounds each parameter's degree; monomials beyond it are
    dropped consistently by every operation.
    """

    __slots__ = ("_terms", "denom", "order", "max_degree")

    def __init__(self, terms: Optional[Mapping[int, Mapping[Monomial, Scalar]]] = None,
                 denom: int = 1, order=None, max_degree: Optional[int] = None):
        if denom < 1:
            raise ValueError(f"denominator must be positive, got {denom}")
        self.denom = denom
        self.order = None if order is None else _as_fraction(order)
        self.max_degree = max_degree
        limit = _limit(self.order, denom)
        clean: Dict[int, Bucket] = {}
        for k, bucket in (terms or {}).items():
            if limit is not None and k > limit:
                continue
            kept = {m: c for m, c in bucket.items() if c and not mono_exceeds(m, max_degree)}
            if kept:
                clean[k] = kept
        self._terms = clean

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, order=None) -> "QSeries":
        return cls({}, 1, order)

    @classmethod
    def one(cls) -> "QSeries":
        return cls({0: {ONE_MONO: 1}})

    @classmethod
    def monomial(cls, coefficient=1, exponent=0, params=None, order=None,
                 max_degree: Optional[int] = None) -> "QSeries":
        """c * q^exponent * params as a series (exact unless ``order`` given)."""
        e = _as_fraction(exponent)
        m = params if isinstance(params, tuple) else mono(params)
        return cls({e.numerator: {m: coefficient}}, e.denominator, order, max_degree)

    @classmethod
    def from_coefficients(cls, coefficients: Mapping, order=None,
                          max_degree: Optional[int] = None) -> "QSeries":
        """Build from a mapping exponent -> scalar or Coef."""
        exps = [_as_fraction(e) for e in coefficients]
        denom = 1
        for e in exps:
            denom = denom * e.denominator // math.gcd(denom, e.denominator)
        terms: Dict[int, Bucket] = {}
        for e, value in coefficients.items():
            k = int(_as_fraction(e) * denom)
            bucket = value.terms() if isinstance(value, Coef) else {ONE_MONO: value}
            terms[k] = bucket
        return cls(terms, denom, order, max_degree)

    # -- inspection -------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self._terms

    @property
    def valuation(self) -> Order:
        """Smallest exponent with a nonzero coefficient (None for zero)."""
        if not self._terms:
            return None
        return Fraction(min(self._terms), self.denom)

    @property
    def params(self) -> set:
        return {name for bucket in self._terms.values() for m in bucket for name, _ in m}

    @property
    def conductor(self) -> int:
        m = 1
        for bucket in self._terms.values():
            for c in bucket.values():
                k = scalar_conductor(c)
                m = m * k // math.gcd(m, k)
        return m

    def scaled_items(self):
        return self._terms.items()

    def items(self) -> Iterator[Tuple[Fraction, Coef]]:
        """Yield (exponent, coefficient) pairs by ascending exponent."""
        for k in sorted(self._terms):
            yield Fraction(k, self.denom), Coef(self._terms[k])

    def coefficient(self, exponent) -> Coef:
        e = _as_fraction(exponent)
        if self.order is not None and e > self.order:
            raise ValueError(f"q^{e} lies beyond the truncation order {self.order}")
        k = e * self.denom
        if k.denominator != 1:
            return Coef()
        return Coef(self._terms.get(int(k), {}))

    def coefficient_list(self, upto: int) -> list:
        """Scalar coefficients at q^0..q^upto (parameter-free integer series)."""
        return [self.coefficient(n).constant() for n in range(upto + 1)]

    # -- denominators -----------------------------------------------------

    def with_denom(self, denom: int) -> "QSeries":
        if denom == self.denom:
            return self
        if denom % self.denom:
            raise DenominatorMismatch(f"cannot move denominator {self.denom} to {denom}")
        step = denom // self.denom
        return QSeries({k * step: b for k, b in self._terms.items()}, denom, self.order, self.max_degree)

    def normalized(self) -> "QSeries":
        """Shrink the denominator to the smallest one that holds all exponents."""
        g = self.denom
        for k in self._terms:
            g = math.gcd(g, k)
            if g == 1:
                return self
        return QSeries({k // g: b for k, b in self._terms.items()}, self.denom // g,
                       self.order, self.max_degree)

    def _aligned(self, other: "QSeries"):
        d = self.denom * other.denom // math.gcd(self.denom, other.denom)
        return self.with_denom(d), other.with_denom(d)

    # -- ring operations --------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, QSeries):
            other = QSeries.monomial(other)
        a, b = self._aligned(other)
        terms = {k: dict(v) for k, v in a._terms.items()}
        for k, bucket in b._terms.items():
            target = terms.setdefault(k, {})
            for m, c in bucket.items():
                target[m] = target.get(m, 0) + c
        return QSeries(terms, a.denom, min_order(a.order, b.order),
                       _min_degree(a.max_degree, b.max_degree))

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        if not isinstance(other, QSeries):
            other = QSeries.monomial(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "QSeries":
        if not c:
            return QSeries.zero()
        return QSeries({k: {m: v * c for m, v in b.items()} for k, b in self._terms.items()},
                       self.denom, self.order, self.max_degree)

    def __mul__(self, other):
        if not isinstance(other, QSeries):
            return self.scale(other)
        a, b = self._aligned(other)
        order = mul_order(a.order, a.valuation, b.order, b.valuation)
        bound = _min_degree(a.max_degree, b.max_degree)
        limit = _limit(order, a.denom)
        right = sorted(b._terms.items())
        terms: Dict[int, Bucket] = {}
        for k1, b1 in a._terms.items():
            for k2, b2 in right:
                k = k1 + k2
                if limit is not None and k > limit:
                    break
                target = terms.setdefault(k, {})
                for m1, c1 in b1.items():
                    for m2, c2 in b2.items():
                        m = mono_mul(m1, m2)
                        if bound is not None and mono_exceeds(m, bound):
                            continue
                        target[m] = target.get(m, 0) + c1 * c2
        return QSeries(terms, a.denom, order, bound)

    __rmul__ = __mul__

    def truncate(self, order) -> "QSeries":
        return QSeries(self._terms, self.denom, min_order(self.order, _as_fraction(order)),
                       self.max_degree)

    def with_max_degree(self, bound: Optional[int]) -> "QSeries":
        return QSeries(self._terms, self.denom, self.order, _min_degree(self.max_degree, bound))

    # -- multiplication by simple factors ---------------------------------

    def mul_monomial(self, c, exponent=0, params: Monomial = ONE_MONO) -> "QSeries":
        """Multiply by c * q^exponent * params exactly."""
        e = _as_fraction(exponent)
        base = self.with_denom(self.denom * e.denominator // math.gcd(self.denom, e.denominator))
        s = int(e * base.denom)
        terms = {k + s: {mono_mul(m, params): v * c for m, v in b.items()}
                 for k, b in base._terms.items()}
        return QSeries(terms, base.denom, _add_orders(base.order, e), base.max_degree)

    def shift(self, exponent) -> "QSeries":
        return self.mul_monomial(1, exponent)

    def mul_binomial(self, c, exponent=0, params: Monomial = ONE_MONO) -> "QSeries":
        """Multiply by the exact binomial (1 + c * q^exponent * params)."""
        e = _as_fraction(exponent)
        if e == 0 and not params:
            return self.scale(1 + c)
        shifted = self.mul_monomial(c, e, params)
        if e < 0:
            return self.truncate_to(shifted.order) + shifted
        return self + QSeries(shifted._terms, shifted.denom, self.order, shifted.max_degree)

    def truncate_to(self, order: Order) -> "QSeries":
        return self if order is None else self.truncate(order)

    def div_binomial(self, c, exponent=0, params: Monomial = ONE_MONO, order=None) -> "QSeries":
        """Divide by (1 + c * q^exponent * params).

        ``order`` caps the result when the series itself is exact.
        """
        e = _as_fraction(exponent)
        target = min_order(self.order, None if order is None else _as_fraction(order))
        if not params:
            if e == 0:
                if 1 + c == 0:
                    raise NotInvertible("division by the zero factor (1 - 1)")
                return self.scale(scalar_inverse(1 + c))
            if e < 0:
                ci = scalar_inverse(c)
                return self.mul_monomial(ci, -e).div_binomial(ci, -e, ONE_MONO, order)
        if e > 0:
            if target is None:
                raise NonTruncating("dividing an exact series by a binomial needs a target order")
            return self._geometric_recurrence(c, e, params, target)
        # e <= 0 with parameters: finitely many geometric terms under the degree bound
        if self.max_degree is None:
            raise NonTruncating("parameter-graded division needs a parameter degree bound")
        steps = self.max_degree // max(k for _, k in params)
        result = self
        term = self
        for _ in range(steps):
            term = term.mul_monomial(-c, e, params)
            result = result + term
        if target is not None:
            result = result.truncate(target + steps * e)
        return result

    def _geometric_recurrence(self, c, e: Fraction, params: Monomial, target: Fraction) -> "QSeries":
        base = self.with_denom(self.denom * e.denominator // math.gcd(self.denom, e.denominator))
        s = int(e * base.denom)
        limit = _limit(target, base.denom)
        bound = base.max_degree
        out: Dict[int, Bucket] = {}
        if not base._terms:
            return QSeries({}, base.denom, target, bound)
        for k in range(min(base._terms), limit + 1):
            bucket = dict(base._terms.get(k, {}))
            prev = out.get(k - s)
            if prev:
                for m, v in prev.items():
                    m2 = mono_mul(m, params)
                    if bound is not None and mono_exceeds(m2, bound):
                        continue
                    bucket[m2] = bucket.get(m2, 0) - c * v
                bucket = {m: v for m, v in bucket.items() if v}
            if bucket:
                out[k] = bucket
        return QSeries(out, base.denom, target, bound)

    # -- inversion --------------------------------------------------------

    def inverse(self, order=None) -> "QSeries":
        """Multiplicative inverse; the valuation coefficient must be an invertible scalar."""
        if not self._terms:
            raise NotInvertible("the zero series has no inverse")
        k0 = min(self._terms)
        lead = self._terms[k0]
        v = Fraction(k0, self.denom)
        if self.order is None:
            if order is None:
                if len(self._terms) == 1 and len(lead) == 1 and ONE_MONO in lead:
                    return QSeries({-k0: {ONE_MONO: scalar_inverse(lead[ONE_MONO])}}, self.denom)
                raise NonTruncating("inverting an exact series needs a target order")
            target = _as_fraction(order)
        else:
            target = self.order - 2 * v
            if order is not None:
                target = min(target, _as_fraction(order))
        if ONE_MONO not in lead:
            raise NotInvertible("leading coefficient has no scalar part")
        c0 = lead[ONE_MONO]
        c0_inv = scalar_inverse(c0)
        if len(lead) > 1:
            return self._inverse_by_powers(k0, c0_inv, target)
        # normalized h = f / (c0 q^v) has constant term 1
        limit = math.floor((target + v) * self.denom)
        tail = sorted((k - k0, b) for k, b in self._terms.items() if k != k0)
        g: Dict[int, Bucket] = {0: {ONE_MONO: c0_inv}}
        bound = self.max_degree
        for k in range(1, limit + 1):
            acc: Bucket = {}
            for j, bj in tail:
                if j > k:
                    break
                prev = g.get(k - j)
                if not prev:
                    continue
                for m1, c1 in bj.items():
                    for m2, c2 in prev.items():
                        m = mono_mul(m1, m2)
                        if bound is not None and mono_exceeds(m, bound):
                            continue
                        acc[m] = acc.get(m, 0) + c1 * c2
            acc = {m: -x * c0_inv for m, x in acc.items() if x}
            if acc:
                g[k] = acc
        shifted = {k - k0: b for k, b in g.items()}
        return QSeries(shifted, self.denom, target, bound)

    def _inverse_by_powers(self, k0: int, c0_inv, target: Fraction) -> "QSeries":
        if self.max_degree is None:
            raise NonTruncating("inverting a parameter-led series needs a parameter degree bound")
        v = Fraction(k0, self.denom)
        h = self.mul_monomial(c0_inv, -v) - 1
        result = QSeries.one().truncate(target + v)
        power = QSeries.one()
        steps = math.floor((target + v) * self.denom) + 1 + len(h.params) * (self.max_degree + 1)
        for _ in range(steps):
            power = (power * (-h)).truncate(target + v)
            if power.is_zero:
                break
            result = result + power
        return result.mul_monomial(c0_inv, -v).with_max_degree(self.max_degree)

    # -- substitutions ----------------------------------------------------

    def rescale(self, r) -> "QSeries":
        """Substitute q -> q^r for a positive rational r."""
        r = _as_fraction(r)
        if r <= 0:
            raise ValueError(f"rescale factor must be positive, got {r}")
        terms = {k * r.numerator: b for k, b in self._terms.items()}
        order = None if self.order is None else self.order * r
        return QSeries(terms, self.denom * r.denominator, order, self.max_degree).normalized()

    def subst_sign(self) -> "QSeries":
        """Substitute q -> -q (integer exponents only)."""
        f = self.normalized()
        if f.denom != 1:
            raise FractionalExponent(f"q -> -q needs integer exponents, denominator is {f.denom}")
        terms = {k: ({m: -c for m, c in b.items()} if k % 2 else b) for k, b in f._terms.items()}
        return QSeries(terms, 1, f.order, f.max_degree)

    def subst_param(self, name: str, c, exponent=0) -> "QSeries":
        """Substitute parameter ``name`` -> c * q^exponent and re-tighten truncation."""
        e = _as_fraction(exponent)
        base = self.with_denom(self.denom * e.denominator // math.gcd(self.denom, e.denominator))
        s = int(e * base.denom)
        terms: Dict[int, Bucket] = {}
        top = 0
        for k, b in base._terms.items():
            for m, v in b.items():
                deg = mono_degree(m, name)
                top = max(top, deg)
                rest = tuple(p for p in m if p[0] != name)
                target = terms.setdefault(k + s * deg, {})
                target[rest] = target.get(rest, 0) + v * scalar_pow(c, deg)
        order = base.order
        if order is not None or base.max_degree is not None:
            cap = base.max_degree
            if e < 0:
                if cap is None:
                    raise NonTruncating(f"substituting {name} -> q^{e} needs a degree bound")
                order = _add_orders(order, e * cap)
            if cap is not None and base.valuation is not None:
                order = min_order(order, base.valuation + e * (cap + 1) - Fraction(1, base.denom))
        if order != base.order:
            logger.debug(f"substitution {name} -> q^{e} lowered the order to {order}")
        return QSeries(terms, base.denom, order, base.max_degree).normalized()

    # -- comparison -------------------------------------------------------

    def first_mismatch(self, other: "QSeries", upto=None):
        """Smallest exponent (<= upto) where the two series differ, with both coefficients."""
        a, b = self._aligned(other)
        limit = _limit(min_order(a.order, b.order, None if upto is None else _as_fraction(upto)), a.denom)
        for k in sorted(set(a._terms) | set(b._terms)):
            if limit is not None and k > limit:
                break
            ba, bb = a._terms.get(k, {}), b._terms.get(k, {})
            if ba != bb:
                return Fraction(k, a.denom), Coef(ba), Coef(bb)
        return None

    def require_order(self, order, what: str = "series") -> "QSeries":
        """Raise InsufficientPrecision unless coefficients are known through ``order``."""
        if self.order is not None and self.order < _as_fraction(order):
            raise InsufficientPrecision(f"{what} is only known to q^{self.order}, q^{order} was requested")
        return self

    def agrees_with(self, other: "QSeries", upto=None) -> bool:
        return self.first_mismatch(other, upto) is None

    def __eq__(self, other):
        if not isinstance(other, QSeries):
            return NotImplemented
        if self.order != other.order:
            return False
        a, b = self._aligned(other)
        return a._terms == b._terms

    def __hash__(self):
        return hash((self.order, len(self._terms)))

    # -- text format ------------------------------------------------------

    def to_text(self) -> str:
        order = "oo" if self.order is None else _rational_text(self.order)
        header = f"# qseries order={order}"
        if self.max_degree is not None:
            header += f" max_degree={self.max_degree}"
        lines = [header]
        for e, coef in self.items():
            lines.append(f"{e.numerator}/{e.denominator} : {coef.to_text()}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "QSeries":
        order = None
        max_degree = None
        coefficients: Dict[Fraction, Coef] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for field in line[1:].split():
                    if field.startswith("order="):
                        value = field.split("=", 1)[1]
                        order = None if value == "oo" else Fraction(value)
                    elif field.startswith("max_degree="):
                        max_degree = int(field.split("=", 1)[1])
                continue
            if ":" not in line:
                raise NotationError(text, lineno, "expected 'exponent : coefficient'")
            exp_text, coef_text = line.split(":", 1)
            coefficients[Fraction(exp_text.strip())] = Coef.from_text(coef_text)
        return cls.from_coefficients(coefficients, order, max_degree)

    def __repr__(self):
        parts = []
        for e, coef in self.items():
            text = coef.to_text()
            if e == 0:
                parts.append(text)
            else:
                power = "q" if e == 1 else f"q^{_rational_text(e)}"
                parts.append(power if text == "1" else f"({text})*{power}")
        if self.order is not None:
            parts.append(f"O(q^{_rational_text(self.order)})")
        return " + ".join(parts) or "0"


def qs_mul(f: QSeries, g: QSeries) -> QSeries:
    """Product of two series sharing a denominator."""
    if f.denom != g.denom:
        raise DenominatorMismatch(f"denominators {f.denom} and {g.denom} differ; rescale first")
    return f * g


def qs_inv(f: QSeries, order=None) -> QSeries:
    return f.inverse(order)


def qs_rescale(f: QSeries, r) -> QSeries:
    return f.rescale(r)


def qs_subst_sign(f: QSeries) -> QSeries:
    return f.subst_sign()


def param_subst(f: QSeries, name: str, c, exponent=0) -> QSeries:
    return f.subst_param(name, c, exponent)


# ---------------------------------------------------------------------------
# Laurent series in z with QSeries coefficients
# ---------------------------------------------------------------------------

INF = math.inf


class ZQSeries:
    """Laurent series in z whose coefficients are truncated q-series.

    ``window`` is the z-range whose coefficients are complete to ``order``;
    ``span`` bounds the z-exponents that may carry a nonzero coefficient below
    ``order`` (infinite when the series does not truncate in z);
    ``valuation`` is a lower bound for the q-valuation of every coefficient,
    stored or not.
    """

    __slots__ = ("_coeffs", "order", "window", "span", "valuation")

    def __init__(self, coeffs: Mapping[int, QSeries], order=None, window=None,
                 span=None, valuation=None):
        self.order = None if order is None else _as_fraction(order)
        kept: Dict[int, QSeries] = {}
        for w, f in coeffs.items():
            f = f.truncate_to(self.order)
            if not f.is_zero:
                kept[w] = f
        self._coeffs = kept
        self.window = window if window is not None else (-INF, INF)
        if span is None:
            span = (min(kept), max(kept)) if kept else (INF, -INF)
        self.span = span
        if valuation is None:
            vals = [f.valuation for f in kept.values()]
            valuation = min(vals) if vals else None
        self.valuation = valuation

    def coefficient(self, w: int) -> QSeries:
        if not (self.window[0] <= w <= self.window[1]):
            raise WindowMiss(f"z^{w} lies outside the complete window {self.window}")
        return self._coeffs.get(w, QSeries.zero(self.order))

    def constant_term(self) -> QSeries:
        return self.coefficient(0)

    def items(self):
        return sorted(self._coeffs.items())

    def __add__(self, other: "ZQSeries") -> "ZQSeries":
        coeffs = dict(self._coeffs)
        for w, f in other._coeffs.items():
            coeffs[w] = coeffs[w] + f if w in coeffs else f
        window = (max(self.window[0], other.window[0]), min(self.window[1], other.window[1]))
        span = (min(self.span[0], other.span[0]), max(self.span[1], other.span[1]))
        return ZQSeries(coeffs, min_order(self.order, other.order), window, span,
                        min_order(self.valuation, other.valuation))

    def scale(self, c) -> "ZQSeries":
        return ZQSeries({w: f.scale(c) for w, f in self._coeffs.items()}, self.order,
                        self.window, self.span, self.valuation)

    def subst_z(self, beta: int) -> "ZQSeries":
        """Substitute z -> z^beta for a nonzero integer beta."""
        if beta == 0:
            raise ValueError("z -> z^0 is not a substitution")

        def image(bounds):
            lo, hi = bounds[0] * beta, bounds[1] * beta
            return (lo, hi) if beta > 0 else (hi, lo)

        # windows of a remapped series only guarantee the images of integers
        window = image(self.window)
        return ZQSeries({w * beta: f for w, f in self._coeffs.items()}, self.order,
                        window, image(self.span), self.valuation)

    def __mul__(self, other: "ZQSeries") -> "ZQSeries":
        if not isinstance(other, ZQSeries):
            return self.scale(other)
        order = mul_order(self.order, self.valuation, other.order, other.valuation)
        window = _product_window(self.span, self.window, other.span, other.window)
        if self.span[0] > self.span[1] or other.span[0] > other.span[1]:
            span = (INF, -INF)
        else:
            span = (self.span[0] + other.span[0], self.span[1] + other.span[1])
        valuation = _add_orders(self.valuation, other.valuation) \
            if self.valuation is not None and other.valuation is not None else None
        coeffs: Dict[int, QSeries] = {}
        if window[0] <= window[1]:
            for w1, f1 in self._coeffs.items():
                for w2, f2 in other._coeffs.items():
                    w = w1 + w2
                    if not (window[0] <= w <= window[1]):
                        continue
                    prod = (f1 * f2).truncate_to(order)
                    coeffs[w] = coeffs[w] + prod if w in coeffs else prod
        return ZQSeries(coeffs, order, window, span, valuation)


def _product_window(span_a, win_a, span_b, win_b):
    """z-range where a product's coefficients are complete.

    The coefficient at w is complete when every split w = w1 + w2 with both
    parts inside the operands' spans has w1 and w2 inside the windows.
    """
    lo, hi = -INF, INF
    a_lo, a_hi = span_a
    b_lo, b_hi = span_b
    wa_lo, wa_hi = win_a
    wb_lo, wb_hi = win_b
    if a_lo < wa_lo:
        lo = max(lo, wa_lo + b_hi)
    if a_hi > wa_hi:
        hi = min(hi, wa_hi + b_lo)
    if b_lo < wb_lo:
        lo = max(lo, wb_lo + a_hi)
    if b_hi > wb_hi:
        hi = min(hi, wb_hi + a_lo)
    if math.isnan(lo) or math.isnan(hi):
        return (INF, -INF)
    return (lo, hi)


def zq_ct(f: ZQSeries) -> QSeries:
    """Constant term in z."""
    return f.constant_term()
