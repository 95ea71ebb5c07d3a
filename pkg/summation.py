"""
Multi-sum sides: lattice sums of q-hypergeometric terms.

A sum side is

    scalar * prefactor * sum_x (-1)^t(x) zeta^r(x) params^g(x) q^Q(x) * factors(x)
                               / prod_j (q^{n_j}; q^{n_j})_{x_j}

over x in N^k (bilateral coordinates range over Z).  Enumeration is bounded
by a cutoff certificate: coordinates carrying a parameter are boxed by the
parameter degree bound, and the remaining ones by a simplex shell outside of
which the quadratic form provably exceeds the requested order.
"""
import itertools
import logging
import math
from fractions import Fraction
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import sympy
from pydantic import BaseModel, ConfigDict, field_validator
from sympy.parsing.sympy_parser import (
    convert_xor,
    implicit_multiplication_application,
    parse_expr,
    standard_transformations,
)

from errors import BadParameters, NonSummable, NotationError, SchemaError
from notation import FactorSpec, parse_factors, parse_scalar
from products import ProductExpr, ProductFactor, RhsExpr, eval_product
from qfactors import PochArg, apply_pochhammer, factor_valuation, standard_arg
from qseries import CycloRat, QSeries, mono, mono_degree, mono_mul, scalar_pow

logger = logging.getLogger(__name__)

_TRANSFORMS = standard_transformations + (implicit_multiplication_application, convert_xor)
_SHELL_CAP = 1 << 24


def _frac(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, sympy.Rational):
        return Fraction(int(value.p), int(value.q))
    return Fraction(value)


# ---------------------------------------------------------------------------
# Spec data model
# ---------------------------------------------------------------------------

class LinearForm(BaseModel):
    """constant + sum_a coeffs[a] * x_a."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    coeffs: Tuple[Fraction, ...]
    constant: Fraction = Fraction(0)

    @field_validator("coeffs", mode="before")
    @classmethod
    def _coeffs(cls, value):
        return tuple(_frac(c) for c in value)

    @field_validator("constant", mode="before")
    @classmethod
    def _constant(cls, value):
        return _frac(value)

    @classmethod
    def const(cls, value, rank: int) -> "LinearForm":
        return cls(coeffs=(0,) * rank, constant=value)

    def __call__(self, x: Sequence[int]) -> Fraction:
        total = self.constant
        for c, v in zip(self.coeffs, x):
            if c:
                total += c * v
        return total

    def __add__(self, other: "LinearForm") -> "LinearForm":
        return LinearForm(coeffs=tuple(a + b for a, b in zip(self.coeffs, other.coeffs)),
                          constant=self.constant + other.constant)

    def scaled(self, c) -> "LinearForm":
        return LinearForm(coeffs=tuple(a * c for a in self.coeffs), constant=self.constant * c)

    @property
    def is_constant(self) -> bool:
        return not any(self.coeffs)

    @property
    def is_integral(self) -> bool:
        return all(c.denominator == 1 for c in self.coeffs) and self.constant.denominator == 1

    def permuted(self, perm: Sequence[int]) -> "LinearForm":
        return LinearForm(coeffs=tuple(self.coeffs[p] for p in perm), constant=self.constant)

    def in_orthant(self, signs: Sequence[int], offsets: Sequence[int]) -> "LinearForm":
        """The form after x = signs * y + offsets."""
        return LinearForm(coeffs=tuple(c * s for c, s in zip(self.coeffs, signs)),
                          constant=self(offsets))


class SumFactor(BaseModel):
    """(coefficient * params * q^offset(x); q^base)_{subscript(x)}^power inside a summand."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    coefficient: Any = 1
    params: Tuple[Tuple[str, int], ...] = ()
    offset: LinearForm
    base: Fraction = Fraction(1)
    subscript: Optional[LinearForm] = None
    power: int = 1
    strict: bool = False

    @field_validator("base", mode="before")
    @classmethod
    def _base(cls, value):
        return _frac(value)

    def arg_at(self, x: Sequence[int]) -> PochArg:
        return PochArg(coefficient=self.coefficient, params=self.params,
                       offset=self.offset(x), base=self.base)

    def subscript_at(self, x: Sequence[int]) -> Optional[int]:
        if self.subscript is None:
            return None
        n = self.subscript(x)
        if n.denominator != 1:
            raise SchemaError(f"subscript {n} is not an integer at {tuple(x)}")
        return int(n)


class RootFactor(BaseModel):
    """zeta_conductor ^ form(x)."""

    model_config = ConfigDict(frozen=True)

    conductor: int
    form: LinearForm


class ParamForm(BaseModel):
    """name ^ form(x)."""

    model_config = ConfigDict(frozen=True)

    name: str
    form: LinearForm


class TermValue(BaseModel):
    """Valuation data of one lattice point."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    point: Tuple[int, ...]
    valuation: Optional[Fraction]
    degrees: Tuple[Tuple[str, int], ...] = ()


class MultiSumSpec(BaseModel):
    """A sum side in the general shape; ``quad`` holds A with Q(x) = x^T A x + linear.x + constant."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    variables: Tuple[str, ...]
    bases: Tuple[Fraction, ...]
    quad: Tuple[Tuple[Fraction, ...], ...]
    linear: Tuple[Fraction, ...]
    constant: Fraction = Fraction(0)
    sign: LinearForm
    scalar: Any = 1
    params: Tuple[ParamForm, ...] = ()
    roots: Tuple[RootFactor, ...] = ()
    factors: Tuple[SumFactor, ...] = ()
    prefactor: Optional[ProductExpr] = None
    lower: Tuple[Optional[int], ...] = ()

    @field_validator("bases", "linear", mode="before")
    @classmethod
    def _fraction_tuple(cls, value):
        return tuple(_frac(c) for c in value)

    @field_validator("quad", mode="before")
    @classmethod
    def _matrix(cls, value):
        rows = tuple(tuple(_frac(c) for c in row) for row in value)
        for a, row in enumerate(rows):
            for b, c in enumerate(row):
                if rows[b][a] != c:
                    raise ValueError("quadratic form matrix must be symmetric")
        return rows

    @field_validator("constant", mode="before")
    @classmethod
    def _constant(cls, value):
        return _frac(value)

    def model_post_init(self, __context):
        k = len(self.variables)
        if not (len(self.bases) == len(self.linear) == len(self.quad) == len(self.sign.coeffs) == k):
            raise SchemaError(f"sum over {k} variables has inconsistent dimensions")
        if any(len(row) != k for row in self.quad):
            raise SchemaError("quadratic form matrix is not square")
        if self.lower and len(self.lower) != k:
            raise SchemaError("lower bounds must match the variables")
        if any(b < 0 for b in self.bases):
            raise SchemaError("index bases must be non-negative")
        if not self.sign.is_integral:
            raise SchemaError("sign functional must have integer coefficients")

    # -- shape -----------------------------------------------------------

    @property
    def rank(self) -> int:
        return len(self.variables)

    @property
    def index(self) -> Tuple[Fraction, ...]:
        return self.bases

    @property
    def lower_bounds(self) -> Tuple[Optional[int], ...]:
        return self.lower or (0,) * self.rank

    @property
    def param_names(self) -> List[str]:
        names = {p.name for p in self.params}
        for f in self.factors:
            names.update(n for n, _ in f.params)
        if self.prefactor is not None:
            names.update(n for n, _ in self.prefactor.params)
            for f in self.prefactor.factors:
                names.update(n for n, _ in f.arg.params)
        return sorted(names)

    def exponent(self, x: Sequence[int]) -> Fraction:
        total = self.constant
        for a, xa in enumerate(x):
            if not xa:
                continue
            total += self.linear[a] * xa
            row = self.quad[a]
            for b, xb in enumerate(x):
                if xb:
                    total += row[b] * xa * xb
        return total

    def exponent_denominator(self) -> int:
        """Smallest D with Q(x) in (1/D)Z on the lattice (plus factor offsets)."""
        values = [self.constant]
        for a in range(self.rank):
            values.append(2 * self.quad[a][a])
            values.append(self.quad[a][a] + self.linear[a])
            for b in range(a + 1, self.rank):
                values.append(2 * self.quad[a][b])
        for f in self.factors:
            values.extend(f.offset.coeffs)
            values.append(f.offset.constant)
            values.append(f.base)
        d = 1
        for v in values:
            d = d * v.denominator // math.gcd(d, v.denominator)
        return d

    # -- transformations --------------------------------------------------

    def permuted(self, perm: Sequence[int]) -> "MultiSumSpec":
        """Relabel variables: new variable a is old variable perm[a]."""
        perm = list(perm)
        return self.model_copy(update={
            "variables": tuple(self.variables[p] for p in perm),
            "bases": tuple(self.bases[p] for p in perm),
            "quad": tuple(tuple(self.quad[p][r] for r in perm) for p in perm),
            "linear": tuple(self.linear[p] for p in perm),
            "sign": self.sign.permuted(perm),
            "params": tuple(ParamForm(name=p.name, form=p.form.permuted(perm)) for p in self.params),
            "roots": tuple(RootFactor(conductor=r.conductor, form=r.form.permuted(perm)) for r in self.roots),
            "factors": tuple(f.model_copy(update={
                "offset": f.offset.permuted(perm),
                "subscript": None if f.subscript is None else f.subscript.permuted(perm)}) for f in self.factors),
            "lower": tuple(self.lower_bounds[p] for p in perm),
        })

    def specialize(self, param: str, sign: int = 1, root: Optional[Tuple[int, int]] = None,
                   shift=0) -> "MultiSumSpec":
        """Substitute param -> sign * zeta_m^k * q^shift (root = (m, k)) exactly."""
        if sign not in (1, -1):
            raise BadParameters(f"sign must be +1 or -1, got {sign}")
        shift = _frac(shift)
        value = sign if root is None else sign * CycloRat.zeta(root[0], root[1])
        linear = list(self.linear)
        constant = self.constant
        sign_form = self.sign
        roots = list(self.roots)
        params = []
        for p in self.params:
            if p.name != param:
                params.append(p)
                continue
            linear = [l + shift * g for l, g in zip(linear, p.form.coeffs)]
            constant += shift * p.form.constant
            if sign == -1:
                sign_form = sign_form + p.form
            if root is not None:
                roots.append(RootFactor(conductor=root[0], form=p.form.scaled(root[1])))
        factors = []
        for f in self.factors:
            e = mono_degree(f.params, param)
            if e:
                f = f.model_copy(update={
                    "coefficient": f.coefficient * scalar_pow(value, e),
                    "params": tuple(m for m in f.params if m[0] != param),
                    "offset": f.offset + LinearForm.const(shift * e, self.rank)})
            factors.append(f)
        prefactor = self.prefactor
        if prefactor is not None:
            prefactor = specialize_product(prefactor, param, value, shift)
        return self.model_copy(update={
            "linear": tuple(linear), "constant": constant, "sign": sign_form,
            "roots": tuple(roots), "params": tuple(params), "factors": tuple(factors),
            "prefactor": prefactor})


def specialize_product(p: ProductExpr, param: str, value, shift) -> ProductExpr:
    """Substitute param -> value * q^shift inside a product."""
    shift = _frac(shift)
    e = mono_degree(p.params, param)
    scalar = p.scalar * scalar_pow(value, e) if e else p.scalar
    factors = []
    for f in p.factors:
        k = mono_degree(f.arg.params, param)
        if k:
            arg = f.arg.model_copy(update={
                "coefficient": f.arg.coefficient * scalar_pow(value, k),
                "params": tuple(m for m in f.arg.params if m[0] != param),
                "offset": f.arg.offset + shift * k})
            f = ProductFactor(arg=arg, n=f.n, power=f.power)
        factors.append(f)
    return ProductExpr(scalar=scalar, params=tuple(m for m in p.params if m[0] != param),
                       shift=p.shift + shift * e, factors=tuple(factors))


def specialize_rhs(r: RhsExpr, param: str, value, shift=0) -> RhsExpr:
    return RhsExpr(terms=tuple(specialize_product(t, param, value, shift) for t in r.terms))


# ---------------------------------------------------------------------------
# Building specs from text
# ---------------------------------------------------------------------------

def _symbols(variables: Sequence[str]):
    return {name: sympy.Symbol(name) for name in variables}


def _parse_poly(text: str, variables: Sequence[str], what: str) -> sympy.Poly:
    local = _symbols(variables)
    try:
        expr = parse_expr(str(text), local_dict=local, transformations=_TRANSFORMS)
    except Exception as exc:
        raise SchemaError(f"cannot parse {what} {text!r}: {exc}")
    extra = {str(s) for s in expr.free_symbols} - set(variables)
    if extra:
        raise SchemaError(f"{what} {text!r} uses unknown symbols {sorted(extra)}")
    gens = [local[v] for v in variables]
    return sympy.Poly(expr, *gens, domain=sympy.QQ) if gens else sympy.Poly(expr, sympy.Symbol("_"), domain=sympy.QQ)


def linear_form(text, variables: Sequence[str], what: str = "linear form") -> LinearForm:
    poly = _parse_poly(text, variables, what)
    if poly.total_degree() > 1:
        raise SchemaError(f"{what} {text!r} is not linear")
    k = len(variables)
    coeffs = [Fraction(0)] * k
    constant = Fraction(0)
    for monom, c in poly.terms():
        c = _frac(c)
        if k and any(monom):
            coeffs[list(monom).index(1)] = c
        else:
            constant = c
    return LinearForm(coeffs=coeffs, constant=constant)


def quadratic_form(text: str, variables: Sequence[str]):
    """(A, b, c) with Q(x) = x^T A x + b.x + c."""
    poly = _parse_poly(text, variables, "exponent")
    if poly.total_degree() > 2:
        raise SchemaError(f"exponent {text!r} is not quadratic")
    k = len(variables)
    quad = [[Fraction(0)] * k for _ in range(k)]
    linear = [Fraction(0)] * k
    constant = Fraction(0)
    for monom, c in poly.terms():
        c = _frac(c)
        degree = sum(monom) if k else 0
        if degree == 0:
            constant = c
        elif degree == 1:
            linear[list(monom).index(1)] = c
        else:
            idx = [a for a, e in enumerate(monom) for _ in range(e)]
            a, b = idx
            if a == b:
                quad[a][a] = c
            else:
                quad[a][b] = c / 2
                quad[b][a] = c / 2
    return quad, linear, constant


def _sum_factor(spec: FactorSpec, variables: Sequence[str], strict: bool) -> SumFactor:
    subscript = None if spec.is_infinite else linear_form(spec.subscript, variables, "subscript")
    return SumFactor(coefficient=spec.coefficient, params=spec.params,
                     offset=linear_form(spec.offset, variables, "argument exponent"),
                     base=spec.base, subscript=subscript, power=spec.power, strict=strict)


def build_spec(variables: Union[str, Sequence[str]], exponent: str, *, sign: str = "0",
               bases: Optional[Sequence] = None, params: Optional[Mapping[str, str]] = None,
               roots: Optional[Mapping] = None, factors: Sequence[str] = (),
               prefactor: Optional[str] = None, scalar: Any = 1, strict: bool = False,
               ranges: Optional[Mapping[str, Any]] = None) -> MultiSumSpec:
    """Compile a sum side from text forms.

    ``ranges`` maps a variable to its lower bound or to ``"Z"`` for a
    bilateral variable; the default range is N.
    """
    if isinstance(variables, str):
        variables = variables.replace(",", " ").split()
    variables = tuple(variables)
    k = len(variables)
    quad, linear, constant = quadratic_form(exponent, variables)
    factor_specs = []
    for text in factors:
        try:
            parsed = parse_factors(text)
        except NotationError as exc:
            raise SchemaError(f"bad summand factor {text!r}: {exc}")
        factor_specs.extend(_sum_factor(f, variables, strict) for f in parsed)
    lower = []
    for v in variables:
        bound = (ranges or {}).get(v, 0)
        lower.append(None if str(bound).upper() == "Z" else int(bound))
    if isinstance(scalar, str):
        scalar = parse_scalar(scalar)
    return MultiSumSpec(
        variables=variables,
        bases=tuple(bases) if bases is not None else (1,) * k,
        quad=quad, linear=linear, constant=constant,
        sign=linear_form(sign, variables, "sign"),
        scalar=scalar,
        params=tuple(ParamForm(name=n, form=linear_form(t, variables, f"exponent of {n}"))
                     for n, t in sorted((params or {}).items())),
        roots=tuple(RootFactor(conductor=int(m), form=linear_form(t, variables, "root exponent"))
                    for m, t in sorted((roots or {}).items())),
        factors=tuple(factor_specs),
        prefactor=None if prefactor is None else ProductExpr.from_text(prefactor),
        lower=tuple(lower),
    )


# ---------------------------------------------------------------------------
# Single terms
# ---------------------------------------------------------------------------

def _implicit_factors(spec: MultiSumSpec, x: Sequence[int]):
    for base, xa in zip(spec.bases, x):
        if base:
            yield standard_arg(base), xa, -1


def _extra_factors(spec: MultiSumSpec, x: Sequence[int]):
    for f in spec.factors:
        yield f.arg_at(x), f.subscript_at(x), f.power, f.strict


def term_degrees(spec: MultiSumSpec, x: Sequence[int]) -> Dict[str, int]:
    degrees = {}
    for p in spec.params:
        d = p.form(x)
        if d < 0 or d.denominator != 1:
            raise BadParameters(f"exponent of {p.name} is {d} at {tuple(x)}")
        degrees[p.name] = degrees.get(p.name, 0) + int(d)
    return degrees


def term_valuation(spec: MultiSumSpec, x: Sequence[int], max_degree: Optional[int] = None) -> TermValue:
    """Valuation lower bound of the summand at x (None when it vanishes)."""
    degrees = term_degrees(spec, x)
    point = tuple(x)
    v = _factor_valuations(spec, x, max_degree)
    if v is None:
        return TermValue(point=point, valuation=None, degrees=tuple(sorted(degrees.items())))
    return TermValue(point=point, valuation=spec.exponent(x) + v, degrees=tuple(sorted(degrees.items())))


def _factor_valuations(spec: MultiSumSpec, x: Sequence[int], max_degree: Optional[int]):
    total = Fraction(0)
    for arg, n, power in _implicit_factors(spec, x):
        v = factor_valuation(arg, n, power, max_degree)
        if v is None:
            return None
        total += v
    for arg, n, power, strict in _extra_factors(spec, x):
        if strict and n is not None and n < 0:
            return None
        v = factor_valuation(arg, n, power, max_degree)
        if v is None:
            return None
        total += v
    return total


def _summand_scalar(spec: MultiSumSpec, x: Sequence[int]):
    c = spec.scalar
    if int(spec.sign(x)) % 2:
        c = -c
    for r in spec.roots:
        e = r.form(x)
        if e.denominator != 1:
            raise SchemaError(f"root exponent {e} is not an integer at {tuple(x)}")
        c = c * CycloRat.zeta(r.conductor, int(e))
    return c


def term(spec: MultiSumSpec, x: Sequence[int], order, max_degree: Optional[int] = None) -> QSeries:
    """The summand at lattice point x, exact up to ``order``."""
    order = Fraction(order)
    degrees = term_degrees(spec, x)
    v = _factor_valuations(spec, x, max_degree)
    if v is None:
        return QSeries.zero(order)
    working = order - v
    f = QSeries.monomial(_summand_scalar(spec, x), spec.exponent(x), mono(degrees),
                         order=working, max_degree=max_degree)
    if f.is_zero:
        return QSeries.zero(order)
    for arg, n, power in _implicit_factors(spec, x):
        f = apply_pochhammer(f, arg, n, power)
    for arg, n, power, _ in _extra_factors(spec, x):
        if f.is_zero:
            break
        f = apply_pochhammer(f, arg, n, power)
    if f.is_zero:
        return QSeries.zero(order)
    return f.truncate(order)


# ---------------------------------------------------------------------------
# Cutoff certificates
# ---------------------------------------------------------------------------

class OrthantCertificate(BaseModel):
    """Enumeration bounds for one orthant x = signs * y + offsets, y >= 0."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    signs: Tuple[int, ...]
    offsets: Tuple[int, ...]
    graded: Tuple[int, ...]
    graded_bounds: Tuple[int, ...]
    free: Tuple[int, ...]
    shell: int
    simplex_minimum: Optional[Fraction]
    constant_bound: Optional[Fraction]
    empty: bool = False

    def points(self) -> Iterator[Tuple[int, ...]]:
        """Lattice points (original coordinates) inside the certified region."""
        if self.empty:
            return
        k = len(self.signs)
        boxes = [range(b + 1) for b in self.graded_bounds]
        for g in itertools.product(*boxes):
            for s in range(self.shell):
                for f in _compositions(s, len(self.free)):
                    y = [0] * k
                    for a, v in zip(self.graded, g):
                        y[a] = v
                    for a, v in zip(self.free, f):
                        y[a] = v
                    yield tuple(sg * v + o for sg, v, o in zip(self.signs, y, self.offsets))


class CutoffBounds(BaseModel):
    """Per-axis bounds (in original coordinates) with the orthant certificates behind them."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    order: Fraction
    max_degree: Optional[int]
    bounds: Tuple[Tuple[int, int], ...]
    certificates: Tuple[OrthantCertificate, ...]

    def points(self) -> Iterator[Tuple[int, ...]]:
        for cert in self.certificates:
            yield from cert.points()


def _compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


class _SimplexMinimizer:
    """Exact minimum of s^2 y^T A y + s l.y over the standard simplex, for s > 0.

    On each face S the stationary point solves
    [2A_SS, -1; 1^T, 0] [y; mu] = [-l_S / s; 1], so y = y0 + y1 / s.
    """

    def __init__(self, quad: List[List[Fraction]], lin: Sequence[Fraction], systems=None):
        self.quad = quad
        self.lin = list(lin)
        if systems is None:
            systems = []
            n = len(quad)
            for size in range(1, n + 1):
                for face in itertools.combinations(range(n), size):
                    solved = self._solve(face)
                    if solved is not None:
                        systems.append((face,) + solved)
        self.systems = systems
        self.faces = []
        for face, y0, inverse in systems:
            y1 = [-sum((row[j] * self.lin[a] for j, a in enumerate(face)), Fraction(0)) for row in inverse]
            self.faces.append((face, y0, y1))

    def _solve(self, face):
        m = len(face)
        rows = []
        for a in face:
            rows.append([2 * sympy.Rational(self.quad[a][b].numerator, self.quad[a][b].denominator)
                         for b in face] + [-1])
        rows.append([1] * m + [0])
        matrix = sympy.Matrix(rows)
        if matrix.det() == 0:
            return None
        inverse = matrix.inv()
        y0 = [_frac(inverse[i, m]) for i in range(m)]
        block = [[_frac(inverse[i, j]) for j in range(m)] for i in range(m)]
        return y0, block

    def with_linear(self, lin: Sequence[Fraction]) -> "_SimplexMinimizer":
        """Same quadratic part, new linear part; the face systems are reused."""
        return _SimplexMinimizer(self.quad, lin, self.systems)

    def _value(self, face, y, s) -> Fraction:
        quad = sum(self.quad[a][b] * y[i] * y[j]
                   for i, a in enumerate(face) for j, b in enumerate(face))
        lin = sum(self.lin[a] * y[i] for i, a in enumerate(face))
        return s * s * quad + s * lin

    def quadratic_minimum(self) -> Fraction:
        """min y^T A y over the simplex."""
        best = None
        for face, y0, _ in self.faces:
            if all(v >= 0 for v in y0):
                value = self._value(face, y0, 1) - sum(self.lin[a] * y0[i] for i, a in enumerate(face))
                best = value if best is None else min(best, value)
        return best

    def minimum(self, s: int) -> Fraction:
        best = None
        for face, y0, y1 in self.faces:
            y = [a + b / s for a, b in zip(y0, y1)]
            if all(v >= 0 for v in y):
                value = self._value(face, y, s)
                best = value if best is None else min(best, value)
        return best


def _orthants(spec: MultiSumSpec):
    choices = []
    for lo in spec.lower_bounds:
        if lo is None:
            choices.append([(1, 0), (-1, -1)])
        else:
            choices.append([(1, lo)])
    for combo in itertools.product(*choices):
        yield tuple(c[0] for c in combo), tuple(c[1] for c in combo)


def _factor_floor(f: SumFactor, signs, offsets, max_degree: Optional[int], what: str) -> Fraction:
    """Lower bound over the orthant for the valuation of one summand factor."""
    offset = f.offset.in_orthant(signs, offsets)
    if any(c < 0 for c in offset.coeffs):
        raise NonSummable(f"{what}: argument exponent decreases without bound")
    o_min = offset.constant
    j_lo = 0
    if f.subscript is not None:
        sub = f.subscript.in_orthant(signs, offsets)
        if any(c < 0 for c in sub.coeffs):
            if f.strict:
                j_lo = 0
            else:
                vanish = (-o_min) / f.base
                if f.params or f.coefficient != 1 or not offset.is_constant \
                        or vanish.denominator != 1 or vanish >= 0:
                    raise NonSummable(f"{what}: subscript decreases without bound")
                j_lo = int(vanish) + 1
        else:
            j_lo = min(0, math.floor(sub.constant)) if not f.strict else 0
    j_hi = math.floor(-o_min / f.base)
    steps = 1
    if f.params:
        if max_degree is not None:
            steps = max(1, max_degree // max(k for _, k in f.params))
    total = Fraction(0)
    for j in range(j_lo, j_hi + 1):
        e = o_min + f.base * j
        if e <= 0:
            total += abs(f.power) * e * steps
    return total


def _shell_size(minimizer: _SimplexMinimizer, target: Fraction, order: Fraction, what: str,
                free_names: List[str]) -> int:
    """Smallest s with every simplex layer from s on exceeding ``target``."""

    def ok(s: int) -> bool:
        value = minimizer.minimum(s)
        return value is not None and value > target

    s = 1
    while not ok(s):
        s *= 2
        if s > _SHELL_CAP:
            raise NonSummable(f"{what}: infinitely many terms below q^{order} "
                              f"(no parameter grading bounds {free_names})")
    lo, hi = s // 2, s
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _orthant_certificate(spec: MultiSumSpec, signs, offsets, order: Fraction,
                         max_degree: Optional[int]) -> OrthantCertificate:
    k = spec.rank
    what = f"sum over {', '.join(spec.variables)}"
    # quadratic data in orthant coordinates
    quad = [[spec.quad[a][b] * signs[a] * signs[b] for b in range(k)] for a in range(k)]
    linear = [signs[a] * (spec.linear[a] + 2 * sum(spec.quad[a][b] * offsets[b] for b in range(k)))
              for a in range(k)]
    constant = spec.exponent(offsets)

    graded_bound: Dict[int, int] = {}
    empty = False
    for p in spec.params:
        form = p.form.in_orthant(signs, offsets)
        if any(c < 0 for c in form.coeffs) or form.constant < 0:
            raise BadParameters(f"{what}: exponent of {p.name} can become negative")
        if max_degree is None:
            continue
        room = max_degree - form.constant
        if room < 0:
            empty = True
        for a, c in enumerate(form.coeffs):
            if c > 0:
                bound = math.floor(room / c)
                graded_bound[a] = min(graded_bound.get(a, bound), bound)
    if empty:
        return OrthantCertificate(signs=signs, offsets=offsets, graded=(), graded_bounds=(), free=(),
                                  shell=0, simplex_minimum=None, constant_bound=None, empty=True)
    graded = tuple(sorted(graded_bound))
    free = tuple(a for a in range(k) if a not in graded_bound)
    graded_bounds = tuple(max(graded_bound[a], -1) for a in graded)
    if any(b < 0 for b in graded_bounds):
        return OrthantCertificate(signs=signs, offsets=offsets, graded=graded, graded_bounds=graded_bounds,
                                  free=free, shell=0, simplex_minimum=None, constant_bound=None, empty=True)

    extra = sum((_factor_floor(f, signs, offsets, max_degree, what) for f in spec.factors), Fraction(0))
    # value of the graded part at each point of its box
    graded_values = []
    for g in itertools.product(*[range(b + 1) for b in graded_bounds]):
        value = Fraction(0)
        for i, a in enumerate(graded):
            value += linear[a] * g[i]
            for j, b in enumerate(graded):
                value += quad[a][b] * g[i] * g[j]
        graded_values.append((g, value))
    const_bound = constant + extra + min(v for _, v in graded_values)

    if not free:
        return OrthantCertificate(signs=signs, offsets=offsets, graded=graded, graded_bounds=graded_bounds,
                                  free=free, shell=1, simplex_minimum=None, constant_bound=const_bound)

    sub_quad = [[quad[a][b] for b in free] for a in free]
    base = _SimplexMinimizer(sub_quad, [linear[a] for a in free])
    q_min = base.quadratic_minimum()
    if q_min < 0:
        raise NonSummable(f"{what}: quadratic form is not copositive on the free coordinates "
                          f"{[spec.variables[a] for a in free]}")

    # cross terms with the graded coordinates shift the free linear part point by point
    minimizers: Dict[Tuple[Fraction, ...], _SimplexMinimizer] = {}
    shell = 1
    for g, value in graded_values:
        lin_free = tuple(linear[a] + 2 * sum((quad[a][b] * g[i] for i, b in enumerate(graded)), Fraction(0))
                         for a in free)
        if lin_free not in minimizers:
            minimizers[lin_free] = base.with_linear(lin_free)
        target = max(Fraction(0), order - (constant + extra + value))
        shell = max(shell, _shell_size(minimizers[lin_free], target, order, what,
                                       [spec.variables[a] for a in free]))
    logger.debug(f"{what}: orthant {signs}/{offsets} graded={graded}{graded_bounds} "
                 f"free={free} shell={shell} copositive-min={q_min} constant>={const_bound}")
    return OrthantCertificate(signs=signs, offsets=offsets, graded=graded, graded_bounds=graded_bounds,
                              free=free, shell=shell, simplex_minimum=q_min, constant_bound=const_bound)


def cutoff_bounds(spec: MultiSumSpec, order, max_degree: Optional[int] = None) -> CutoffBounds:
    """Certified enumeration region: points outside contribute only above ``order``."""
    order = Fraction(order)
    certs = [_orthant_certificate(spec, signs, offsets, order, max_degree)
             for signs, offsets in _orthants(spec)]
    bounds = []
    for a in range(spec.rank):
        lo, hi = None, None
        for cert in certs:
            if cert.empty:
                continue
            if a in cert.graded:
                extent = cert.graded_bounds[cert.graded.index(a)]
            else:
                extent = max(cert.shell - 1, 0)
            ends = (cert.offsets[a], cert.offsets[a] + cert.signs[a] * extent)
            lo = min(ends) if lo is None else min(lo, *ends)
            hi = max(ends) if hi is None else max(hi, *ends)
        bounds.append((lo if lo is not None else 0, hi if hi is not None else -1))
    return CutoffBounds(order=order, max_degree=max_degree, bounds=tuple(bounds), certificates=tuple(certs))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def contributing_points(spec: MultiSumSpec, order, max_degree: Optional[int] = None) -> List[TermValue]:
    """Lattice points whose summand can reach ``order``, in enumeration order."""
    order = Fraction(order)
    out = []
    for x in cutoff_bounds(spec, order, max_degree).points():
        tv = term_valuation(spec, x, max_degree)
        if tv.valuation is None or tv.valuation > order:
            continue
        if max_degree is not None and any(d > max_degree for _, d in tv.degrees):
            continue
        out.append(tv)
    return out


def _sum_terms(spec: MultiSumSpec, order: Fraction, max_degree: Optional[int]) -> QSeries:
    total = QSeries.zero(order).with_max_degree(max_degree)
    count = 0
    for tv in contributing_points(spec, order, max_degree):
        total = total + term(spec, tv.point, order, max_degree)
        count += 1
    logger.debug(f"sum over {', '.join(spec.variables)}: {count} terms to q^{order}")
    return total


def eval_multisum(spec: MultiSumSpec, order, max_degree: Optional[int] = None) -> QSeries:
    """The sum side to ``order`` (and parameter degree ``max_degree``), exact."""
    order = Fraction(order)
    if spec.prefactor is None:
        return _sum_terms(spec, order, max_degree)
    vp = spec.prefactor.valuation(max_degree)
    if vp is None:
        return QSeries.zero(order)
    total = _sum_terms(spec, order - vp, max_degree)
    if total.is_zero:
        return QSeries.zero(order)
    vs = total.valuation
    if vs + vp > order:
        return QSeries.zero(order)
    prefactor = eval_product(spec.prefactor, order - vs, max_degree)
    return (total * prefactor).truncate(order)


def eval_sum_sides(specs: Sequence[MultiSumSpec], order, max_degree: Optional[int] = None) -> QSeries:
    total = QSeries.zero(Fraction(order))
    for spec in specs:
        total = total + eval_multisum(spec, order, max_degree)
    return total


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def _nested_spec(k: int, s: int, last_base: int) -> MultiSumSpec:
    r = k - 1
    variables = tuple(f"n{a + 1}" for a in range(r))
    # N_j = n_j + ... + n_{k-1}; sum_j N_j^2 has matrix min(a, b) (1-based)
    quad = [[Fraction(min(a, b) + 1) for b in range(r)] for a in range(r)]
    linear = [Fraction(max(0, (a + 1) - s + 1)) for a in range(r)]
    bases = [1] * (r - 1) + [last_base]
    return MultiSumSpec(variables=variables, bases=bases, quad=quad, linear=linear,
                        sign=LinearForm.const(0, r))


def andrews_gordon_spec(k: int, s: int) -> MultiSumSpec:
    """Sum side of the Andrews-Gordon identity for modulus 2k+1."""
    if k < 2 or not 1 <= s <= k:
        raise BadParameters(f"Andrews-Gordon needs k >= 2 and 1 <= s <= k, got k={k}, s={s}")
    return _nested_spec(k, s, 1)


def andrews_gordon_rhs(k: int, s: int) -> RhsExpr:
    if k < 2 or not 1 <= s <= k:
        raise BadParameters(f"Andrews-Gordon needs k >= 2 and 1 <= s <= k, got k={k}, s={s}")
    m = 2 * k + 1
    return RhsExpr.from_text(f"(q^{s},q^{m - s},q^{m};q^{m})_oo/(q;q)_oo")


def bressoud_spec(k: int, s: int) -> MultiSumSpec:
    """Sum side of Bressoud's even-moduli companion (last denominator in q^2)."""
    if k < 2 or not 1 <= s <= k:
        raise BadParameters(f"Bressoud needs k >= 2 and 1 <= s <= k, got k={k}, s={s}")
    return _nested_spec(k, s, 2)


def bressoud_rhs(k: int, s: int) -> RhsExpr:
    if k < 2 or not 1 <= s <= k:
        raise BadParameters(f"Bressoud needs k >= 2 and 1 <= s <= k, got k={k}, s={s}")
    m = 2 * k
    return RhsExpr.from_text(f"(q^{s},q^{m - s},q^{m};q^{m})_oo/(q;q)_oo")


def _rank_two(alpha: Fraction, b1: Fraction, b2: Fraction) -> MultiSumSpec:
    return MultiSumSpec(variables=("i", "j"), bases=(1, 1),
                        quad=((alpha / 2, (1 - alpha) / 2), ((1 - alpha) / 2, alpha / 2)),
                        linear=(b1, b2), sign=LinearForm.const(0, 2))


def _exp(e: Fraction) -> str:
    return f"q^({e.numerator}/{e.denominator})" if e.denominator != 1 else f"q^{e.numerator}"


def zagier_spec(alpha, nu=0) -> Tuple[MultiSumSpec, RhsExpr]:
    """Zagier's rank-two family with matrix (alpha, 1-alpha; 1-alpha, alpha)."""
    alpha, nu = _frac(alpha), _frac(nu)
    if alpha <= 0:
        raise BadParameters(f"alpha must be positive, got {alpha}")
    spec = _rank_two(alpha, alpha * nu, -alpha * nu)
    rhs = RhsExpr.from_text(f"(-{_exp(alpha / 2 + alpha * nu)},-{_exp(alpha / 2 - alpha * nu)},"
                            f"{_exp(alpha)};{_exp(alpha)})_oo/(q;q)_oo")
    return spec, rhs


def thm31_spec(alpha) -> Tuple[MultiSumSpec, RhsExpr]:
    """Companion of Zagier's family with linear part (1 - alpha/2, alpha/2)."""
    alpha = _frac(alpha)
    if alpha <= 0:
        raise BadParameters(f"alpha must be positive, got {alpha}")
    spec = _rank_two(alpha, 1 - alpha / 2, alpha / 2)
    rhs = RhsExpr.from_text(f"({_exp(2 * alpha)};{_exp(2 * alpha)})_oo^2"
                            f"/((q;q)_oo({_exp(alpha)};{_exp(alpha)})_oo)")
    return spec, rhs


def gm_spec(m: int) -> MultiSumSpec:
    """g_m(q) = sum_n q^(n(n-m+1)) / ((q;q)_n (q;q)_(n-m)), with 1/(q;q)_negative = 0."""
    return build_spec("n", f"n^2 + ({1 - m})*n", factors=[f"1/(q;q)_(n-({m}))"], strict=True)


def gm_series(m: int, order) -> QSeries:
    return eval_multisum(gm_spec(m), order)
