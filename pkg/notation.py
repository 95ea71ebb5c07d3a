"""
Parser and renderer for product and Pochhammer notation.

Accepted forms (ASCII, braces may replace parentheses in groups)::

    1/(q^2,q^3;q^5)_oo
    2(q^6,q^10,q^16;q^16)_oo/(q^2;q^2)_oo
    -q^3(q^4,q^8,q^12;q^16)_oo
    (q^4;q^4)_oo/(q;q)_oo + (-q;q^2)_oo/(q;q^2)_oo
    (1+q^3)/((1-q^9)(q^5,q^7;q^6)_oo)
    (-aq^(2n+1);q^2)_(n+1)^-1

Exponents of ``q`` inside arguments and subscripts are kept as text so that
sum sides can use linear forms in their summation variables.
"""
import logging
from fractions import Fraction
from typing import Any, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict

from errors import NotationError
from qfactors import PochArg
from qseries import (
    ONE_MONO,
    PARAM_LETTERS,
    Coef,
    CycloRat,
    Monomial,
    mono,
    mono_text,
    scalar_text,
)

logger = logging.getLogger(__name__)

_OPEN = "({"
_CLOSE = {"(": ")", "{": "}"}


class FactorSpec(BaseModel):
    """One parsed Pochhammer symbol argument with its shared base, subscript and power."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    coefficient: Any = 1
    params: Tuple[Tuple[str, int], ...] = ()
    offset: str = "0"
    base: Fraction = Fraction(1)
    subscript: str = "oo"
    power: int = 1

    @property
    def is_infinite(self) -> bool:
        return self.subscript == "oo"

    def constant_arg(self) -> PochArg:
        """The argument as a PochArg; the offset must be a constant."""
        try:
            offset = Fraction(self.offset)
        except ValueError:
            raise NotationError(self.offset, 0, "offset depends on summation variables")
        return PochArg(coefficient=self.coefficient, params=self.params, offset=offset, base=self.base)


class TermSpec(BaseModel):
    """A parsed product term: scalar * params * q^shift * numerators / denominators."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    scalar: Any = 1
    params: Tuple[Tuple[str, int], ...] = ()
    shift: str = "0"
    factors: Tuple[FactorSpec, ...] = ()


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    # -- low level --------------------------------------------------------

    def error(self, reason: str):
        raise NotationError(self.text, self.pos, reason)

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t*":
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, char: str):
        if self.peek() != char:
            self.error(f"expected {char!r}")
        self.pos += 1

    def at_end(self) -> bool:
        return self.peek() == ""

    def digits(self) -> str:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        return self.text[start:self.pos]

    def group(self) -> str:
        """Text inside a balanced (...) or {...} group starting at the cursor."""
        opener = self.text[self.pos]
        closer = _CLOSE[opener]
        depth = 0
        start = self.pos + 1
        while self.pos < len(self.text):
            c = self.text[self.pos]
            if c in _OPEN:
                depth += 1
            elif c in ")}":
                depth -= 1
                if depth == 0:
                    if c != closer:
                        self.error("mismatched bracket")
                    self.pos += 1
                    return self.text[start:self.pos - 1].strip()
            self.pos += 1
        self.error("unterminated bracket")

    def rational(self) -> Fraction:
        num = self.digits()
        if not num:
            self.error("expected a number")
        if self.pos < len(self.text) and self.text[self.pos] == "/" \
                and self.pos + 1 < len(self.text) and self.text[self.pos + 1].isdigit():
            self.pos += 1
            return Fraction(int(num), int(self.digits()))
        return Fraction(int(num))

    def exponent_text(self) -> str:
        """Exponent after '^': signed integer or a bracketed expression."""
        if self.pos < len(self.text) and self.text[self.pos] == "^":
            self.pos += 1
            if self.pos < len(self.text) and self.text[self.pos] in _OPEN:
                return self.group()
            sign = ""
            if self.pos < len(self.text) and self.text[self.pos] == "-":
                sign = "-"
                self.pos += 1
            num = self.digits()
            if not num:
                # single-letter variable exponent such as q^n
                if self.pos < len(self.text) and self.text[self.pos].isalpha():
                    self.pos += 1
                    return sign + self.text[self.pos - 1]
                self.error("expected an exponent")
            return sign + num
        return "1"

    def int_power(self) -> int:
        if self.pos < len(self.text) and self.text[self.pos] == "^":
            text = self.exponent_text()
            try:
                return int(text)
            except ValueError:
                self.error(f"factor power must be an integer, got {text!r}")
        return 1

    # -- monomials --------------------------------------------------------

    def monomial(self):
        """[number | (coef)] [zeta] [params] [q^e]; returns (scalar, params, exponent text, seen)."""
        scalar: Any = 1
        params = {}
        exponent = "0"
        seen = False
        while True:
            c = self.peek()
            if c.isdigit():
                scalar = scalar * _rational(self.rational())
            elif c == "(" and self._scalar_group_ahead():
                scalar = scalar * parse_scalar(self.group())
            elif c == "z" and self.pos + 1 < len(self.text) and self.text[self.pos + 1].isdigit():
                self.pos += 1
                m = int(self.digits())
                k = int(self.exponent_text()) if self.text[self.pos:self.pos + 1] == "^" else 1
                scalar = scalar * CycloRat.zeta(m, k)
            elif c and c in PARAM_LETTERS:
                self.pos += 1
                k = int(self.exponent_text())
                params[c] = params.get(c, 0) + k
            elif c == "q":
                self.pos += 1
                exponent = self.exponent_text()
            else:
                return scalar, mono(params), exponent, seen
            seen = True

    def _scalar_group_ahead(self) -> bool:
        """True when '(' opens a bare coefficient such as (1/2) or (1+z3)."""
        depth = 0
        for i in range(self.pos, len(self.text)):
            c = self.text[i]
            if c == "(":
                depth += 1
            elif c == ")":
                depth -= 1
                if depth == 0:
                    inner = self.text[self.pos + 1:i]
                    return bool(inner) and all(ch in "0123456789/+- z*^" for ch in inner) \
                        and ";" not in inner and not inner.strip().startswith("1-") \
                        and not inner.strip().startswith("1+")
            elif c in ";,":
                return False
        return False

    # -- factors ----------------------------------------------------------

    def argument(self):
        sign = 1
        c = self.peek()
        if c and c in "+-":
            sign = -1 if c == "-" else 1
            self.pos += 1
        scalar, params, exponent, seen = self.monomial()
        if not seen:
            self.error("empty Pochhammer argument")
        return sign * scalar, params, exponent

    def factor(self) -> List[FactorSpec]:
        """One bracketed factor: (args;base)_sub[^k] or (1 +- arg)[^k]."""
        self.expect("(")
        start = self.pos - 1
        self.pos = start
        inner = self.group()
        if ";" not in inner:
            specs = self._binomial(inner, start)
            power = self.int_power()
            return [s.model_copy(update={"power": power}) for s in specs]
        body, base_text = inner.rsplit(";", 1)
        base = self._base(base_text.strip(), start)
        args = []
        sub = _Parser(body)
        while True:
            args.append(sub.argument())
            if sub.at_end():
                break
            sub.expect(",")
        if self.text[self.pos:self.pos + 1] != "_":
            self.error("expected '_' and a subscript")
        self.pos += 1
        subscript = self._subscript()
        power = self.int_power()
        return [FactorSpec(coefficient=c, params=p, offset=e, base=base,
                           subscript=subscript, power=power) for c, p, e in args]

    def _binomial(self, inner: str, start: int) -> List[FactorSpec]:
        sub = _Parser(inner)
        if sub.peek() != "1":
            raise NotationError(self.text, start, "binomial factor must start with 1")
        sub.pos += 1
        sign = sub.peek()
        if sign not in ("+", "-"):
            raise NotationError(self.text, start, "binomial factor needs '1+x' or '1-x'")
        coefficient, params, exponent = sub.argument()
        if not sub.at_end():
            raise NotationError(self.text, start, "trailing text in binomial factor")
        # 1 + x = 1 - (-x)
        return [FactorSpec(coefficient=-coefficient,
                           params=params, offset=exponent, subscript="1")]

    def _base(self, text: str, start: int) -> Fraction:
        sub = _Parser(text)
        if sub.peek() != "q":
            raise NotationError(self.text, start, f"bad base {text!r}")
        sub.pos += 1
        exponent = sub.exponent_text()
        if not sub.at_end():
            raise NotationError(self.text, start, f"bad base {text!r}")
        try:
            return Fraction(exponent)
        except ValueError:
            raise NotationError(self.text, start, f"base exponent must be a constant, got {exponent!r}")

    def _subscript(self) -> str:
        if self.text[self.pos:self.pos + 2] == "oo":
            self.pos += 2
            return "oo"
        c = self.text[self.pos:self.pos + 1]
        if c in _OPEN and c:
            return self.group().replace(" ", "")
        if c.isdigit():
            return self.digits()
        if c.isalpha():
            self.pos += 1
            return c
        self.error("expected a subscript")

    # -- terms ------------------------------------------------------------

    def factors_until_stop(self, stops: str) -> List[FactorSpec]:
        out: List[FactorSpec] = []
        while True:
            c = self.peek()
            if not c or c in stops:
                return out
            if c != "(":
                self.error(f"unexpected {c!r}")
            out.extend(self.factor())

    def term(self, sign: int) -> TermSpec:
        scalar, params, shift, _ = self.monomial()
        factors = self.factors_until_stop("/+-)")
        if self.peek() == "/":
            self.pos += 1
            if self.peek() == "(" and self._grouped_denominator():
                inner = self.group()
                sub = _Parser(inner)
                den = sub.factors_until_stop("")
            else:
                den = self.factors_until_stop("+-)")
            if not den:
                self.error("empty denominator")
            factors = factors + [d.model_copy(update={"power": -d.power}) for d in den]
        return TermSpec(scalar=sign * scalar, params=params, shift=shift, factors=tuple(factors))

    def _grouped_denominator(self) -> bool:
        i = self.pos + 1
        while i < len(self.text) and self.text[i] == " ":
            i += 1
        return i < len(self.text) and self.text[i] == "("

    def rhs(self) -> List[TermSpec]:
        terms = []
        sign = 1
        c = self.peek()
        if c and c in "+-":
            sign = -1 if c == "-" else 1
            self.pos += 1
        while True:
            terms.append(self.term(sign))
            c = self.peek()
            if not c:
                return terms
            if c not in ("+", "-"):
                self.error(f"unexpected {c!r}")
            sign = -1 if c == "-" else 1
            self.pos += 1


def _rational(r: Fraction):
    return int(r) if r.denominator == 1 else r


def parse_scalar(text: str):
    """A bare scalar such as ``2``, ``1/2``, ``-z4`` or ``1+z3``."""
    coef = Coef.from_text(text)
    if not coef.is_scalar():
        raise NotationError(text, 0, "expected a scalar without parameters")
    return coef.constant()


def parse_factors(text: str) -> List[FactorSpec]:
    """A quotient of bracketed factors, e.g. ``(-q;q^2)_n(1+q^3)^2`` or ``1/(q;q)_(2n+1)``."""
    parser = _Parser(text)
    term = parser.term(1)
    if not parser.at_end():
        parser.error("trailing text")
    if term.scalar != 1 or term.params or term.shift != "0":
        raise NotationError(text, 0, "summand factors take no scalar, parameter or q-power prefix")
    return list(term.factors)


def parse_rhs(text: str) -> List[TermSpec]:
    """A signed sum of product terms."""
    if not text.strip():
        raise NotationError(text, 0, "empty expression")
    return _Parser(text).rhs()


def parse_arg(text: str) -> Tuple[Any, Monomial, str]:
    """A single argument ``[sign][coef][params][q^e]``."""
    parser = _Parser(text)
    result = parser.argument()
    if not parser.at_end():
        parser.error("trailing text")
    return result


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _exponent_text(e: Fraction) -> str:
    if e == 1:
        return "q"
    if e.denominator == 1:
        return f"q^{e.numerator}"
    return f"q^({e.numerator}/{e.denominator})"


def _scalar_prefix(c) -> str:
    """Text of a scalar in front of further symbols ('' for 1, '-' for -1)."""
    if c == 1:
        return ""
    if c == -1:
        return "-"
    text = scalar_text(c)
    body = text[1:] if text.startswith("-") else text
    if isinstance(c, CycloRat) and (" " in body or "*" in body):
        return f"({text})"
    if "/" in body:
        return f"({text})"
    return text


def render_monomial(c, params: Monomial = ONE_MONO, exponent=0) -> str:
    exponent = Fraction(exponent)
    body = mono_text(params).replace("*", "")
    if exponent != 0:
        body += _exponent_text(exponent)
    prefix = _scalar_prefix(c)
    if not body:
        return scalar_text(c) if prefix in ("", "-") else prefix
    return prefix + body


def render_arg(arg: PochArg) -> str:
    return render_monomial(arg.coefficient, arg.params, arg.offset)


def _base_text(base: Fraction) -> str:
    return "q" if base == 1 else _exponent_text(base)


def _subscript_text(n: Optional[int]) -> str:
    if n is None:
        return "oo"
    return str(n) if n >= 0 else f"({n})"


def _power_text(power: int) -> str:
    return "" if power == 1 else f"^{power}"


def render_factors(factors: Sequence[Tuple[PochArg, Optional[int], int]]) -> str:
    """Render (arg, n, power) triples, grouping runs that share base, subscript and power."""
    groups: List[Tuple[Fraction, Optional[int], int, List[PochArg]]] = []
    for arg, n, power in factors:
        if n == 1:
            groups.append((arg.base, 1, power, [arg]))
            continue
        if groups and groups[-1][:3] == (arg.base, n, power) and groups[-1][1] != 1:
            groups[-1][3].append(arg)
        else:
            groups.append((arg.base, n, power, [arg]))
    out = []
    for base, n, power, args in groups:
        if n == 1:
            arg = args[0]
            neg = arg.model_copy(update={"coefficient": -arg.coefficient})
            text = render_arg(neg)
            body = f"(1-{text[1:]})" if text.startswith("-") else f"(1+{text})"
            out.append(body + _power_text(power))
        else:
            inner = ",".join(render_arg(a) for a in args)
            out.append(f"({inner};{_base_text(base)})_{_subscript_text(n)}{_power_text(power)}")
    return "".join(out)


def render_term(scalar, params: Monomial, shift, factors: Sequence[Tuple[PochArg, Optional[int], int]]) -> str:
    num = [(a, n, p) for a, n, p in factors if p > 0]
    den = [(a, n, -p) for a, n, p in factors if p < 0]
    shift = Fraction(shift)
    head = render_monomial(scalar, params, shift) if (params or shift or scalar != 1) else ""
    if head == "1":
        head = ""
    if head == "-1" and num:
        head = "-"
    body = head + render_factors(num)
    if not body or body == "-":
        body += "1"
    if den:
        text = render_factors(den)
        single = len(den) == 1 or (len({(a.base, n, p) for a, n, p in den}) == 1
                                   and all(n != 1 for _, n, _ in den))
        body += f"/{text}" if single else f"/({text})"
    return body


def join_terms(texts: Sequence[str]) -> str:
    out = ""
    for t in texts:
        if not out:
            out = t
        elif t.startswith("-"):
            out += f" - {t[1:]}"
        else:
            out += f" + {t}"
    return out or "0"
