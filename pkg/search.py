"""
Grid search for new sum-product identities.

A search enumerates sum sides

    sum_x (-1)^(s.x) a^(g.x) q^(x^T A x + b.x) / prod_j (q^{n_j}; q^{n_j})_{x_j}

over a configured grid, drops duplicates under variable permutation and
global rescaling q -> q^r, and screens every survivor in two stages: a cheap
product recognition at the first-pass order and an exact comparison with the
recognized product at the confirmation order.  Candidates stream out in
enumeration order, so a run is deterministic for a given configuration and
shard, and the shards of a run partition the unsharded candidate set.
"""
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from catalog import Catalog, SumEntry
from errors import NonSummable, QSeriesError, SchemaError
from products import ProductExpr, RhsExpr, eval_rhs
from qseries import QSeries
from recognize import RecognizedProduct, prodmake, recognize
from summation import LinearForm, MultiSumSpec, contributing_points, eval_multisum

logger = logging.getLogger(__name__)

SEARCH_SCHEMA_VERSION = 1
VARIABLES = ("i", "j", "k", "l", "m", "n")


def _default_linear() -> List[str]:
    return [str(Fraction(n, 2)) for n in range(-2, 5)]


class SearchConfig(BaseModel):
    """Search grid and screening orders.

    ``index`` lists the denominator bases (n_1, ..., n_k); ``quadratic`` the
    diagonal coefficients of A, ``cross`` the coefficients of x_a x_b for
    a < b, ``linear`` the entries of b and ``signs`` the sign functionals.
    ``param_forms`` switches on the parameterized mode: each form g adds a
    variant with the factor a^(g.x), screened at a = q^s for every s in
    ``specializations``.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    schema_version: int
    rank: int = Field(default=1, ge=1, le=len(VARIABLES))
    index: List[List[int]] = Field(default_factory=lambda: [[1], [2], [4]])
    quadratic: List[str] = Field(default_factory=lambda: ["1/2", "1", "3/2", "2"])
    cross: List[str] = Field(default_factory=lambda: ["0"])
    linear: List[str] = Field(default_factory=_default_linear)
    signs: List[List[int]] = Field(default_factory=lambda: [[0], [1]])
    param_forms: List[List[int]] = Field(default_factory=list)
    specializations: List[int] = Field(default_factory=lambda: [0, 1, 2])
    first_order: int = 80
    confirm_order: int = 120
    max_period: int = 20
    out: Optional[str] = None
    jobs: int = Field(default=1, ge=1)
    shard_index: int = Field(default=0, ge=0)
    shard_count: int = Field(default=1, ge=1)
    tag_known: bool = True

    @model_validator(mode="after")
    def _check(self):
        if self.schema_version != SEARCH_SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}, expected {SEARCH_SCHEMA_VERSION}")
        if not self.confirm_order > self.first_order >= 4 * self.max_period:
            raise ValueError(f"orders must satisfy confirm_order > first_order >= 4 * max_period, got "
                             f"{self.confirm_order}, {self.first_order}, {self.max_period}")
        if self.shard_index >= self.shard_count:
            raise ValueError(f"shard {self.shard_index}/{self.shard_count} does not exist")
        for name, vectors in (("index", self.index), ("signs", self.signs), ("param_forms", self.param_forms)):
            for v in vectors:
                if len(v) != self.rank:
                    raise ValueError(f"{name} entry {v} does not have length {self.rank}")
        if any(b < 1 for v in self.index for b in v):
            raise ValueError("index bases must be positive")
        for text in self.quadratic + self.cross + self.linear:
            Fraction(text)
        return self

    def with_shard(self, index: int, count: int) -> "SearchConfig":
        return SearchConfig.model_validate({**self.model_dump(), "shard_index": index, "shard_count": count})

    def with_overrides(self, **updates: Any) -> "SearchConfig":
        """Copy with CLI overrides applied; ``None`` values are ignored."""
        data = {**self.model_dump(), **{k: v for k, v in updates.items() if v is not None}}
        return SearchConfig.model_validate(data)


def load_search_config(path: Union[str, Path]) -> SearchConfig:
    path = Path(path).expanduser()
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise SchemaError(f"cannot read search config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise SchemaError(f"search config {path} is not valid JSON: {exc}")
    try:
        return SearchConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first["loc"]) or "config"
        raise SchemaError(f"search config {path}: {loc}: {first['msg']}")


def parse_shard(text: str) -> Tuple[int, int]:
    """'i/n' -> (i, n) with 0 <= i < n."""
    try:
        index, count = (int(part) for part in text.split("/"))
    except ValueError:
        raise SchemaError(f"shard must look like i/n, got {text!r}")
    if count < 1 or not 0 <= index < count:
        raise SchemaError(f"shard {text!r} is out of range")
    return index, count


# ---------------------------------------------------------------------------
# Canonical keys
# ---------------------------------------------------------------------------

def _fraction_gcd(values: Iterable[Fraction]) -> Fraction:
    num, den = 0, 1
    for v in values:
        if v:
            num = math.gcd(num, abs(v.numerator))
            den = den * v.denominator // math.gcd(den, v.denominator)
    return Fraction(num, den) if num else Fraction(1)


def _rescale_factor(spec: MultiSumSpec) -> Fraction:
    values = list(spec.bases) + list(spec.linear) + [spec.constant]
    values += [c for row in spec.quad for c in row]
    for f in spec.factors:
        values += [f.base, f.offset.constant] + list(f.offset.coeffs)
    return _fraction_gcd(values)


def _form_key(form: LinearForm, r: Fraction = Fraction(1)) -> Tuple[str, ...]:
    return tuple(str(c / r) for c in form.coeffs) + (str(form.constant / r),)


def _shape_key(spec: MultiSumSpec, r: Fraction) -> str:
    parts = {
        "bases": [str(b / r) for b in spec.bases],
        "quad": [[str(c / r) for c in row] for row in spec.quad],
        "linear": [str(c / r) for c in spec.linear],
        "constant": str(spec.constant / r),
        "sign": [str(c % 2) for c in spec.sign.coeffs] + [str(spec.sign.constant % 2)],
        "lower": [None if b is None else b for b in spec.lower_bounds],
        "params": sorted((p.name, _form_key(p.form)) for p in spec.params),
        "roots": sorted((r_.conductor, _form_key(r_.form)) for r_ in spec.roots),
        "factors": sorted((str(f.coefficient), f.params, _form_key(f.offset, r), str(f.base / r),
                           None if f.subscript is None else _form_key(f.subscript), f.power, f.strict)
                          for f in spec.factors),
        "scalar": str(spec.scalar),
        "prefactor": None if spec.prefactor is None else spec.prefactor.to_text(),
    }
    return json.dumps(parts, sort_keys=True, default=str)


def canonical_key(spec: MultiSumSpec) -> str:
    """Key shared by sum sides that agree up to relabelling variables and q -> q^r."""
    r = Fraction(1) if spec.prefactor is not None else _rescale_factor(spec)
    return min(_shape_key(spec.permuted(perm), r) for perm in itertools.permutations(range(spec.rank)))


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

def _coefficient(c: Fraction) -> str:
    return str(c) if c.denominator == 1 else f"({c})"


def _exponent_text(variables: Sequence[str], diagonal, cross, linear) -> str:
    terms = []
    for v, c in zip(variables, diagonal):
        if c:
            terms.append(f"{_coefficient(c)}*{v}^2")
    for (a, b), c in zip(itertools.combinations(range(len(variables)), 2), cross):
        if c:
            terms.append(f"{_coefficient(c)}*{variables[a]}*{variables[b]}")
    for v, c in zip(variables, linear):
        if c:
            terms.append(f"{_coefficient(c)}*{v}")
    return " + ".join(terms) or "0"


def _vector_text(variables: Sequence[str], vector: Sequence[int]) -> str:
    terms = [f"{c}*{v}" for v, c in zip(variables, vector) if c]
    return " + ".join(terms) or "0"


def grid_points(cfg: SearchConfig) -> Iterator[SumEntry]:
    """Every grid point, in a fixed order."""
    variables = VARIABLES[:cfg.rank]
    pairs = cfg.rank * (cfg.rank - 1) // 2
    quadratic = [Fraction(c) for c in cfg.quadratic]
    cross = [Fraction(c) for c in cfg.cross]
    linear = [Fraction(c) for c in cfg.linear]
    forms: List[Optional[List[int]]] = [None] + list(cfg.param_forms)
    for index in cfg.index:
        for diagonal in itertools.product(quadratic, repeat=cfg.rank):
            for off in itertools.product(cross, repeat=pairs):
                for lin in itertools.product(linear, repeat=cfg.rank):
                    exponent = _exponent_text(variables, diagonal, off, lin)
                    for sign in cfg.signs:
                        for form in forms:
                            params = {} if form is None else {"a": _vector_text(variables, form)}
                            yield SumEntry(vars=" ".join(variables), exponent=exponent,
                                           sign=_vector_text(variables, sign),
                                           bases=[str(b) for b in index], params=params)


def search_points(cfg: SearchConfig) -> List[Tuple[int, str, SumEntry]]:
    """Deduplicated grid points of this shard as (position, key, entry).

    Deduplication runs over the whole grid before sharding, so every shard
    sees the same first representative of each key.
    """
    seen = set()
    position = 0
    out = []
    for entry in grid_points(cfg):
        key = canonical_key(entry.compile())
        if key in seen:
            continue
        seen.add(key)
        if position % cfg.shard_count == cfg.shard_index:
            out.append((position, key, entry))
        position += 1
    logger.info(f"Shard {cfg.shard_index}/{cfg.shard_count}: {len(out)} of {position} distinct grid points")
    return out


# ---------------------------------------------------------------------------
# Screening
# ---------------------------------------------------------------------------

class Specialization(BaseModel):
    model_config = ConfigDict(frozen=True)

    shift: int
    product: str


class Candidate(BaseModel):
    """A sum side whose expansion matched a recognized product to ``verified_to``."""

    model_config = ConfigDict(frozen=True)

    key: str
    position: int
    sum: SumEntry
    product: str
    shift: str
    period: int
    exponents: List[int]
    verified_to: int
    specializations: List[Specialization] = Field(default_factory=list)
    known: List[str] = Field(default_factory=list)

    def to_line(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True)


class ScreenResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    position: int
    outcome: str
    candidate: Optional[Candidate] = None
    reason: str = ""


class SearchStats(BaseModel):
    points: int = 0
    skipped_nonsummable: int = 0
    rejected: int = 0
    emitted: int = 0
    known: int = 0


def _leading_scalar(f: QSeries):
    c = f.coefficient(f.valuation)
    if not c.is_scalar():
        return None
    value = c.constant()
    return value if isinstance(value, (int, Fraction)) else None


def recognize_series(f: QSeries, order: int, max_period: int) -> Tuple[Optional[RecognizedProduct], Optional[RhsExpr]]:
    """Product form of a parameter-free series, allowing a rational leading constant."""
    if f.is_zero:
        return None, None
    lead = _leading_scalar(f)
    if lead is None:
        return None, None
    normalized = f.scale(Fraction(1) / Fraction(lead)) if lead != 1 else f
    length = math.floor(order - f.valuation)
    rp, rhs = recognize(normalized, length, max_period)
    if rhs is None:
        return rp, None
    if lead != 1:
        rhs = RhsExpr.single(rhs.terms[0].scaled(lead))
    return rp, rhs


def _screen_spec(spec: MultiSumSpec, cfg: SearchConfig):
    """(RecognizedProduct, RhsExpr) or a rejection reason."""
    for tv in contributing_points(spec, cfg.first_order):
        if tv.valuation is not None and tv.valuation < 0:
            return None, f"term at {tv.point} has negative valuation {tv.valuation}"
    f = eval_multisum(spec, cfg.first_order)
    if f.is_zero:
        return None, "sum vanishes"
    rp, rhs = recognize_series(f, cfg.first_order, cfg.max_period)
    if rhs is None:
        return None, "no periodic product"
    confirm = eval_multisum(spec, cfg.confirm_order)
    mismatch = confirm.first_mismatch(eval_rhs(rhs, cfg.confirm_order), Fraction(cfg.confirm_order))
    if mismatch is not None:
        return None, f"product breaks at q^{mismatch[0]}"
    return (rp, rhs), ""


def specializations_agree(found: Sequence[Tuple[int, RecognizedProduct]]) -> Optional[str]:
    """Why the products at a = q^s do not fit one family, or None when they do.

    One family means a common period and a prefactor exponent affine in s.
    """
    periods = sorted({rp.period for _, rp in found})
    if len(periods) > 1:
        return f"periods {periods} differ across specializations"
    s0, first = found[0]
    slopes = {(rp.shift - first.shift) / (s - s0) for s, rp in found[1:] if s != s0}
    if len(slopes) > 1:
        shifts = ", ".join(f"a=q^{s}: q^{rp.shift}" for s, rp in found)
        return f"prefactors {shifts} are not affine in the specialization"
    return None


def screen_point(args) -> ScreenResult:
    """Screen one grid point; the worker function of the pool."""
    position, key, entry, cfg = args
    try:
        spec = entry.compile()
        if not spec.params:
            found, reason = _screen_spec(spec, cfg)
            if found is None:
                return ScreenResult(position=position, outcome="rejected", reason=reason)
            rp, rhs = found
            specializations = []
        else:
            specializations = []
            recognized = []
            found = None
            for s in cfg.specializations:
                result, reason = _screen_spec(spec.specialize("a", shift=s), cfg)
                if result is None:
                    return ScreenResult(position=position, outcome="rejected", reason=f"a=q^{s}: {reason}")
                specializations.append(Specialization(shift=s, product=result[1].to_text()))
                recognized.append((s, result[0]))
                found = found or result
            reason = specializations_agree(recognized)
            if reason is not None:
                return ScreenResult(position=position, outcome="rejected", reason=reason)
            rp, rhs = found
    except NonSummable as exc:
        return ScreenResult(position=position, outcome="nonsummable", reason=str(exc))
    except QSeriesError as exc:
        return ScreenResult(position=position, outcome="rejected", reason=f"{type(exc).__name__}: {exc}")
    candidate = Candidate(key=key, position=position, sum=entry, product=rhs.to_text(), shift=str(rp.shift),
                          period=rp.period, exponents=list(rp.exponents[:rp.period * 2]),
                          verified_to=cfg.confirm_order, specializations=specializations)
    return ScreenResult(position=position, outcome="candidate", candidate=candidate)


# ---------------------------------------------------------------------------
# Known products
# ---------------------------------------------------------------------------

def product_signature(f: QSeries, length: int):
    """(leading constant, shift, prodmake exponents) of a rational series, or None."""
    if f.is_zero:
        return None
    lead = _leading_scalar(f)
    if lead is None:
        return None
    try:
        rp = prodmake(f.scale(Fraction(1) / Fraction(lead)), length)
    except QSeriesError:
        return None
    return str(lead), str(rp.shift), rp.exponents


def known_products(catalog: Catalog, length: int) -> Dict[Any, List[str]]:
    """Signature -> record ids for every parameter-free single-product right side."""
    index: Dict[Any, List[str]] = {}
    for record in catalog:
        if record.rhs is None or record.rhs_sums or len(record.rhs.terms) != 1 or record.parameters:
            continue
        try:
            f = eval_rhs(record.rhs, length + 1)
            signature = product_signature(f, length - max(0, math.ceil(f.valuation or 0)))
        except QSeriesError as exc:
            logger.debug(f"{record.id}: no product signature ({exc})")
            continue
        if signature is not None:
            index.setdefault(signature, []).append(record.id)
    logger.info(f"Indexed {len(index)} catalog products for known-tagging")
    return index


def tag_known(candidate: Candidate, index: Dict[Any, List[str]], length: int) -> Candidate:
    f = eval_rhs(RhsExpr.from_text(candidate.product), length + 1)
    signature = product_signature(f, length - max(0, math.ceil(f.valuation or 0)))
    ids = index.get(signature, [])
    return candidate.model_copy(update={"known": list(ids)}) if ids else candidate


# ---------------------------------------------------------------------------
# Driver and sink
# ---------------------------------------------------------------------------

def run_search(cfg: SearchConfig, catalog: Optional[Catalog] = None,
               stats: Optional[SearchStats] = None) -> Iterator[Candidate]:
    """Stream the candidates of ``cfg``'s shard in grid order."""
    stats = stats if stats is not None else SearchStats()
    points = search_points(cfg)
    tasks = [(position, key, entry, cfg) for position, key, entry in points]
    index = known_products(catalog, cfg.first_order) if catalog is not None and cfg.tag_known else None
    if cfg.jobs > 1 and len(tasks) > 1:
        pool = ProcessPoolExecutor(max_workers=cfg.jobs)
        results: Iterable[ScreenResult] = pool.map(screen_point, tasks, chunksize=8)
    else:
        pool = None
        results = map(screen_point, tasks)
    try:
        for result in results:
            stats.points += 1
            if result.outcome == "nonsummable":
                stats.skipped_nonsummable += 1
                logger.debug(f"point {result.position}: skipped, {result.reason}")
                continue
            if result.outcome == "rejected":
                stats.rejected += 1
                continue
            candidate = result.candidate
            if index is not None:
                candidate = tag_known(candidate, index, cfg.first_order)
                if candidate.known:
                    stats.known += 1
            stats.emitted += 1
            logger.info(f"Candidate {candidate.sum.exponent} / {candidate.sum.bases} -> {candidate.product}"
                        + (f" (known: {', '.join(candidate.known)})" if candidate.known else ""))
            yield candidate
    finally:
        if pool is not None:
            pool.shutdown()
    logger.info(f"Search finished: {stats.points} points, {stats.emitted} candidates "
                f"({stats.known} known), {stats.rejected} rejected, "
                f"{stats.skipped_nonsummable} not summable")


@retry(stop=stop_after_attempt(3), wait=wait_exponential(multiplier=1, min=1, max=4),
       retry=retry_if_exception_type(OSError), reraise=True)
def append_candidate(path: Union[str, Path], candidate: Candidate) -> None:
    """Append one candidate line to a JSONL sink."""
    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as sink:
        sink.write(candidate.to_line() + "\n")


def read_candidates(path: Union[str, Path]) -> List[Candidate]:
    lines = Path(path).expanduser().read_text(encoding="utf-8").splitlines()
    return [Candidate.model_validate_json(line) for line in lines if line.strip()]
