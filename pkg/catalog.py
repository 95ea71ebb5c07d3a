"""
Identity catalog: records, loading, lookup and verification.

A catalog file is JSON of the form

    {"schema_version": 1, "records": [...], "out_of_scope": [...]}

Each record names a left side (one or more sum sides, or a generator
instance), a right side (a product expression, further sum sides, or both)
and optionally constant-term scripts that reproduce the left side.
"""
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterator, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from ctkit import CtReport, CtScript, check_ct_equals_sum
from errors import NotationError, QSeriesError, SchemaError, UnknownIdentity
from products import RhsExpr, eval_rhs
from qseries import QSeries, scalar_conductor
from summation import (
    MultiSumSpec,
    andrews_gordon_rhs,
    andrews_gordon_spec,
    bressoud_rhs,
    bressoud_spec,
    build_spec,
    eval_sum_sides,
    thm31_spec,
    zagier_spec,
)

logger = logging.getLogger(__name__)

CATALOG_SCHEMA_VERSION = 1
DEFAULT_CATALOG = Path(__file__).resolve().parent / "data" / "catalog.json"
# conductor-4 and half-integral records are checked to this order in bulk runs
REDUCED_ORDER = 40

# a misprint record encodes a display as printed; its mismatch is expected and counted apart
Status = Literal["classical", "paper-new", "non-modular", "conjecture", "misprint"]
Outcome = Literal["pass", "fail", "infrastructure-fail"]


# ---------------------------------------------------------------------------
# File schema
# ---------------------------------------------------------------------------

class SumEntry(BaseModel):
    """Text form of one sum side."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    vars: str
    exponent: str
    sign: str = "0"
    bases: Optional[List[Union[int, str]]] = None
    params: Dict[str, str] = Field(default_factory=dict)
    roots: Dict[int, str] = Field(default_factory=dict)
    factors: List[str] = Field(default_factory=list)
    prefactor: Optional[str] = None
    scalar: Union[int, str] = 1
    strict: bool = False
    ranges: Dict[str, Union[int, str]] = Field(default_factory=dict)

    def compile(self) -> MultiSumSpec:
        bases = None if self.bases is None else [Fraction(str(b)) for b in self.bases]
        return build_spec(self.vars, self.exponent, sign=self.sign, bases=bases, params=self.params,
                          roots=self.roots, factors=self.factors, prefactor=self.prefactor,
                          scalar=self.scalar, strict=self.strict, ranges=self.ranges)


class GeneratorEntry(BaseModel):
    """A generated sum side: Andrews-Gordon, Bressoud, Zagier's family or its companion."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    generator: Literal["andrews_gordon", "bressoud", "zagier", "thm31"]
    k: Optional[int] = None
    s: Optional[int] = None
    alpha: Optional[str] = None
    nu: str = "0"

    def build(self) -> Tuple[MultiSumSpec, RhsExpr]:
        if self.generator in ("andrews_gordon", "bressoud"):
            if self.k is None or self.s is None:
                raise SchemaError(f"generator {self.generator} needs k and s")
            if self.generator == "andrews_gordon":
                return andrews_gordon_spec(self.k, self.s), andrews_gordon_rhs(self.k, self.s)
            return bressoud_spec(self.k, self.s), bressoud_rhs(self.k, self.s)
        if self.alpha is None:
            raise SchemaError(f"generator {self.generator} needs alpha")
        if self.generator == "zagier":
            return zagier_spec(Fraction(self.alpha), Fraction(self.nu))
        return thm31_spec(Fraction(self.alpha))


class ProofEntry(BaseModel):
    """A constant-term script in file form; see ctkit.CtFactor.from_dict for factor keys."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    factors: List[Dict[str, Any]]
    scalar: Union[int, str] = 1
    prefactor: Optional[str] = None
    rhs: Optional[str] = None
    compare: Literal["lhs", "rhs"] = "lhs"
    note: str = ""


class RecordEntry(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    id: str
    aliases: List[str] = Field(default_factory=list)
    status: Status
    lhs: List[Union[GeneratorEntry, SumEntry]]
    rhs: Optional[str] = None
    rhs_sums: List[SumEntry] = Field(default_factory=list)
    param_degree: Optional[int] = Field(default=None, ge=0)
    max_order: Optional[int] = Field(default=None, ge=1)
    proof: List[ProofEntry] = Field(default_factory=list)
    notes: str = ""


class OutOfScope(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    label: str
    reason: str


class CatalogFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1]
    records: List[Dict[str, Any]] = Field(default_factory=list)
    out_of_scope: List[OutOfScope] = Field(default_factory=list)


# ---------------------------------------------------------------------------
# Compiled records
# ---------------------------------------------------------------------------

class IdentityRecord(BaseModel):
    """A compiled identity: sum(lhs) = rhs + sum(rhs_sums)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    id: str
    aliases: Tuple[str, ...] = ()
    status: Status
    lhs: Tuple[MultiSumSpec, ...]
    rhs: Optional[RhsExpr] = None
    rhs_sums: Tuple[MultiSumSpec, ...] = ()
    param_degree: Optional[int] = None
    max_order: Optional[int] = None
    proofs: Tuple[CtScript, ...] = ()
    notes: str = ""
    source: Dict[str, Any] = Field(default_factory=dict)

    @property
    def labels(self) -> Tuple[str, ...]:
        return (self.id,) + self.aliases

    @property
    def parameters(self) -> List[str]:
        names = set()
        for spec in self.lhs + self.rhs_sums:
            names.update(spec.param_names)
        if self.rhs is not None:
            for t in self.rhs.terms:
                names.update(n for n, _ in t.params)
                for f in t.factors:
                    names.update(n for n, _ in f.arg.params)
        return sorted(names)

    @property
    def conductor(self) -> int:
        """Order of the roots of unity appearing anywhere in the identity."""
        m = 1
        for spec in self.lhs + self.rhs_sums:
            for r in spec.roots:
                m = max(m, r.conductor)
            for f in spec.factors:
                m = max(m, scalar_conductor(f.coefficient))
        if self.rhs is not None:
            for t in self.rhs.terms:
                m = max(m, scalar_conductor(t.scalar))
                for f in t.factors:
                    m = max(m, scalar_conductor(f.arg.coefficient))
        return m

    @property
    def exponent_denominator(self) -> int:
        return max(spec.exponent_denominator() for spec in self.lhs + self.rhs_sums)

    def degree_bound(self, param_degree: Optional[int]) -> Optional[int]:
        """Parameter degree used for this record, or None when it has no parameters."""
        if not self.parameters:
            return None
        if self.param_degree is not None:
            return self.param_degree if param_degree is None else min(param_degree, self.param_degree)
        return param_degree

    def working_order(self, order: int) -> int:
        """``order`` reduced for expensive records."""
        if self.conductor == 4 or self.exponent_denominator > 1:
            order = min(order, REDUCED_ORDER)
        if self.max_order is not None:
            order = min(order, self.max_order)
        return order

    def eval_lhs(self, order, param_degree: Optional[int] = None) -> QSeries:
        return eval_sum_sides(self.lhs, order, self.degree_bound(param_degree))

    def eval_rhs(self, order, param_degree: Optional[int] = None) -> QSeries:
        m = self.degree_bound(param_degree)
        total = eval_sum_sides(self.rhs_sums, order, m)
        if self.rhs is not None:
            total = total + eval_rhs(self.rhs, order, m)
        return total

    def summary(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "aliases": list(self.aliases),
            "status": self.status,
            "rank": [spec.rank for spec in self.lhs],
            "index": [[str(b) for b in spec.index] for spec in self.lhs],
            "parameters": self.parameters,
            "conductor": self.conductor,
            "rhs": None if self.rhs is None else self.rhs.to_text(),
            "proof_scripts": len(self.proofs),
            "notes": self.notes,
        }


class Catalog(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    records: Tuple[IdentityRecord, ...] = ()
    out_of_scope: Tuple[OutOfScope, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[IdentityRecord]:
        return iter(self.records)

    def lookup(self, label: str) -> IdentityRecord:
        """Record by id or alias."""
        for record in self.records:
            if label in record.labels:
                return record
        raise UnknownIdentity(f"no catalog record with id or alias {label!r}")

    def select(self, status: Optional[str] = None, substring: Optional[str] = None) -> List[IdentityRecord]:
        out = []
        for record in self.records:
            if status is not None and record.status != status:
                continue
            if substring and not any(substring in label for label in record.labels):
                continue
            out.append(record)
        return out

    def all_labels(self) -> List[str]:
        return [label for record in self.records for label in record.labels]


def _describe(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        parts.append(f"{loc}: {err['msg']}" if loc else err["msg"])
    return "; ".join(parts)


def compile_record(data: Dict[str, Any], position: int = 0) -> IdentityRecord:
    """Validate and compile one record; errors name the record and field."""
    label = data.get("id", f"#{position}") if isinstance(data, dict) else f"#{position}"
    try:
        entry = RecordEntry.model_validate(data)
    except ValidationError as exc:
        raise SchemaError(f"record {label}: {_describe(exc)}")
    lhs, generated_rhs = [], []
    for i, side in enumerate(entry.lhs):
        try:
            if isinstance(side, GeneratorEntry):
                spec, rhs = side.build()
                lhs.append(spec)
                generated_rhs.append(rhs)
            else:
                lhs.append(side.compile())
        except (QSeriesError, ValueError) as exc:
            raise SchemaError(f"record {label}: lhs[{i}]: {exc}")
    try:
        rhs_sums = tuple(side.compile() for side in entry.rhs_sums)
    except (QSeriesError, ValueError) as exc:
        raise SchemaError(f"record {label}: rhs_sums: {exc}")
    if entry.rhs is not None:
        try:
            rhs = RhsExpr.from_text(entry.rhs)
        except (NotationError, ValueError) as exc:
            raise SchemaError(f"record {label}: rhs: {exc}")
    elif len(generated_rhs) == 1 and len(lhs) == 1:
        rhs = generated_rhs[0]
    else:
        rhs = None
    if rhs is None and not rhs_sums:
        raise SchemaError(f"record {label}: rhs: a record needs a product side or rhs_sums")
    proofs = []
    for i, proof in enumerate(entry.proof):
        targets = tuple(lhs) if proof.compare == "lhs" else rhs_sums
        script = proof.model_dump(exclude={"compare"})
        script["param_degree"] = entry.param_degree
        try:
            proofs.append(CtScript.from_dict(script, targets))
        except (QSeriesError, ValueError) as exc:
            raise SchemaError(f"record {label}: proof[{i}]: {exc}")
    return IdentityRecord(id=entry.id, aliases=tuple(entry.aliases), status=entry.status, lhs=tuple(lhs),
                          rhs=rhs, rhs_sums=rhs_sums, param_degree=entry.param_degree,
                          max_order=entry.max_order, proofs=tuple(proofs), notes=entry.notes,
                          source=entry.model_dump(exclude_defaults=True))


def parse_catalog(data: Any) -> Catalog:
    try:
        document = CatalogFile.model_validate(data)
    except ValidationError as exc:
        raise SchemaError(f"catalog: {_describe(exc)}")
    records = [compile_record(item, i) for i, item in enumerate(document.records)]
    seen: Dict[str, str] = {}
    for record in records:
        for label in record.labels:
            if label in seen:
                raise SchemaError(f"record {record.id}: label {label!r} already used by {seen[label]}")
            seen[label] = record.id
    logger.info(f"Loaded {len(records)} catalog records")
    return Catalog(records=tuple(records), out_of_scope=tuple(document.out_of_scope))


def load_catalog(path: Union[str, Path, None] = None) -> Catalog:
    """Read and compile a catalog file; an empty file is an empty catalog."""
    path = Path(path).expanduser() if path else DEFAULT_CATALOG
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read catalog {path}: {exc}")
    if not text.strip():
        logger.warning(f"Catalog {path} is empty")
        return Catalog()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"catalog {path} is not valid JSON: {exc}")
    return parse_catalog(data)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

class VerifyReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    status: Status
    order: int
    param_degree: Optional[int] = None
    result: Outcome
    mismatch_exponent: Optional[str] = None
    lhs_coefficient: Optional[str] = None
    rhs_coefficient: Optional[str] = None
    message: str = ""
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.result == "pass"

    @property
    def known_misprint(self) -> bool:
        return self.result == "fail" and self.status == "misprint"

    def describe(self) -> str:
        degree = "" if self.param_degree is None else f", parameter degree {self.param_degree}"
        if self.result == "pass":
            verdict = f"consistent to q^{self.order}" if self.status == "conjecture" else f"pass to q^{self.order}"
        elif self.known_misprint:
            verdict = (f"known misprint, differs at q^{self.mismatch_exponent}: "
                       f"lhs {self.lhs_coefficient} vs rhs {self.rhs_coefficient}")
        elif self.result == "fail":
            verdict = (f"FAIL at q^{self.mismatch_exponent}: "
                       f"lhs {self.lhs_coefficient} vs rhs {self.rhs_coefficient}")
        else:
            verdict = f"INFRASTRUCTURE-FAIL: {self.message}"
        return f"{self.id}: {verdict}{degree} ({self.seconds:.2f}s)"


class VerifySummary(BaseModel):
    total: int = 0
    passed: int = 0
    failed: int = 0
    infrastructure: int = 0
    consistent_conjectures: int = 0
    known_misprints: int = 0
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.failed == 0 and self.infrastructure == 0


def verify(record: IdentityRecord, order: int, param_degree: Optional[int] = 8) -> VerifyReport:
    """Expand both sides of ``record`` to ``order`` and compare coefficientwise."""
    start = time.perf_counter()
    m = record.degree_bound(param_degree)
    common = {"id": record.id, "status": record.status, "order": order, "param_degree": m}
    try:
        lhs = record.eval_lhs(order, m).require_order(order, "left side")
        rhs = record.eval_rhs(order, m).require_order(order, "right side")
    except QSeriesError as exc:
        logger.error(f"{record.id}: {type(exc).__name__}: {exc}")
        return VerifyReport(result="infrastructure-fail", message=f"{type(exc).__name__}: {exc}",
                            seconds=time.perf_counter() - start, **common)
    mismatch = lhs.first_mismatch(rhs, Fraction(order))
    elapsed = time.perf_counter() - start
    if mismatch is None:
        logger.info(f"{record.id}: both sides agree to q^{order}")
        if record.status == "misprint":
            logger.warning(f"{record.id}: recorded as a misprint but both sides agree to q^{order}")
        return VerifyReport(result="pass", seconds=elapsed, **common)
    e, c_lhs, c_rhs = mismatch
    logger.warning(f"{record.id}: sides differ at q^{e}")
    return VerifyReport(result="fail", mismatch_exponent=str(e), lhs_coefficient=c_lhs.to_text(),
                        rhs_coefficient=c_rhs.to_text(), seconds=elapsed, **common)


def _verify_task(args) -> VerifyReport:
    record, order, param_degree = args
    return verify(record, record.working_order(order), param_degree)


def verify_all(catalog: Union[Catalog, Sequence[IdentityRecord]], order: int, param_degree: Optional[int] = 8,
               jobs: int = 1) -> Tuple[List[VerifyReport], VerifySummary]:
    """Verify every record at its working order; reports come back ordered by id."""
    start = time.perf_counter()
    records = list(catalog)
    tasks = [(record, order, param_degree) for record in records]
    if jobs > 1 and len(tasks) > 1:
        logger.info(f"Verifying {len(tasks)} records with {jobs} workers")
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_verify_task, tasks))
    else:
        reports = [_verify_task(task) for task in tasks]
    reports.sort(key=lambda r: r.id)
    summary = VerifySummary(
        total=len(reports),
        passed=sum(r.passed and r.status != "conjecture" for r in reports),
        failed=sum(r.result == "fail" and not r.known_misprint for r in reports),
        infrastructure=sum(r.result == "infrastructure-fail" for r in reports),
        consistent_conjectures=sum(r.passed and r.status == "conjecture" for r in reports),
        known_misprints=sum(r.known_misprint for r in reports),
        seconds=time.perf_counter() - start,
    )
    logger.info(f"Verified {summary.total} records: {summary.passed} pass, {summary.failed} fail, "
                f"{summary.infrastructure} infrastructure-fail, "
                f"{summary.consistent_conjectures} conjectures consistent, {summary.known_misprints} known misprints")
    return reports, summary


def replay_proofs(record: IdentityRecord, order: int) -> List[CtReport]:
    """Run the record's constant-term scripts against their targets."""
    reports = []
    for i, script in enumerate(record.proofs):
        report = check_ct_equals_sum(script, order)
        logger.info(f"{record.id} script {i}: {'pass' if report.passed else 'FAIL'} to q^{order}")
        reports.append(report)
    return reports


# ---------------------------------------------------------------------------
# Report output
# ---------------------------------------------------------------------------

def render_reports(reports: Sequence[VerifyReport], summary: Optional[VerifySummary], output_format: str) -> str:
    if output_format == "structured":
        payload: Dict[str, Any] = {"reports": [r.model_dump() for r in reports]}
        if summary is not None:
            payload["summary"] = summary.model_dump()
        return json.dumps(payload, indent=2)
    lines = [r.describe() for r in reports]
    if summary is not None:
        lines.append(f"{summary.total} records: {summary.passed} pass, {summary.failed} fail, "
                     f"{summary.infrastructure} infrastructure-fail, "
                     f"{summary.consistent_conjectures} conjectures consistent, {summary.known_misprints} known misprints")
    return "\n".join(lines)


@retry(stop=stop_after_attempt(3), wait=wait_exponential(multiplier=1, min=1, max=4),
       retry=retry_if_exception_type(OSError), reraise=True)
def write_text(path: Union[str, Path], text: str) -> None:
    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
