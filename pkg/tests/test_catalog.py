"""
Tests for the identity catalog: loading, coverage, verification and reports.
"""
import json
import os
from fractions import Fraction

import pytest

from catalog import (
    Catalog,
    IdentityRecord,
    compile_record,
    load_catalog,
    parse_catalog,
    render_reports,
    verify,
    verify_all,
    write_text,
)
from errors import SchemaError, UnknownIdentity
from products import RhsExpr
from qseries import QSeries
from search import canonical_key
from summation import bressoud_spec

# display labels that must be encoded exactly once
COVERAGE_MANIFEST = [
    "eq:1.1", "eq:1.2", "S.16", "S.20", "eq:3.9", "eq:1.17", "eq:5.14",
    "eq:6.25", "eq:6.26", "eq:6.27", "eq:6.28", "eq:6.29", "conj:6.3",
    "Sills-5.35", "Sills-5.68", "Sills-5.69", "S.4", "S.5", "S.13", "S.117",
    "S.118", "S.119", "eq-Zagier", "intro-id-alpha",
]

# (record, right side with the modulus perturbed)
MUTATIONS = [
    ("Rama-1", "1/(q,q^4;q^7)_oo"),
    ("Rama-2", "1/(q^2,q^3;q^7)_oo"),
    ("Slater16", "1/((q^2,q^3;q^7)_oo(-q^2;q^2)_oo)"),
    ("Slater20", "1/((q,q^4;q^7)_oo(-q^2;q^2)_oo)"),
    ("eq:3.9", "1/(q^2,q^3;q^7)_oo"),
    ("Rogers-330", "(q^4,q^6,q^12;q^12)_oo/(q;q)_oo"),
    ("Slater44", "(q^2,q^8,q^12;q^12)_oo/(q;q)_oo"),
    ("Bressoud-1", "(q^3,q^3,q^7;q^7)_oo/(q;q)_oo"),
    ("(1,2,2)-1", "(q,q^7,q^9;q^9)_oo/(q;q)_oo"),
    ("Gollnitz-2.22", "1/(q,q^5,q^6;q^9)_oo"),
]


@pytest.fixture(scope="module")
def catalog():
    return load_catalog()


def rama_record(**overrides):
    data = {"id": "Rama-1", "aliases": ["eq:1.1"], "status": "classical",
            "lhs": [{"vars": "n", "exponent": "n^2"}], "rhs": "1/(q,q^4;q^5)_oo"}
    data.update(overrides)
    return data


class TestLoadCatalog:
    """Loading and validating catalog files"""

    def test_shipped_catalog_size(self, catalog):
        assert len(catalog) >= 180

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text("")

        assert len(load_catalog(path)) == 0

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{\"schema_version\": 1,")

        with pytest.raises(SchemaError):
            load_catalog(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(SchemaError):
            load_catalog(tmp_path / "nowhere.json")

    def test_round_trip_through_file(self, tmp_path):
        # Setup
        path = tmp_path / "small.json"
        path.write_text(json.dumps({"schema_version": 1, "records": [rama_record()]}))

        # Execute
        small = load_catalog(path)

        # Verify
        assert len(small) == 1
        assert small.lookup("eq:1.1").id == "Rama-1"

    def test_wrong_schema_version(self):
        with pytest.raises(SchemaError):
            parse_catalog({"schema_version": 2, "records": []})

    def test_malformed_exponent_names_record(self):
        with pytest.raises(SchemaError) as exc_info:
            compile_record(rama_record(id="broken", lhs=[{"vars": "n", "exponent": "n^3"}]))

        assert "broken" in str(exc_info.value)

    def test_unknown_field(self):
        with pytest.raises(SchemaError) as exc_info:
            compile_record(rama_record(product="1/(q;q)_oo"))

        assert "Rama-1" in str(exc_info.value)

    def test_bad_notation_names_field(self):
        with pytest.raises(SchemaError) as exc_info:
            compile_record(rama_record(rhs="1/(q,q^4;q^5"))

        assert "rhs" in str(exc_info.value)

    def test_needs_right_side(self):
        data = rama_record()
        del data["rhs"]

        with pytest.raises(SchemaError):
            compile_record(data)

    def test_duplicate_labels(self):
        records = [rama_record(), rama_record(id="Rama-1-again")]

        with pytest.raises(SchemaError) as exc_info:
            parse_catalog({"schema_version": 1, "records": records})

        assert "eq:1.1" in str(exc_info.value)

    def test_generator_needs_arguments(self):
        with pytest.raises(SchemaError):
            compile_record(rama_record(lhs=[{"generator": "bressoud", "k": 3}], rhs=None))

    def test_generated_right_side(self):
        record = compile_record({"id": "AG-3-3", "status": "classical",
                                 "lhs": [{"generator": "andrews_gordon", "k": 3, "s": 3}]})

        assert record.rhs is not None


class TestLookup:
    def test_by_id_and_alias(self, catalog):
        assert catalog.lookup("Rama-2") is catalog.lookup("eq:1.2")

    def test_unknown(self, catalog):
        with pytest.raises(UnknownIdentity):
            catalog.lookup("nosuch")

    def test_select_by_status(self, catalog):
        conjectures = catalog.select(status="conjecture")

        assert {r.id for r in conjectures} >= {"conj-13"}
        assert all(r.status == "conjecture" for r in conjectures)

    def test_select_by_substring(self, catalog):
        ids = [r.id for r in catalog.select(substring="Slater11")]

        assert "Slater117" in ids
        assert "Slater117-second-form" in ids


class TestCoverage:
    """Every encoded display label appears once"""

    def test_labels_unique(self, catalog):
        labels = catalog.all_labels()

        assert len(labels) == len(set(labels))

    @pytest.mark.parametrize("label", COVERAGE_MANIFEST)
    def test_manifest_label_present_once(self, catalog, label):
        assert catalog.all_labels().count(label) == 1

    def test_out_of_scope_is_explicit(self, catalog):
        excluded = {item.label for item in catalog.out_of_scope}

        assert "Lemma 6.1" in excluded
        assert excluded.isdisjoint(catalog.all_labels())

    def test_statuses_present(self, catalog):
        assert {r.status for r in catalog} == {"classical", "paper-new", "non-modular", "conjecture", "misprint"}


class TestDoubleEncoding:
    """The literal rank-two Bressoud records match the generated ones"""

    @pytest.mark.parametrize("label,s", [("Bressoud-1", 3), ("Bressoud-2", 2), ("Bressoud-3", 1)])
    def test_same_canonical_key(self, catalog, label, s):
        literal = catalog.lookup(label).lhs[0]

        assert canonical_key(literal) == canonical_key(bressoud_spec(3, s))


class TestRecordProperties:
    def test_conductor(self, catalog):
        assert catalog.lookup("eq:1.1").conductor == 1
        assert catalog.lookup("eq:6.26").conductor == 4

    def test_working_order(self, catalog):
        assert catalog.lookup("eq:1.1").working_order(50) == 50
        assert catalog.lookup("eq:6.26").working_order(50) == 40
        assert catalog.lookup("Laughlin-6.1.3").working_order(50) == 30

    def test_half_integral_exponents(self, catalog):
        record = catalog.lookup("Zagier-1-0")

        assert record.exponent_denominator == 2
        assert record.working_order(50) == 40

    def test_parameters(self, catalog):
        assert catalog.lookup("eq:5.14").parameters == ["a"]
        assert catalog.lookup("eq:1.1").parameters == []

    def test_degree_bound(self, catalog):
        record = catalog.lookup("eq-Cao-Wang-Thm31")

        assert record.degree_bound(8) == 6
        assert record.degree_bound(4) == 4
        assert catalog.lookup("eq:1.1").degree_bound(8) is None


class TestVerify:
    """Comparing both sides of a record"""

    def test_rogers_ramanujan_passes(self, catalog):
        report = verify(catalog.lookup("eq:1.1"), 50)

        assert report.result == "pass"
        assert report.order == 50
        assert report.mismatch_exponent is None

    def test_double_sum_passes(self, catalog):
        assert verify(catalog.lookup("eq:3.9"), 50).passed

    def test_parameterized_record(self, catalog):
        report = verify(catalog.lookup("eq:5.14"), 30, param_degree=4)

        assert report.passed
        assert report.param_degree == 4

    def test_gaussian_coefficients(self, catalog):
        assert verify(catalog.lookup("eq:6.26"), 30).passed

    @pytest.mark.parametrize("label,mutated", MUTATIONS)
    def test_mutated_modulus_fails_early(self, catalog, label, mutated):
        record = catalog.lookup(label)
        broken = record.model_copy(update={"rhs": RhsExpr.from_text(mutated)})

        report = verify(broken, 20)

        assert report.result == "fail"
        assert Fraction(report.mismatch_exponent) <= 12
        assert report.lhs_coefficient != report.rhs_coefficient

    def test_mutated_shift_fails(self, catalog):
        record = catalog.lookup("eq:1.1")
        product = record.rhs.terms[0]
        broken = record.model_copy(update={"rhs": RhsExpr.single(product.model_copy(update={"shift": 1}))})

        report = verify(broken, 20)

        assert report.result == "fail"
        assert report.mismatch_exponent == "0"

    def test_infrastructure_failure(self):
        record = compile_record(rama_record(lhs=[{"vars": "i j", "exponent": "(i-j)^2"}]))

        report = verify(record, 10)

        assert report.result == "infrastructure-fail"
        assert "NonSummable" in report.message

    def test_cross_terms_with_graded_coordinate(self, catalog):
        """j is boxed by a^j; i and k stay free with a j-dependent linear part"""
        report = verify(catalog.lookup("(1,2,2)--2"), 30)

        assert report.result == "pass"

    def test_corrected_root_of_unity_record(self, catalog):
        assert verify(catalog.lookup("eq:6.27"), 20).passed

    def test_known_misprint(self, catalog):
        report = verify(catalog.lookup("eq-MSZ-mod12"), 20)

        assert report.result == "fail"
        assert report.known_misprint
        assert report.mismatch_exponent == "6"
        assert (report.lhs_coefficient, report.rhs_coefficient) == ("9", "8")
        assert "known misprint, differs at q^6" in report.describe()

    def test_short_series_is_infrastructure_fail(self, catalog, monkeypatch):
        """A side known to a lower order than requested is never reported as a pass"""
        monkeypatch.setattr(IdentityRecord, "eval_lhs",
                            lambda self, order, param_degree=None: QSeries.one().truncate(order - 5))

        report = verify(catalog.lookup("eq:1.1"), 20)

        assert report.result == "infrastructure-fail"
        assert "InsufficientPrecision" in report.message


class TestVerifyAll:
    @pytest.fixture
    def small(self, catalog):
        return [catalog.lookup(label) for label in ("eq:1.2", "eq:1.1", "S.20", "conj:6.3")]

    def test_summary(self, small):
        reports, summary = verify_all(small, 20)

        assert [r.id for r in reports] == sorted(r.id for r in reports)
        assert summary.total == 4
        assert summary.passed == 3
        assert summary.consistent_conjectures == 1
        assert summary.ok

    def test_jobs_do_not_change_reports(self, small):
        serial, _ = verify_all(small, 20, jobs=1)
        parallel, _ = verify_all(small, 20, jobs=2)

        assert [(r.id, r.result) for r in serial] == [(r.id, r.result) for r in parallel]

    def test_failure_in_summary(self, catalog):
        record = catalog.lookup("eq:1.1")
        broken = record.model_copy(update={"rhs": RhsExpr.from_text("1/(q,q^4;q^7)_oo")})

        _, summary = verify_all(Catalog(records=(broken,)), 20)

        assert summary.failed == 1
        assert not summary.ok

    def test_misprint_counted_apart(self, catalog):
        records = [catalog.lookup("eq:1.1"), catalog.lookup("eq-MSZ-mod12")]

        _, summary = verify_all(records, 20)

        assert summary.passed == 1
        assert summary.failed == 0
        assert summary.known_misprints == 1
        assert summary.ok


class TestReports:
    """Report rendering and output"""

    @pytest.fixture
    def reports(self, catalog):
        return verify_all([catalog.lookup("eq:1.1"), catalog.lookup("conj:6.3")], 15)

    def test_text(self, reports):
        text = render_reports(*reports, "text")

        assert "Rama-1: pass to q^15" in text
        assert "conj-13: consistent to q^15" in text
        assert text.splitlines()[-1].startswith("2 records: 1 pass")
        assert text.splitlines()[-1].endswith("1 conjectures consistent, 0 known misprints")

    def test_structured(self, reports):
        payload = json.loads(render_reports(*reports, "structured"))

        assert [r["result"] for r in payload["reports"]] == ["pass", "pass"]
        assert payload["summary"]["total"] == 2

    def test_write_text(self, tmp_path, reports):
        path = tmp_path / "out" / "report.txt"

        write_text(path, render_reports(*reports, "text"))

        assert path.read_text().endswith("\n")
        assert "Rama-1" in path.read_text()


class TestCatalogSmoke:
    """Every shipped record at a low order"""

    def test_verify_all_at_low_order(self, catalog):
        reports, summary = verify_all(catalog, 20, jobs=os.cpu_count() or 1)

        problems = [r.describe() for r in reports if not (r.passed or r.known_misprint)]
        assert problems == []
        assert summary.known_misprints == 1
        assert summary.ok
