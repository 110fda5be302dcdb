"""CSV loaders, writers, and the loader/writer round trip."""

from datetime import date

import pytest

from carechoice.domain import ExclusionReason, HospitalLevel
from carechoice.ingest import (
    DataPaths,
    IngestError,
    STANDARD_FILENAMES,
    load_dataset,
    load_patients,
    load_visits,
    write_dataset,
)
from conftest import make_dataset, make_patient, make_provider, make_visit


def write_minimal_tree(root, visits_rows=None, patients_rows=None):
    """A one-patient data directory; rows may be overridden per test."""
    (root / "visits.csv").write_text(
        "patient_id,provider_id,date,primary_dx,dx_codes,treatment_codes,triage,catastrophic,setting\n"
        + "".join(visits_rows if visits_rows is not None
                  else ["P1,H1,2010-06-15,D001,D001|D002,,3,0,outpatient\n"])
    )
    (root / "patients.csv").write_text(
        "patient_id,birth_date,gender,low_income\n"
        + "".join(patients_rows if patients_rows is not None
                  else ["P1,1970-05-04,female,0\n"])
    )
    (root / "providers.csv").write_text("provider_id,level,region_code\nH1,3,R1\n")
    (root / "density.csv").write_text("region_code,physician_density\nR1,20.5\n")
    (root / "calendar.csv").write_text(
        "date,is_workday\n2010-06-14,1\n2010-06-15,1\n2010-06-16,1\n"
    )
    (root / "codes_surgery.txt").write_text("T100\n")
    (root / "codes_er.txt").write_text("T900\n")
    (root / "codes_chronic_dx.txt").write_text("D001\n")
    (root / "codes_catastrophic_dx.txt").write_text("D190\n")
    return DataPaths.from_dir(root)


class TestLoaders:
    def test_minimal_tree_loads(self, tmp_path):
        paths = write_minimal_tree(tmp_path)
        dataset, audit = load_dataset(paths)
        assert len(dataset.visits) == 1
        assert sum(audit.values()) == 0
        visit = dataset.visits[0]
        assert visit.primary_dx == "D001"
        assert visit.dx_codes == frozenset({"D001", "D002"})
        assert visit.triage_level == 3
        assert dataset.providers["H1"].level == HospitalLevel.CLINIC
        assert dataset.region_stats["R1"] == 20.5

    def test_primary_dx_joins_dx_codes(self, tmp_path):
        paths = write_minimal_tree(
            tmp_path, ["P1,H1,2010-06-15,D009,D001,,,0,outpatient\n"]
        )
        dataset, _ = load_dataset(paths)
        assert dataset.visits[0].dx_codes == frozenset({"D009", "D001"})

    def test_missing_column_is_an_error(self, tmp_path):
        write_minimal_tree(tmp_path)
        (tmp_path / "patients.csv").write_text("patient_id,gender\nP1,female\n")
        with pytest.raises(IngestError, match="birth_date"):
            load_dataset(DataPaths.from_dir(tmp_path))

    def test_triage_out_of_range(self, tmp_path):
        paths = write_minimal_tree(
            tmp_path, ["P1,H1,2010-06-15,D001,,,9,0,outpatient\n"]
        )
        with pytest.raises(IngestError, match="triage"):
            load_visits(paths.visits)

    def test_bad_setting(self, tmp_path):
        paths = write_minimal_tree(
            tmp_path, ["P1,H1,2010-06-15,D001,,,,0,telehealth\n"]
        )
        with pytest.raises(IngestError, match="setting"):
            load_visits(paths.visits)

    def test_bad_date(self, tmp_path):
        paths = write_minimal_tree(
            tmp_path, ["P1,H1,15/06/2010,D001,,,,0,outpatient\n"]
        )
        with pytest.raises(IngestError, match="date"):
            load_visits(paths.visits)

    def test_bad_level(self, tmp_path):
        write_minimal_tree(tmp_path)
        (tmp_path / "providers.csv").write_text("provider_id,level,region_code\nH1,7,R1\n")
        with pytest.raises(IngestError, match="level"):
            load_dataset(DataPaths.from_dir(tmp_path))

    def test_comment_and_blank_lines_skipped(self, tmp_path):
        paths = write_minimal_tree(tmp_path)
        original = (tmp_path / "visits.csv").read_text()
        header, row = original.splitlines()
        (tmp_path / "visits.csv").write_text(f"# generated for a test\n{header}\n\n{row}\n")
        dataset, _ = load_dataset(paths)
        assert len(dataset.visits) == 1

    def test_duplicate_patient_same_gender_merges(self, tmp_path):
        paths = write_minimal_tree(
            tmp_path,
            patients_rows=["P1,1970-05-04,female,0\n", "P1,1970-05-04,female,1\n"],
        )
        patients = load_patients(paths.patients)
        assert len(patients) == 1
        assert not patients["P1"].gender_conflict
        assert patients["P1"].low_income  # any duplicate row claiming support counts

    def test_duplicate_patient_gender_conflict_flagged(self, tmp_path):
        paths = write_minimal_tree(
            tmp_path,
            visits_rows=[
                "P1,H1,2010-06-15,D001,,,,0,outpatient\n",
                "P2,H1,2010-06-15,D001,,,,0,outpatient\n",
            ],
            patients_rows=[
                "P1,1970-05-04,female,0\n",
                "P1,1970-05-04,male,0\n",
                "P2,1980-01-01,male,0\n",
            ],
        )
        patients = load_patients(paths.patients)
        assert patients["P1"].gender_conflict
        dataset, audit = load_dataset(paths)
        assert audit[ExclusionReason.CONFLICTING_GENDER] == 1
        assert audit[ExclusionReason.NO_VISITS] == 1
        assert list(dataset.patients) == ["P2"]

    def test_empty_fields_become_none(self, tmp_path):
        paths = write_minimal_tree(
            tmp_path,
            ["P1,H1,,D001,,,,0,outpatient\n", "P1,H1,2010-06-15,D001,,,,0,outpatient\n"],
        )
        visits = load_visits(paths.visits)
        assert visits[0].visit_date is None or visits[1].visit_date is None
        _, audit = load_dataset(paths)
        assert audit[ExclusionReason.MISSING_VISIT_DATE] == 1


class TestRoundTrip:
    def build(self):
        patients = {
            "P1": make_patient(),
            "P2": make_patient("P2", birth=date(1990, 12, 31), gender="male"),
        }
        providers = {
            "H1": make_provider(),
            "H2": make_provider("H2", HospitalLevel.MEDICAL_CENTER, "R2"),
        }
        visits = [
            make_visit(),
            make_visit(
                pid="P2",
                provider="H2",
                when=date(2009, 2, 1),
                dx="D042",
                dx_codes=frozenset({"D042", "D190"}),
                treatment_codes=frozenset({"T100", "T900"}),
                triage_level=1,
                catastrophic_illness=True,
                setting="emergency",
            ),
        ]
        return make_dataset(
            patients=patients,
            providers=providers,
            visits=visits,
            region_stats={"R1": 20.0, "R2": 31.25},
        )

    def test_write_then_load_preserves_everything(self, tmp_path):
        ds = self.build()
        paths = write_dataset(ds, tmp_path)
        loaded, audit = load_dataset(paths)
        assert sum(audit.values()) == 0
        assert loaded.patients == ds.patients
        assert loaded.providers == ds.providers
        assert set(loaded.visits) == set(ds.visits)
        assert loaded.region_stats == ds.region_stats
        assert loaded.code_sets == ds.code_sets
        assert loaded.calendar.entries == ds.calendar.entries

    def test_write_is_deterministic(self, tmp_path):
        ds = self.build()
        write_dataset(ds, tmp_path / "a")
        write_dataset(ds, tmp_path / "b")
        for name in STANDARD_FILENAMES.values():
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_header_comment_written_and_ignored_on_load(self, tmp_path):
        ds = self.build()
        paths = write_dataset(ds, tmp_path, header_comment="config_hash=deadbeef")
        first = (tmp_path / "visits.csv").read_text().splitlines()[0]
        assert first == "# config_hash=deadbeef"
        loaded, _ = load_dataset(paths)
        assert set(loaded.visits) == set(ds.visits)

    def test_missing_file_is_an_error(self, tmp_path):
        ds = self.build()
        paths = write_dataset(ds, tmp_path)
        (tmp_path / "density.csv").unlink()
        with pytest.raises(IngestError):
            load_dataset(paths)

    def test_float_density_round_trips_exactly(self, tmp_path):
        ds = make_dataset(
            visits=[make_visit()], region_stats={"R1": 0.1 + 0.2}
        )
        paths = write_dataset(ds, tmp_path)
        loaded, _ = load_dataset(paths)
        assert loaded.region_stats["R1"] == 0.1 + 0.2
