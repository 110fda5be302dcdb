"""Synthetic cohort generator: determinism, marginals, and audit accounting."""

import json
from collections import Counter
from datetime import date

import numpy as np
import pytest

from carechoice.domain import HospitalLevel
from carechoice.ingest import DataPaths, load_dataset
from carechoice.synthgen import (
    AGE_ANCHOR,
    MANIFEST_FILENAME,
    WINDOW_END,
    WINDOW_START,
    CohortSpec,
    cohort_spec_from_config,
    generate_cohort,
)


def read_tree(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


class TestCohortSpec:
    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError, match="n_patients"):
            CohortSpec(n_patients=0)
        with pytest.raises(ValueError, match="signal_strength"):
            CohortSpec(signal_strength=1.5)
        with pytest.raises(ValueError, match="loyalty"):
            CohortSpec(loyalty=0.0)
        with pytest.raises(ValueError, match="priors"):
            CohortSpec(prior_clinic=0.9)
        with pytest.raises(ValueError, match="dirty_count"):
            CohortSpec(dirty_count=-1)
        with pytest.raises(ValueError, match="n_regions"):
            CohortSpec(n_regions=1)

    def test_priors_normalize_and_follow_level_codes(self):
        spec = CohortSpec()
        priors = spec.priors
        assert priors.sum() == pytest.approx(1.0, abs=1e-12)
        assert priors[HospitalLevel.CLINIC] == max(priors)
        assert priors[HospitalLevel.MEDICAL_CENTER] == pytest.approx(
            spec.prior_center / (spec.prior_center + spec.prior_regional
                                 + spec.prior_district + spec.prior_clinic)
        )

    def test_lognormal_parameters_recover_the_target_moments(self):
        spec = CohortSpec()
        mu, sigma = spec.visits_lognormal
        mean = np.exp(mu + sigma**2 / 2)
        var = (np.exp(sigma**2) - 1) * np.exp(2 * mu + sigma**2)
        assert mean == pytest.approx(spec.visits_mean, rel=1e-12)
        assert np.sqrt(var) == pytest.approx(spec.visits_sd, rel=1e-12)


class TestSpecFromConfig:
    def test_parses_ints_and_floats_by_field_type(self):
        spec = cohort_spec_from_config(
            {
                "synth.n_patients": "250",
                "synth.signal_strength": "0.8",
                "synth.seed": "9",
                "synth.dirty_count": "3",
                "train.epochs": "50",
            }
        )
        assert spec.n_patients == 250
        assert isinstance(spec.n_patients, int)
        assert spec.signal_strength == 0.8
        assert spec.seed == 9
        assert spec.dirty_count == 3

    def test_unknown_option_is_rejected(self):
        with pytest.raises(ValueError, match="synth.n_patient"):
            cohort_spec_from_config({"synth.n_patient": "10"})

    def test_non_prefixed_keys_are_ignored(self):
        assert cohort_spec_from_config({"seed": "4"}).seed == 0


class TestDeterminism:
    def test_same_spec_gives_byte_identical_trees(self, tmp_path):
        spec = CohortSpec(n_patients=80, seed=5, signal_strength=0.6)
        a = generate_cohort(spec, tmp_path / "a")
        b = generate_cohort(spec, tmp_path / "b")
        assert read_tree(a.directory) == read_tree(b.directory)
        assert a.manifest == b.manifest

    def test_different_seed_changes_the_visits(self, tmp_path):
        a = generate_cohort(CohortSpec(n_patients=60, seed=1), tmp_path / "a")
        b = generate_cohort(CohortSpec(n_patients=60, seed=2), tmp_path / "b")
        assert a.paths.visits.read_bytes() != b.paths.visits.read_bytes()

    def test_header_comment_lands_on_every_csv(self, tmp_path):
        cohort = generate_cohort(
            CohortSpec(n_patients=30), tmp_path, header_comment="config_hash=abc123"
        )
        for path in (cohort.paths.patients, cohort.paths.visits, cohort.paths.providers):
            assert path.read_text().splitlines()[0] == "# config_hash=abc123"


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    spec = CohortSpec(n_patients=800, seed=11)
    return generate_cohort(spec, tmp_path_factory.mktemp("cohort"))


class TestCleanCohort:
    def test_reloads_without_exclusions(self, cohort):
        dataset, audit = load_dataset(DataPaths.from_dir(cohort.directory))
        assert audit == Counter()
        assert len(dataset.patients) == 800
        assert set(dataset.patients) == set(cohort.dataset.patients)
        assert len(dataset.visits) == cohort.manifest["n_visits"]

    def test_quota_marginals_are_exact(self, cohort):
        ds = cohort.dataset
        spec = CohortSpec(n_patients=800, seed=11)
        males = sum(p.gender == "male" for p in ds.patients.values())
        poor = sum(p.low_income for p in ds.patients.values())
        assert males == round(spec.male_rate * 800)
        assert poor == round(spec.low_income_rate * 800)

        n_visits = len(ds.visits)
        surgery = sum(bool(v.treatment_codes & ds.code_sets.surgery_codes) for v in ds.visits)
        er = sum(v.setting == "emergency" for v in ds.visits)
        severe = sum(
            v.catastrophic_illness or (v.triage_level is not None and v.triage_level <= 3)
            for v in ds.visits
        )
        workday = sum(ds.calendar.is_workday(v.visit_date) for v in ds.visits)
        assert surgery == round(spec.surgery_rate * n_visits)
        assert er == round(spec.er_rate * n_visits)
        assert severe == round(spec.severe_rate * n_visits)
        assert workday == round(spec.workday_rate * n_visits)

    def test_population_moments_near_targets(self, cohort):
        ds = cohort.dataset
        ages = np.array(
            [(AGE_ANCHOR - p.birth_date).days / 365.25 for p in ds.patients.values()]
        )
        assert abs(ages.mean() - 45.80) < 2.5
        counts = Counter(v.patient_id for v in ds.visits)
        assert abs(np.mean(list(counts.values())) - 16.70) < 2.0
        assert min(counts.values()) >= 1

    def test_dates_stay_inside_the_window_and_after_birth(self, cohort):
        ds = cohort.dataset
        for v in ds.visits:
            assert WINDOW_START <= v.visit_date <= WINDOW_END
            assert v.visit_date >= ds.patients[v.patient_id].birth_date

    def test_visits_are_canonically_sorted(self, cohort):
        keys = [v.sort_key() for v in cohort.dataset.visits]
        assert keys == sorted(keys)

    def test_er_visits_carry_triage_and_others_do_not(self, cohort):
        for v in cohort.dataset.visits:
            if v.setting == "emergency":
                assert v.triage_level in (1, 2, 3, 4, 5)
            else:
                assert v.triage_level is None

    def test_primary_dx_always_inside_dx_codes(self, cohort):
        assert all(v.primary_dx in v.dx_codes for v in cohort.dataset.visits)

    def test_loyalty_half_concentrates_visits_on_one_provider(self, cohort):
        by_patient = {}
        for v in cohort.dataset.visits:
            by_patient.setdefault(v.patient_id, []).append(v.provider_id)
        shares = [
            max(Counter(seq).values()) / len(seq)
            for seq in by_patient.values() if len(seq) >= 5
        ]
        assert 0.5 < np.mean(shares) < 0.9

    def test_manifest_shape(self, cohort):
        m = json.loads((cohort.directory / MANIFEST_FILENAME).read_text())
        assert m == cohort.manifest
        assert m["expected_audit"] == {}
        assert m["spec"]["n_patients"] == 800
        assert sum(m["provider_counts_by_level"].values()) >= 20
        assert m["window"] == [WINDOW_START.isoformat(), WINDOW_END.isoformat()]


class TestSignalGeometry:
    def test_null_cohort_visit_shares_track_the_priors(self, tmp_path):
        spec = CohortSpec(n_patients=700, seed=3, signal_strength=0.0)
        cohort = generate_cohort(spec, tmp_path)
        levels = Counter(
            cohort.dataset.providers[v.provider_id].level for v in cohort.dataset.visits
        )
        total = sum(levels.values())
        clinic_share = levels[HospitalLevel.CLINIC] / total
        assert abs(clinic_share - spec.priors[HospitalLevel.CLINIC]) < 0.06

    def test_signal_skews_supply_toward_clinics_but_not_demand(self, tmp_path):
        spec = CohortSpec(n_patients=600, seed=7, signal_strength=0.9)
        cohort = generate_cohort(spec, tmp_path)
        counts = cohort.manifest["provider_counts_by_level"]
        assert counts["clinic"] / sum(counts.values()) > 0.8
        levels = Counter(
            cohort.dataset.providers[v.provider_id].level for v in cohort.dataset.visits
        )
        clinic_visits = levels[HospitalLevel.CLINIC] / sum(levels.values())
        assert clinic_visits < 0.85
        # centers therefore serve far more patients apiece than clinics
        patients_at = {lvl: set() for lvl in HospitalLevel}
        for v in cohort.dataset.visits:
            patients_at[cohort.dataset.providers[v.provider_id].level].add(v.patient_id)
        center_load = len(patients_at[HospitalLevel.MEDICAL_CENTER]) / counts["medical_center"]
        clinic_load = len(patients_at[HospitalLevel.CLINIC]) / counts["clinic"]
        assert center_load > 3 * clinic_load


class TestDirtyMode:
    def test_injected_violations_reproduce_the_expected_audit(self, tmp_path):
        spec = CohortSpec(n_patients=50, seed=13, dirty_count=2)
        cohort = generate_cohort(spec, tmp_path)
        dataset, audit = load_dataset(DataPaths.from_dir(cohort.directory))
        assert audit == cohort.expected_audit
        assert {r.value: c for r, c in sorted(audit.items(), key=lambda i: i[0].value)} == (
            cohort.manifest["expected_audit"]
        )
        assert sum(c for r, c in audit.items() if r.value == "no_visits") == 14
        assert sum(audit.values()) == 6 * 2 + 14
        # the surviving cohort is exactly the clean one
        assert set(dataset.patients) == set(cohort.dataset.patients)
        assert len(dataset.visits) == len(cohort.dataset.visits)

    def test_zero_dirty_count_appends_nothing(self, tmp_path):
        clean = generate_cohort(CohortSpec(n_patients=40, seed=4), tmp_path / "a")
        assert clean.expected_audit == Counter()
