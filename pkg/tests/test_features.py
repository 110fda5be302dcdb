"""Feature engineering: continuity indices, votes, flags, assembly, scaling."""

from datetime import date

import numpy as np
import pytest
from hypothesis import given, strategies as st

from carechoice.domain import CodeSets, HospitalLevel
from carechoice.features import (
    FEATURE_NAMES,
    MissingRegionError,
    N_FEATURES,
    SCALED_FEATURES,
    ScalerParams,
    VisitSequence,
    age_at,
    build_feature_vectors,
    build_visit_sequences,
    continuity_indices,
    disease_importance_rate,
    feature_matrix,
    fit_scaler,
    incident_flags,
    provider_votes,
    read_feature_csv,
    scale_vector,
    write_feature_csv,
)
from conftest import make_calendar, make_dataset, make_patient, make_provider, make_visit
from oracles import brute_continuity

provider_sequences = st.lists(
    st.sampled_from(["A", "B", "C", "D"]), min_size=1, max_size=12
)


class TestContinuityIndices:
    def seq(self, providers):
        return VisitSequence("P1", tuple(providers))

    def test_worked_example(self):
        # two visits to A then one to B
        idx = continuity_indices(self.seq("AAB"))
        assert idx.upc == pytest.approx(2 / 3)
        assert idx.lupc == pytest.approx(1 / 3)
        assert idx.secoc == pytest.approx(1 / 2)
        assert idx.coci == pytest.approx((4 + 1 - 3) / (3 * 2))

    def test_single_visit_pins_all_four_to_one(self):
        idx = continuity_indices(self.seq("A"))
        assert (idx.upc, idx.lupc, idx.secoc, idx.coci) == (1.0, 1.0, 1.0, 1.0)

    def test_perfect_continuity(self):
        idx = continuity_indices(self.seq("AAAA"))
        assert (idx.upc, idx.lupc, idx.secoc, idx.coci) == (1.0, 1.0, 1.0, 1.0)

    def test_all_distinct_providers(self):
        idx = continuity_indices(self.seq("ABCD"))
        assert idx.secoc == 0.0
        assert idx.coci == 0.0
        assert idx.upc == idx.lupc == 0.25

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValueError):
            continuity_indices(self.seq(""))

    @given(provider_sequences)
    def test_matches_brute_force(self, providers):
        idx = continuity_indices(self.seq(providers))
        upc, lupc, secoc, coci = brute_continuity(providers)
        assert idx.upc == pytest.approx(upc, abs=1e-12)
        assert idx.lupc == pytest.approx(lupc, abs=1e-12)
        assert idx.secoc == pytest.approx(secoc, abs=1e-12)
        assert idx.coci == pytest.approx(coci, abs=1e-12)

    @given(provider_sequences)
    def test_ranges(self, providers):
        idx = continuity_indices(self.seq(providers))
        assert 0.0 < idx.lupc <= idx.upc <= 1.0
        assert 0.0 <= idx.secoc <= 1.0
        assert 0.0 <= idx.coci <= 1.0


class TestProviderVotes:
    def test_each_patient_votes_once_for_each_tally(self):
        votes = provider_votes([
            VisitSequence("P1", ("A", "A", "B")),
            VisitSequence("P2", ("B", "B", "A")),
        ])
        assert votes["A"].mfpc == 1 and votes["A"].lfpc == 1
        assert votes["B"].mfpc == 1 and votes["B"].lfpc == 1

    def test_tie_goes_to_smallest_provider_id(self):
        votes = provider_votes([VisitSequence("P1", ("B", "A"))])
        # both providers have one visit; A wins both votes on the tiebreak
        assert votes["A"].mfpc == 1 and votes["A"].lfpc == 1
        assert "B" not in votes  # zero-vote providers carry no entry

    def test_single_provider_patient_votes_it_twice(self):
        votes = provider_votes([VisitSequence("P1", ("C", "C"))])
        assert votes["C"].mfpc == 1 and votes["C"].lfpc == 1

    def test_vote_totals_equal_patient_count(self):
        rng = np.random.default_rng(5)
        seqs = [
            VisitSequence(f"P{i}", tuple(rng.choice(list("ABCDE"), rng.integers(1, 9))))
            for i in range(40)
        ]
        votes = provider_votes(seqs)
        assert sum(v.mfpc for v in votes.values()) == 40
        assert sum(v.lfpc for v in votes.values()) == 40


class TestDiseaseImportanceRate:
    def test_share_of_matching_primaries(self):
        visits = [make_visit(dx="D001"), make_visit(dx="D002"), make_visit(dx="D001")]
        assert disease_importance_rate(visits, visits[0]) == pytest.approx(2 / 3)
        assert disease_importance_rate(visits, visits[1]) == pytest.approx(1 / 3)

    def test_no_visits_rejected(self):
        with pytest.raises(ValueError):
            disease_importance_rate([], make_visit())


class TestIncidentFlags:
    def codes(self):
        return CodeSets(
            surgery_codes=frozenset({"T100"}),
            er_codes=frozenset({"T900"}),
            chronic_dx_codes=frozenset({"D001"}),
            catastrophic_dx_codes=frozenset({"D190"}),
        )

    def test_quiet_weekday_visit(self, calendar):
        flags = incident_flags(make_visit(when=date(2010, 6, 15)), self.codes(), calendar)
        assert flags == (False, False, False, True)

    def test_surgery_via_treatment_code(self, calendar):
        visit = make_visit(treatment_codes=frozenset({"T100"}))
        assert incident_flags(visit, self.codes(), calendar)[0]

    def test_er_via_setting(self, calendar):
        visit = make_visit(setting="emergency")
        assert incident_flags(visit, self.codes(), calendar)[1]

    def test_er_via_treatment_code(self, calendar):
        visit = make_visit(treatment_codes=frozenset({"T900"}))
        assert incident_flags(visit, self.codes(), calendar)[1]

    def test_severe_via_triage(self, calendar):
        assert incident_flags(make_visit(triage_level=3), self.codes(), calendar)[2]
        assert not incident_flags(make_visit(triage_level=4), self.codes(), calendar)[2]

    def test_severe_via_catastrophic_flag(self, calendar):
        visit = make_visit(catastrophic_illness=True)
        assert incident_flags(visit, self.codes(), calendar)[2]

    def test_severe_via_catastrophic_primary_dx(self, calendar):
        visit = make_visit(dx="D190")
        assert incident_flags(visit, self.codes(), calendar)[2]

    def test_weekend(self, calendar):
        visit = make_visit(when=date(2010, 6, 13))
        assert not incident_flags(visit, self.codes(), calendar)[3]


class TestAgeAt:
    def test_birthday_not_yet_reached(self):
        assert age_at(date(1970, 6, 16), date(2010, 6, 15)) == 39

    def test_birthday_today(self):
        assert age_at(date(1970, 6, 15), date(2010, 6, 15)) == 40

    def test_newborn(self):
        assert age_at(date(2010, 6, 1), date(2010, 6, 15)) == 0


def two_patient_dataset():
    patients = {
        "P1": make_patient(gender="male"),
        "P2": make_patient("P2", birth=date(2000, 1, 1), gender="female", low_income=True),
    }
    providers = {
        "H1": make_provider(),
        "H2": make_provider("H2", HospitalLevel.REGIONAL_HOSPITAL, "R2"),
    }
    visits = [
        make_visit(when=date(2010, 1, 4), dx="D001"),
        make_visit(when=date(2010, 2, 5), provider="H2", dx="D002",
                   dx_codes=frozenset({"D002", "D003"})),
        make_visit(when=date(2010, 3, 8), dx="D001"),
        make_visit(pid="P2", provider="H2", when=date(2010, 7, 10), dx="D190"),
    ]
    return make_dataset(
        patients=patients, providers=providers, visits=visits,
        region_stats={"R1": 10.0, "R2": 30.0},
    )


class TestBuildFeatureVectors:
    def test_row_per_visit_in_canonical_order(self):
        ds = two_patient_dataset()
        vectors = build_feature_vectors(ds)
        assert len(vectors) == 4
        X, y = feature_matrix(vectors)
        assert X.shape == (4, N_FEATURES)
        assert list(y) == [3, 1, 3, 1]

    def test_first_visit_values(self):
        ds = two_patient_dataset()
        v = build_feature_vectors(ds)[0]
        assert v.age == 39.0
        assert v.male == 1.0
        assert v.low_income == 0.0
        assert v.total_visits == 3.0
        assert v.total_diseases == 3.0  # D001, D002, D003 over the period
        assert v.total_chronic_diseases == 1.0
        assert v.upc == pytest.approx(2 / 3)
        assert v.lupc == pytest.approx(1 / 3)
        assert v.secoc == 0.0
        assert v.coci == pytest.approx(1 / 3)
        assert v.physician_density == 10.0
        # P1 votes H1 most-frequent, H2 least; P2 votes H2 for both
        assert v.mfpc == 1.0
        assert v.lfpc == 0.0
        assert v.dir == pytest.approx(2 / 3)
        assert v.is_workday == 1.0
        assert v.label == HospitalLevel.CLINIC

    def test_votes_of_other_provider(self):
        ds = two_patient_dataset()
        second = build_feature_vectors(ds)[1]
        assert second.mfpc == 1.0  # P2's most-frequent vote
        assert second.lfpc == 2.0  # least-frequent votes from both patients
        assert second.physician_density == 30.0

    def test_severe_catastrophic_primary(self):
        ds = two_patient_dataset()
        last = build_feature_vectors(ds)[3]
        assert last.is_severe == 1.0
        assert last.dir == 1.0
        assert last.total_visits == 1.0

    def test_missing_region_raises(self):
        ds = two_patient_dataset()
        broken = make_dataset(
            patients=ds.patients, providers=ds.providers, visits=ds.visits,
            region_stats={"R1": 10.0},
        )
        with pytest.raises(MissingRegionError):
            build_feature_vectors(broken)

    def test_sequences_follow_visit_order(self):
        ds = two_patient_dataset()
        seqs = build_visit_sequences(ds)
        assert seqs["P1"].provider_ids == ("H1", "H2", "H1")
        assert seqs["P2"].provider_ids == ("H2",)


class TestScaler:
    def matrix(self):
        rng = np.random.default_rng(11)
        X = rng.uniform(0, 1, size=(20, N_FEATURES))
        age = FEATURE_NAMES.index("age")
        X[:, age] = rng.uniform(20, 80, size=20)
        mfpc = FEATURE_NAMES.index("mfpc")
        X[:, mfpc] = rng.integers(0, 50, size=20)
        return X

    def test_scaled_columns_land_in_unit_interval(self):
        X = self.matrix()
        scaler = fit_scaler(X)
        Z = scaler.transform(X)
        for name in SCALED_FEATURES:
            j = FEATURE_NAMES.index(name)
            assert Z[:, j].min() >= 0.0 and Z[:, j].max() <= 1.0
            assert Z[:, j].min() == 0.0 and Z[:, j].max() == 1.0

    def test_unscaled_columns_untouched(self):
        X = self.matrix()
        Z = fit_scaler(X).transform(X)
        for j, name in enumerate(FEATURE_NAMES):
            if name not in SCALED_FEATURES:
                assert np.array_equal(Z[:, j], X[:, j])

    def test_out_of_range_rows_clamp(self):
        X = self.matrix()
        scaler = fit_scaler(X)
        age = FEATURE_NAMES.index("age")
        probe = X[0].copy()
        probe[age] = 500.0
        assert scale_vector(probe, scaler)[age] == 1.0
        probe[age] = -5.0
        assert scale_vector(probe, scaler)[age] == 0.0

    def test_degenerate_column_maps_to_zero(self):
        X = self.matrix()
        age = FEATURE_NAMES.index("age")
        X[:, age] = 47.0
        scaler = fit_scaler(X)
        assert "age" in scaler.degenerate
        assert np.all(scaler.transform(X)[:, age] == 0.0)

    def test_round_trips_through_dict(self):
        scaler = fit_scaler(self.matrix())
        again = ScalerParams.from_dict(scaler.to_dict())
        assert again.mins == scaler.mins
        assert again.maxs == scaler.maxs
        assert again.scaled_features == scaler.scaled_features

    def test_transform_does_not_mutate_input(self):
        X = self.matrix()
        before = X.copy()
        fit_scaler(X).transform(X)
        assert np.array_equal(X, before)


class TestFeatureCsv:
    def test_round_trip_is_bit_exact(self, tmp_path):
        ds = two_patient_dataset()
        vectors = build_feature_vectors(ds)
        path = tmp_path / "features.csv"
        write_feature_csv(path, vectors, header_comment="config_hash=abc123")
        X, y = read_feature_csv(path)
        X0, y0 = feature_matrix(vectors)
        assert np.array_equal(X, X0)
        assert np.array_equal(y, y0)
        assert path.read_text().startswith("# config_hash=abc123\n")

    def test_header_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            read_feature_csv(path)
