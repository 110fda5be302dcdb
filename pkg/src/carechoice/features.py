"""Feature engineering: continuity indices, provider votes, incident flags,
and assembly of the 18-dimensional visit vector with min-max scaling.

Continuity is measured per patient over the full study period at the
provider (institute) level. Provider votes are tallied once over the whole
dataset: every patient casts exactly one most-frequent and one
least-frequent vote.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from datetime import date
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import (
    CodeSets,
    Dataset,
    HospitalLevel,
    PatientProfile,
    ProviderProfile,
    VisitRecord,
    WorkdayCalendar,
)

FEATURE_NAMES = (
    "age",
    "male",
    "low_income",
    "total_visits",
    "total_diseases",
    "total_chronic_diseases",
    "upc",
    "lupc",
    "secoc",
    "coci",
    "physician_density",
    "mfpc",
    "lfpc",
    "is_surgery",
    "is_er",
    "is_severe",
    "is_workday",
    "dir",
)

N_FEATURES = len(FEATURE_NAMES)

# Count-like features that need min-max scaling; ratio features and binary
# flags are already in [0,1] and pass through untouched.
SCALED_FEATURES = (
    "age",
    "total_visits",
    "total_diseases",
    "total_chronic_diseases",
    "physician_density",
    "mfpc",
    "lfpc",
)


@dataclass(frozen=True)
class VisitSequence:
    """One patient's chronological provider trajectory."""

    patient_id: str
    provider_ids: tuple[str, ...]

    @property
    def n_visits(self) -> int:
        return len(self.provider_ids)

    @property
    def counts(self) -> Counter:
        return Counter(self.provider_ids)

    @property
    def n_providers(self) -> int:
        return len(set(self.provider_ids))


@dataclass(frozen=True)
class ContinuityIndices:
    upc: float
    lupc: float
    secoc: float
    coci: float


def continuity_indices(seq: VisitSequence) -> ContinuityIndices:
    """Compute the four continuity-of-care indices for one patient.

    upc/lupc are the max/min share of visits going to any provider actually
    visited; secoc is the fraction of consecutive visit pairs at the same
    provider; coci is the concentration index (sum n_i^2 - N) / (N(N-1)).
    A single visit has no dispersion to measure, so secoc and coci are
    defined as 1.0 for N == 1.
    """
    n = seq.n_visits
    if n == 0:
        raise ValueError(f"patient {seq.patient_id}: empty visit sequence")
    counts = seq.counts
    upc = max(counts.values()) / n
    lupc = min(counts.values()) / n
    if n == 1:
        return ContinuityIndices(upc=upc, lupc=lupc, secoc=1.0, coci=1.0)
    same_pairs = sum(
        1 for a, b in zip(seq.provider_ids, seq.provider_ids[1:]) if a == b
    )
    secoc = same_pairs / (n - 1)
    coci = (sum(c * c for c in counts.values()) - n) / (n * (n - 1))
    return ContinuityIndices(upc=upc, lupc=lupc, secoc=secoc, coci=coci)


@dataclass(frozen=True)
class ProviderVotes:
    provider_id: str
    mfpc: int
    lfpc: int


def provider_votes(sequences: Iterable[VisitSequence]) -> dict[str, ProviderVotes]:
    """Tally most/least-frequent provider votes across patients.

    Each patient votes exactly once for the provider with the most visits
    and once for the provider with the fewest (ties broken by smallest
    provider id; a single-provider patient votes it for both).
    """
    mfpc: Counter = Counter()
    lfpc: Counter = Counter()
    for seq in sequences:
        counts = seq.counts
        if not counts:
            raise ValueError(f"patient {seq.patient_id}: empty visit sequence")
        most = min(counts, key=lambda p: (-counts[p], p))
        least = min(counts, key=lambda p: (counts[p], p))
        mfpc[most] += 1
        lfpc[least] += 1
    providers = set(mfpc) | set(lfpc)
    return {p: ProviderVotes(p, mfpc.get(p, 0), lfpc.get(p, 0)) for p in sorted(providers)}


def disease_importance_rate(patient_visits: Sequence[VisitRecord], target: VisitRecord) -> float:
    """Share of the patient's visits whose primary diagnosis matches the target's."""
    if not patient_visits:
        raise ValueError("patient has no visits")
    matches = sum(1 for v in patient_visits if v.primary_dx == target.primary_dx)
    return matches / len(patient_visits)


def incident_flags(
    record: VisitRecord, code_sets: CodeSets, calendar: WorkdayCalendar
) -> tuple[bool, bool, bool, bool]:
    """(is_surgery, is_er, is_severe, is_workday) for one accepted record."""
    is_surgery = bool(record.treatment_codes & code_sets.surgery_codes)
    is_er = record.setting == "emergency" or bool(record.treatment_codes & code_sets.er_codes)
    is_severe = (
        (record.triage_level is not None and record.triage_level <= 3)
        or record.catastrophic_illness
        or record.primary_dx in code_sets.catastrophic_dx_codes
    )
    if record.visit_date is None:
        raise ValueError("record has no visit date")
    return is_surgery, is_er, is_severe, calendar.is_workday(record.visit_date)


def age_at(birth: date, visit: date) -> int:
    """Whole years between birth date and visit date."""
    years = visit.year - birth.year
    if (visit.month, visit.day) < (birth.month, birth.day):
        years -= 1
    return years


@dataclass(frozen=True)
class VisitFeatureVector:
    """The 18 model inputs for one visit plus its hospital-level label."""

    age: float
    male: float
    low_income: float
    total_visits: float
    total_diseases: float
    total_chronic_diseases: float
    upc: float
    lupc: float
    secoc: float
    coci: float
    physician_density: float
    mfpc: float
    lfpc: float
    is_surgery: float
    is_er: float
    is_severe: float
    is_workday: float
    dir: float
    label: HospitalLevel

    def values(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)


class MissingRegionError(Exception):
    pass


def assemble_visit_vector(
    record: VisitRecord,
    patient: PatientProfile,
    provider: ProviderProfile,
    indices: ContinuityIndices,
    votes: Mapping[str, ProviderVotes],
    region_stats: Mapping[str, float],
    dir_value: float,
    flags: tuple[bool, bool, bool, bool],
    total_visits: int,
    total_diseases: int,
    total_chronic_diseases: int,
) -> VisitFeatureVector:
    if provider.region_code not in region_stats:
        raise MissingRegionError(
            f"provider {provider.provider_id}: region {provider.region_code!r} "
            "missing from the physician-density table"
        )
    assert patient.birth_date is not None and record.visit_date is not None
    vote = votes.get(record.provider_id)
    is_surgery, is_er, is_severe, is_workday = flags
    return VisitFeatureVector(
        age=float(age_at(patient.birth_date, record.visit_date)),
        male=1.0 if patient.gender == "male" else 0.0,
        low_income=1.0 if patient.low_income else 0.0,
        total_visits=float(total_visits),
        total_diseases=float(total_diseases),
        total_chronic_diseases=float(total_chronic_diseases),
        upc=indices.upc,
        lupc=indices.lupc,
        secoc=indices.secoc,
        coci=indices.coci,
        physician_density=region_stats[provider.region_code],
        mfpc=float(vote.mfpc) if vote else 0.0,
        lfpc=float(vote.lfpc) if vote else 0.0,
        is_surgery=float(is_surgery),
        is_er=float(is_er),
        is_severe=float(is_severe),
        is_workday=float(is_workday),
        dir=dir_value,
        label=provider.level,
    )


def build_visit_sequences(dataset: Dataset) -> dict[str, VisitSequence]:
    by_patient: dict[str, list[str]] = {}
    for v in dataset.visits:  # visits already in canonical chronological order
        by_patient.setdefault(v.patient_id, []).append(v.provider_id)
    return {pid: VisitSequence(pid, tuple(provs)) for pid, provs in by_patient.items()}


def build_feature_vectors(dataset: Dataset) -> list[VisitFeatureVector]:
    """Compute every visit's feature vector from a clean dataset.

    Vote tallies are global over all patients; continuity, disease counts,
    and the disease-importance rate are per patient over the study period.
    Rows come out in the dataset's canonical visit order.
    """
    sequences = build_visit_sequences(dataset)
    votes = provider_votes(sequences.values())
    indices = {pid: continuity_indices(seq) for pid, seq in sequences.items()}

    visits_by_patient: dict[str, list[VisitRecord]] = {}
    for v in dataset.visits:
        visits_by_patient.setdefault(v.patient_id, []).append(v)

    dx_counts: dict[str, Counter] = {}
    totals: dict[str, tuple[int, int]] = {}
    chronic = dataset.code_sets.chronic_dx_codes
    for pid, visits in visits_by_patient.items():
        dx_counts[pid] = Counter(v.primary_dx for v in visits)
        all_dx: set[str] = set()
        for v in visits:
            all_dx |= v.dx_codes
        totals[pid] = (len(all_dx), len(all_dx & chronic))

    vectors = []
    for v in dataset.visits:
        patient = dataset.patients[v.patient_id]
        provider = dataset.providers[v.provider_id]
        seq = sequences[v.patient_id]
        n = seq.n_visits
        dir_value = dx_counts[v.patient_id][v.primary_dx] / n
        flags = incident_flags(v, dataset.code_sets, dataset.calendar)
        n_dx, n_chronic = totals[v.patient_id]
        vectors.append(
            assemble_visit_vector(
                v,
                patient,
                provider,
                indices[v.patient_id],
                votes,
                dataset.region_stats,
                dir_value,
                flags,
                total_visits=n,
                total_diseases=n_dx,
                total_chronic_diseases=n_chronic,
            )
        )
    return vectors


def feature_matrix(vectors: Sequence[VisitFeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    """Stack vectors into (X, y) with X of shape (n, 18) and integer labels y."""
    X = np.array([v.values() for v in vectors], dtype=np.float64)
    y = np.array([int(v.label) for v in vectors], dtype=np.int64)
    return X, y


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature (min, max) fitted on training rows for the count-like features."""

    mins: Mapping[str, float]
    maxs: Mapping[str, float]
    scaled_features: tuple[str, ...] = SCALED_FEATURES

    @property
    def degenerate(self) -> tuple[str, ...]:
        return tuple(f for f in self.scaled_features if self.mins[f] == self.maxs[f])

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Min-max scale the fitted columns, clamped to [0,1]; degenerate
        columns (min == max) map to 0."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64)).copy()
        for name in self.scaled_features:
            j = FEATURE_NAMES.index(name)
            lo, hi = self.mins[name], self.maxs[name]
            if hi > lo:
                X[:, j] = np.clip((X[:, j] - lo) / (hi - lo), 0.0, 1.0)
            else:
                X[:, j] = 0.0
        return X

    def to_dict(self) -> dict:
        return {
            "scaled_features": list(self.scaled_features),
            "mins": {k: self.mins[k] for k in self.scaled_features},
            "maxs": {k: self.maxs[k] for k in self.scaled_features},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(
            mins=dict(d["mins"]), maxs=dict(d["maxs"]), scaled_features=tuple(d["scaled_features"])
        )


def fit_scaler(training: Sequence[VisitFeatureVector] | np.ndarray) -> ScalerParams:
    """Fit per-feature (min, max) on training rows only."""
    if isinstance(training, np.ndarray):
        X = np.atleast_2d(training)
    else:
        X = np.array([v.values() for v in training], dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("cannot fit scaler on zero rows")
    mins = {}
    maxs = {}
    for name in SCALED_FEATURES:
        j = FEATURE_NAMES.index(name)
        mins[name] = float(X[:, j].min())
        maxs[name] = float(X[:, j].max())
    return ScalerParams(mins=mins, maxs=maxs)


def scale_vector(v: VisitFeatureVector | np.ndarray, scaler: ScalerParams) -> np.ndarray:
    """Scaled 18-dimensional numeric vector for one visit."""
    raw = v.values() if isinstance(v, VisitFeatureVector) else np.asarray(v, dtype=np.float64)
    return scaler.transform(raw.reshape(1, -1))[0]


def write_feature_csv(path, vectors: Sequence[VisitFeatureVector], header_comment: str | None = None):
    """Export the feature matrix with 17-significant-digit decimals so the
    written values round-trip bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(",".join(FEATURE_NAMES + ("label",)) + "\n")
        for v in vectors:
            row = [format(x, ".17g") for x in v.values()]
            row.append(str(int(v.label)))
            fh.write(",".join(row) + "\n")


def read_feature_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    header = lines[0].strip().split(",")
    expected = list(FEATURE_NAMES + ("label",))
    if header != expected:
        raise ValueError(f"unexpected feature columns: {header}")
    rows = [ln.strip().split(",") for ln in lines[1:] if ln.strip()]
    X = np.array([[float(x) for x in r[:-1]] for r in rows], dtype=np.float64)
    y = np.array([int(r[-1]) for r in rows], dtype=np.int64)
    return X, y
