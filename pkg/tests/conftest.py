"""Shared builders for hand-rolled datasets used across test modules."""

from datetime import date, timedelta

import pytest

from carechoice.domain import (
    CodeSets,
    Dataset,
    HospitalLevel,
    PatientProfile,
    ProviderProfile,
    VisitRecord,
    WorkdayCalendar,
)


def make_calendar(start=date(2008, 1, 1), end=date(2011, 12, 31)):
    entries = {}
    d = start
    while d <= end:
        entries[d] = d.weekday() < 5
        d += timedelta(days=1)
    return WorkdayCalendar(entries=entries)


def make_patient(pid="P1", birth=date(1970, 5, 4), gender="female", **kw):
    return PatientProfile(patient_id=pid, birth_date=birth, gender=gender, **kw)


def make_provider(pid="H1", level=HospitalLevel.CLINIC, region="R1"):
    return ProviderProfile(provider_id=pid, level=level, region_code=region)


def make_visit(pid="P1", provider="H1", when=date(2010, 6, 15), dx="D001", **kw):
    kw.setdefault("dx_codes", frozenset({dx}))
    return VisitRecord(
        patient_id=pid, provider_id=provider, visit_date=when, primary_dx=dx, **kw
    )


def make_dataset(patients=None, providers=None, visits=(), code_sets=None,
                 region_stats=None, calendar=None):
    if patients is None:
        patients = {"P1": make_patient()}
    if providers is None:
        providers = {"H1": make_provider()}
    if region_stats is None:
        region_stats = {p.region_code: 20.0 for p in providers.values()}
    return Dataset(
        patients=patients,
        providers=providers,
        visits=tuple(visits),
        region_stats=region_stats,
        calendar=calendar or make_calendar(),
        code_sets=code_sets or CodeSets(
            surgery_codes=frozenset({"T100"}),
            er_codes=frozenset({"T900"}),
            chronic_dx_codes=frozenset({"D001"}),
            catastrophic_dx_codes=frozenset({"D190"}),
        ),
    )


@pytest.fixture
def calendar():
    return make_calendar()
