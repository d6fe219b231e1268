import datetime as dt
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from eocrc.cohort import (
    ClinicalEvent,
    CodeSystem,
    Ethnicity,
    EventKind,
    Gender,
    Label,
    PatientRecord,
    Race,
    SplitPlan,
    SyntheticCohortConfig,
    generate_synthetic_cohort,
    make_splits,
)
from eocrc.features import build_feature_space, design_matrix, window_patients

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

INDEX = dt.date(2022, 6, 1)

# Lines printed by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def day(offset_before_index: int) -> dt.date:
    return INDEX - dt.timedelta(days=offset_before_index)


def event(kind, system, code, display, before, value=None, unit=None) -> ClinicalEvent:
    return ClinicalEvent(EventKind(kind), CodeSystem(system), code, display, day(before), value, unit)


def patient(pid="P1", events=(), label=Label.CRC, age=35, gender=Gender.FEMALE) -> PatientRecord:
    anchor = event("Observation", "LOINC", "29463-7", "Body weight", 400, 70.0, "kg")
    return PatientRecord(pid, age, gender, Race.WHITE, Ethnicity.NOT_HISPANIC, INDEX, label, (anchor,) + tuple(events))


@pytest.fixture
def make_patient():
    return patient


@pytest.fixture
def make_event():
    return event


@pytest.fixture(scope="session")
def small_cohort():
    """2,000 patients at 10% prevalence: enough CRC patients for a scaled-down split."""
    return generate_synthetic_cohort(SyntheticCohortConfig(n_patients=2000, prevalence=0.1, seed=11))


@pytest.fixture(scope="session")
def small_plan():
    return SplitPlan(train_pos=100, train_neg=100, n_test_runs=4, test_pos_per_run=5, test_neg_per_run=95, seed=3)


@pytest.fixture(scope="session")
def small_matrices(small_cohort, small_plan):
    splits = make_splits(small_cohort, small_plan)
    train_w = window_patients(splits.train)
    space = build_feature_space(train_w)
    train_m = design_matrix(train_w, space)
    tests = [design_matrix(window_patients(run), space) for run in splits.test_runs]
    pool = design_matrix(window_patients([p for p in splits.reserve if not p.is_crc][:400]), space)
    return train_m, tests, pool


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def toy_data(rng, n=120, d=5, informative=2):
    """Dense toy classification data with a couple of informative columns and one binary column."""
    X = rng.normal(size=(n, d))
    X[:, -1] = (rng.random(n) < 0.4).astype(float)
    logit = X[:, :informative].sum(axis=1) * 1.5
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(np.int64)
    y[0], y[1] = 0, 1
    return X, y
