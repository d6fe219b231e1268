"""Eligibility, observation window, and the train / test-run split protocol."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, SplitError
from .records import ClinicalEvent, CodeSystem, PatientRecord
from .vocabulary import EXCLUSION_CODES

log = logging.getLogger(__name__)

DEFAULT_EXCLUSIONS = frozenset((system, code) for system, code, _ in EXCLUSION_CODES)


@dataclass(frozen=True)
class CohortCriteria:
    exclusion_codes: frozenset[tuple[CodeSystem, str]] = DEFAULT_EXCLUSIONS
    min_history_days: int = 210
    window_start_days_before_index: int = 210
    window_end_days_before_index: int = 30
    min_age: int = 18
    max_age: int = 44

    def __post_init__(self):
        if not self.window_start_days_before_index > self.window_end_days_before_index >= 0:
            raise ConfigError("window_start must exceed window_end >= 0", "criteria.window")


def is_eligible(p: PatientRecord, criteria: CohortCriteria) -> bool:
    if not criteria.min_age <= p.age_years <= criteria.max_age:
        return False
    if any((e.code_system, e.code) in criteria.exclusion_codes for e in p.events):
        return False
    prior = [e.date for e in p.events if e.date < p.index_date]
    if not prior:
        return False
    return (p.index_date - min(prior)).days >= criteria.min_history_days


def apply_eligibility(patients: list[PatientRecord], criteria: CohortCriteria = CohortCriteria()) -> list[PatientRecord]:
    kept = [p for p in patients if is_eligible(p, criteria)]
    if len(kept) < len(patients):
        log.info("eligibility kept %d of %d patients", len(kept), len(patients))
    return kept


def extract_window(patient: PatientRecord, criteria: CohortCriteria = CohortCriteria()) -> list[ClinicalEvent]:
    """Events with ``window_end <= days_before_index < window_start``, in record order."""
    lo, hi = criteria.window_end_days_before_index, criteria.window_start_days_before_index
    return [e for e in patient.events if lo <= (patient.index_date - e.date).days < hi]


@dataclass(frozen=True)
class SplitPlan:
    train_pos: int = 150
    train_neg: int = 150
    n_test_runs: int = 10
    test_pos_per_run: int = 5
    test_neg_per_run: int = 495
    seed: int = 0

    @classmethod
    def full_scale(cls, seed: int = 0) -> "SplitPlan":
        return cls(1853, 1853, 10, 10, 990, seed)

    @property
    def run_prevalence(self) -> float:
        return self.test_pos_per_run / (self.test_pos_per_run + self.test_neg_per_run)


@dataclass
class Splits:
    train: list[PatientRecord]
    test_runs: list[list[PatientRecord]]
    reserve: list[PatientRecord] = field(default_factory=list)

    def __iter__(self):
        # Unpacks as ``train, test_runs``.
        return iter((self.train, self.test_runs))


def make_splits(patients: list[PatientRecord], plan: SplitPlan) -> Splits:
    """Balanced training set plus ``n_test_runs`` disjoint-positive test runs.

    Controls are disjoint across runs when the pool allows; otherwise each run
    samples without replacement from the controls left after training.
    Anything unused lands in ``reserve``.
    """
    rng = np.random.default_rng(np.random.PCG64(plan.seed))
    ordered = sorted(patients, key=lambda p: p.id)
    pos = [p for p in ordered if p.is_crc]
    neg = [p for p in ordered if not p.is_crc]

    need_pos = plan.train_pos + plan.n_test_runs * plan.test_pos_per_run
    if len(pos) < need_pos:
        raise SplitError(f"CRC: need {need_pos} patients, have {len(pos)}", "CRC")
    if len(neg) < plan.train_neg + plan.test_neg_per_run:
        raise SplitError(
            f"NonCRC: need at least {plan.train_neg + plan.test_neg_per_run} patients, have {len(neg)}", "NonCRC"
        )

    pos = [pos[i] for i in rng.permutation(len(pos))]
    neg = [neg[i] for i in rng.permutation(len(neg))]
    train = pos[: plan.train_pos] + neg[: plan.train_neg]
    pos_rest = pos[plan.train_pos :]
    neg_rest = neg[plan.train_neg :]

    runs = []
    k, m = plan.test_pos_per_run, plan.test_neg_per_run
    disjoint_neg = len(neg_rest) >= plan.n_test_runs * m
    if not disjoint_neg:
        log.warning("control pool too small for disjoint runs; controls may repeat across runs")
    used_neg: set[str] = set()
    for r in range(plan.n_test_runs):
        run_pos = pos_rest[r * k : (r + 1) * k]
        if disjoint_neg:
            run_neg = neg_rest[r * m : (r + 1) * m]
        else:
            run_neg = [neg_rest[i] for i in rng.choice(len(neg_rest), size=m, replace=False)]
        used_neg.update(p.id for p in run_neg)
        runs.append(run_pos + run_neg)

    reserve = pos_rest[plan.n_test_runs * k :] + [p for p in neg_rest if p.id not in used_neg]
    return Splits(train=train, test_runs=runs, reserve=reserve)
