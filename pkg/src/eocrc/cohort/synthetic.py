"""Seeded synthetic EHR cohort standing in for the proprietary source data.

Each vocabulary entry is present in a patient's history with probability
``sigmoid(logit(base_rate) + signal_strength * signal_weight * is_crc)``.
Valued entries (labs, observations) additionally shift their mean by
``signal_strength * value_shift * sd`` for CRC patients.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..errors import ConfigError
from .records import ClinicalEvent, Ethnicity, EventKind, Gender, Label, PatientRecord, Race
from .vocabulary import ANCHOR_ENCOUNTER, CRC_DIAGNOSIS, DEFAULT_VOCABULARY, EXCLUSION_CODES, VocabEntry

# Case demographics follow the published cohort table; controls use a generic young-adult mix.
CASE_DEMOGRAPHICS = {
    "age": (33.35, 6.88),
    "female": 0.6634,
    "race": {Race.WHITE: 0.6151, Race.BLACK: 0.1651, Race.ASIAN: 0.0539, Race.OTHER: 0.0956, Race.NOT_SPECIFIED: 0.0703},
    "ethnicity": {Ethnicity.NOT_HISPANIC: 0.8035, Ethnicity.HISPANIC: 0.1818, Ethnicity.MEXICAN_OR_PUERTO_RICAN: 0.0147},
}
CONTROL_DEMOGRAPHICS = {
    "age": (31.0, 7.5),
    "female": 0.55,
    "race": {Race.WHITE: 0.60, Race.BLACK: 0.14, Race.ASIAN: 0.07, Race.OTHER: 0.10, Race.NOT_SPECIFIED: 0.09},
    "ethnicity": {
        Ethnicity.NOT_HISPANIC: 0.78,
        Ethnicity.HISPANIC: 0.17,
        Ethnicity.MEXICAN_OR_PUERTO_RICAN: 0.02,
        Ethnicity.NOT_SPECIFIED: 0.03,
    },
}


@dataclass(frozen=True)
class SyntheticCohortConfig:
    n_patients: int = 20_000
    prevalence: float = 0.01
    seed: int = 0
    signal_strength: float = 2.0
    vocabulary: tuple[VocabEntry, ...] = field(default=DEFAULT_VOCABULARY, repr=False)
    first_index_date: dt.date = dt.date(2019, 1, 1)
    index_span_days: int = 1800
    min_history_days: int = 210
    max_extra_history_days: int = 540
    window_start_days: int = 210
    window_end_days: int = 30
    in_window_fraction: float = 0.75
    pregnancy_rate: float = 0.06
    late_bleeding_rate: float = 0.6
    ineligible_fraction: float = 0.0

    def validate(self) -> None:
        if not 0.0 < self.prevalence < 1.0:
            raise ConfigError(f"prevalence must lie in (0, 1), got {self.prevalence}", "cohort.prevalence")
        if not self.vocabulary:
            raise ConfigError("vocabulary is empty", "cohort.vocabulary")
        if self.n_patients < 1:
            raise ConfigError("n_patients must be positive", "cohort.n_patients")
        if self.signal_strength < 0:
            raise ConfigError("signal_strength must be nonnegative", "cohort.signal_strength")
        if not 0 <= self.window_end_days < self.window_start_days <= self.min_history_days:
            raise ConfigError("need 0 <= window_end < window_start <= min_history", "cohort.window")
        if not 0.0 <= self.ineligible_fraction < 1.0:
            raise ConfigError("ineligible_fraction must lie in [0, 1)", "cohort.ineligible_fraction")

    @property
    def n_crc(self) -> int:
        return int(round(self.n_patients * self.prevalence))

    def summary(self) -> dict:
        """JSON-safe description used for metadata and hashing."""
        return {
            "n_patients": self.n_patients,
            "prevalence": self.prevalence,
            "seed": self.seed,
            "signal_strength": self.signal_strength,
            "vocabulary_size": len(self.vocabulary),
            "first_index_date": self.first_index_date.isoformat(),
            "index_span_days": self.index_span_days,
            "min_history_days": self.min_history_days,
            "max_extra_history_days": self.max_extra_history_days,
            "window_start_days": self.window_start_days,
            "window_end_days": self.window_end_days,
            "in_window_fraction": self.in_window_fraction,
            "pregnancy_rate": self.pregnancy_rate,
            "late_bleeding_rate": self.late_bleeding_rate,
            "ineligible_fraction": self.ineligible_fraction,
        }


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def _pick(rng: np.random.Generator, table: dict):
    keys = list(table)
    probs = np.array([table[k] for k in keys], dtype=float)
    return keys[rng.choice(len(keys), p=probs / probs.sum())]


class _Generator:
    def __init__(self, config: SyntheticCohortConfig):
        self.cfg = config
        self.rng = np.random.default_rng(np.random.PCG64(config.seed))
        vocab = [v for v in config.vocabulary if not v.prenatal]
        self.routine = vocab
        self.prenatal = [v for v in config.vocabulary if v.prenatal]
        base = np.array([_logit(min(max(v.base_rate, 1e-6), 1 - 1e-6)) for v in vocab])
        tilt = np.array([v.signal_weight for v in vocab])
        self.p_control = expit(base)
        self.p_case = expit(base + config.signal_strength * tilt)
        self.bleeding = next((v for v in vocab if v.code == "K62.5"), None)

    def _days_before(self, history_days: int) -> int:
        cfg = self.cfg
        if self.rng.random() < cfg.in_window_fraction:
            return int(self.rng.integers(cfg.window_end_days, cfg.window_start_days))
        return int(self.rng.integers(1, history_days + 1))

    def _event(self, v: VocabEntry, index_date: dt.date, days_before: int, is_crc: bool) -> ClinicalEvent:
        value = None
        if v.valued:
            mean = v.mean + (self.cfg.signal_strength * v.value_shift * v.sd if is_crc else 0.0)
            value = round(float(self.rng.normal(mean, v.sd)), v.decimals)
            if v.mean > 0:
                value = max(value, 0.0)
        return ClinicalEvent(
            kind=v.kind,
            code_system=v.code_system,
            code=v.code,
            display=v.display,
            date=index_date - dt.timedelta(days=days_before),
            value=value,
            unit=v.unit,
        )

    def patient(self, idx: int, is_crc: bool) -> PatientRecord:
        cfg, rng = self.cfg, self.rng
        demo = CASE_DEMOGRAPHICS if is_crc else CONTROL_DEMOGRAPHICS
        age = int(np.clip(round(rng.normal(*demo["age"])), 18, 44))
        gender = Gender.FEMALE if rng.random() < demo["female"] else Gender.MALE
        race = _pick(rng, demo["race"])
        ethnicity = _pick(rng, demo["ethnicity"])
        index_date = cfg.first_index_date + dt.timedelta(days=int(rng.integers(0, cfg.index_span_days)))
        history_days = cfg.min_history_days + int(rng.integers(0, cfg.max_extra_history_days + 1))

        events = [self._event(ANCHOR_ENCOUNTER, index_date, history_days, is_crc)]
        probs = self.p_case if is_crc else self.p_control
        present = rng.random(len(self.routine)) < probs
        for v, hit in zip(self.routine, present):
            if not hit:
                continue
            for _ in range(1 + int(rng.poisson(v.repeat_mean))):
                events.append(self._event(v, index_date, self._days_before(history_days), is_crc))

        if gender is Gender.FEMALE and rng.random() < cfg.pregnancy_rate:
            for v in self.prenatal:
                for _ in range(1 + int(rng.poisson(v.repeat_mean))):
                    events.append(self._event(v, index_date, self._days_before(history_days), False))

        if is_crc:
            events.append(self._event(CRC_DIAGNOSIS, index_date, 0, True))
            # Bleeding close to diagnosis lands in the excluded final month.
            if self.bleeding is not None and rng.random() < cfg.late_bleeding_rate:
                late = int(rng.integers(1, cfg.window_end_days)) if cfg.window_end_days > 1 else 0
                events.append(self._event(self.bleeding, index_date, late, True))

        if cfg.ineligible_fraction and rng.random() < cfg.ineligible_fraction:
            events = self._make_ineligible(events, index_date, history_days)

        return PatientRecord(
            id=f"P{idx:07d}",
            age_years=age,
            gender=gender,
            race=race,
            ethnicity=ethnicity,
            index_date=index_date,
            label=Label.CRC if is_crc else Label.NON_CRC,
            events=tuple(events),
        )

    def _make_ineligible(self, events, index_date, history_days):
        if self.rng.random() < 0.5:
            system, code, display = EXCLUSION_CODES[int(self.rng.integers(len(EXCLUSION_CODES)))]
            when = index_date - dt.timedelta(days=int(self.rng.integers(1, history_days + 1)))
            return events + [ClinicalEvent(EventKind.CONDITION, system, code, display, when)]
        # Too little history: keep only events from the final 120 days.
        return [e for e in events if (index_date - e.date).days < 120]


def generate_synthetic_cohort(config: SyntheticCohortConfig) -> list[PatientRecord]:
    """Generate ``config.n_patients`` records, exactly ``round(n * prevalence)`` of them CRC."""
    config.validate()
    gen = _Generator(config)
    n_crc = config.n_crc
    crc_mask = np.zeros(config.n_patients, dtype=bool)
    crc_mask[gen.rng.permutation(config.n_patients)[:n_crc]] = True
    return [gen.patient(i, bool(crc_mask[i])) for i in range(config.n_patients)]
