from .records import (
    ClinicalEvent,
    CodeSystem,
    Ethnicity,
    EventKind,
    Gender,
    Label,
    PatientRecord,
    Race,
    read_cohort,
    write_cohort,
)
from .selection import CohortCriteria, SplitPlan, Splits, apply_eligibility, extract_window, is_eligible, make_splits
from .synthetic import SyntheticCohortConfig, generate_synthetic_cohort
from .vocabulary import DEFAULT_VOCABULARY, EXCLUSION_CODES, VocabEntry, signal_entries

__all__ = [
    "ClinicalEvent",
    "CodeSystem",
    "CohortCriteria",
    "DEFAULT_VOCABULARY",
    "EXCLUSION_CODES",
    "Ethnicity",
    "EventKind",
    "Gender",
    "Label",
    "PatientRecord",
    "Race",
    "SplitPlan",
    "Splits",
    "SyntheticCohortConfig",
    "VocabEntry",
    "apply_eligibility",
    "extract_window",
    "generate_synthetic_cohort",
    "is_eligible",
    "make_splits",
    "read_cohort",
    "signal_entries",
    "write_cohort",
]
