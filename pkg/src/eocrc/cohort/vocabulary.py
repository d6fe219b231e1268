"""Fixture code vocabulary for the synthetic cohort.

Codes are illustrative stand-ins, not a curated clinical code set. Entries
with a nonzero ``signal_weight`` (or ``value_shift``) are the designated risk
codes that the generator tilts for CRC patients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .records import CodeSystem, EventKind

C, L, O = EventKind.CONDITION, EventKind.LAB, EventKind.OBSERVATION
ICD, SCT, LNC = CodeSystem.ICD10, CodeSystem.SNOMEDCT, CodeSystem.LOINC


@dataclass(frozen=True)
class VocabEntry:
    kind: EventKind
    code_system: CodeSystem
    code: str
    display: str
    base_rate: float
    signal_weight: float = 0.0
    repeat_mean: float = 0.3
    unit: Optional[str] = None
    mean: Optional[float] = None
    sd: Optional[float] = None
    value_shift: float = 0.0
    decimals: int = 1
    prenatal: bool = False

    @property
    def valued(self) -> bool:
        return self.mean is not None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.kind.value, self.code_system.value, self.code)

    @property
    def is_signal(self) -> bool:
        return self.signal_weight != 0.0 or self.value_shift != 0.0


def _cond(system, code, display, base_rate, weight=0.0, repeat=0.4):
    return VocabEntry(C, system, code, display, base_rate, weight, repeat)


def _lab(code, display, unit, mean, sd, base_rate, shift=0.0, weight=0.0, decimals=1, repeat=0.5):
    return VocabEntry(L, LNC, code, display, base_rate, weight, repeat, unit, mean, sd, shift, decimals)


# High-risk conditions named in the prompt guidelines.
RISK_CONDITIONS = (
    _cond(SCT, "363346000", "Malignant neoplastic disease", 0.004, 1.6),
    _cond(SCT, "8765009", "Fresh blood passed per rectum", 0.006, 1.5),
    _cond(SCT, "12063002", "Hemorrhage of rectum and anus", 0.006, 1.4),
    _cond(ICD, "K52.9", "Colitis", 0.012, 1.0),
    _cond(ICD, "G89.3", "Pain due to neoplastic disease", 0.003, 1.2),
    _cond(ICD, "K64.9", "Hemorrhoids", 0.03, 1.0),
    _cond(ICD, "K92.1", "Melena", 0.005, 1.3),
    _cond(ICD, "C21.0", "Malignant tumor of anus", 0.001, 1.0),
    _cond(ICD, "K62.5", "Rectal hemorrhage", 0.015, 1.8),
    _cond(ICD, "R59.0", "Localized enlarged lymph nodes", 0.02, 0.8),
    _cond(ICD, "R19.4", "Altered bowel function", 0.015, 1.2),
    _cond(ICD, "B20", "Human immunodeficiency virus infection", 0.005, 0.6),
    _cond(ICD, "K92.2", "Gastrointestinal hemorrhage", 0.008, 1.3),
    _cond(ICD, "R19.00", "Intra-abdominal and pelvic swelling, mass and lump", 0.006, 1.3),
    _cond(ICD, "K62.89", "Rectal pain", 0.01, 1.2),
    _cond(ICD, "Z87.19", "History of disorder of digestive system", 0.02, 0.8),
    _cond(ICD, "K59.09", "Chronic constipation", 0.025, 1.0),
    # Early-stage symptoms from the guideline block.
    _cond(ICD, "R10.9", "Abdominal pain", 0.08, 1.0),
    _cond(ICD, "D64.9", "Anemia", 0.04, 1.2),
    _cond(ICD, "R63.4", "Abnormal weight loss", 0.015, 1.0),
    _cond(ICD, "R53.83", "Fatigue", 0.06, 0.6),
)

NEUTRAL_CONDITIONS = (
    _cond(ICD, "I10", "Essential hypertension", 0.08),
    _cond(ICD, "F41.9", "Anxiety disorder", 0.12),
    _cond(ICD, "F32.9", "Depressive disorder", 0.09),
    _cond(ICD, "J45.909", "Asthma", 0.07),
    _cond(ICD, "E66.9", "Obesity", 0.10),
    _cond(ICD, "E11.9", "Type 2 diabetes mellitus", 0.04),
    _cond(ICD, "M54.50", "Low back pain", 0.09),
    _cond(ICD, "J06.9", "Acute upper respiratory infection", 0.12),
    _cond(ICD, "G43.909", "Migraine", 0.06),
    _cond(ICD, "K21.9", "Gastro-esophageal reflux disease", 0.06),
    _cond(ICD, "J30.9", "Allergic rhinitis", 0.07),
    _cond(ICD, "E03.9", "Hypothyroidism", 0.04),
    _cond(ICD, "E55.9", "Vitamin D deficiency", 0.05),
    _cond(ICD, "E78.5", "Hyperlipidemia", 0.05),
    _cond(ICD, "N39.0", "Urinary tract infection", 0.05),
    _cond(ICD, "R51.9", "Headache", 0.07),
    _cond(ICD, "Z72.0", "Tobacco use", 0.08),
    _cond(ICD, "L70.0", "Acne vulgaris", 0.04),
)

PRENATAL_CONDITIONS = (
    VocabEntry(C, ICD, "Z34.90", "Encounter for supervision of normal pregnancy", 0.0, repeat_mean=2.0, prenatal=True),
    VocabEntry(C, ICD, "O99.89", "Other specified diseases complicating pregnancy", 0.0, repeat_mean=0.2, prenatal=True),
)

LABS = (
    # High-risk lab tests named in the prompt guidelines.
    _lab("33914-3", "Glomerular filtration rate/1.73 sq M.predicted Volume Rate/Area", "mL/min/1.73m2", 105.0, 18.0, 0.35, shift=-0.45),
    _lab("2028-9", "Carbon dioxide, total Moles/volume", "mmol/L", 25.0, 2.5, 0.40, shift=-0.35),
    _lab("2085-9", "Cholesterol in HDL Mass/volume", "mg/dL", 52.0, 13.0, 0.15, shift=-0.3),
    _lab("788-0", "Erythrocyte distribution width Ratio", "%", 13.4, 1.1, 0.35, shift=0.8, weight=0.4),
    _lab("2075-0", "Chloride Moles/volume", "mmol/L", 103.0, 2.5, 0.40, shift=0.3),
    _lab("5905-5", "Monocytes/100 leukocytes", "%", 7.5, 1.8, 0.30, shift=0.4),
    _lab("2823-3", "Potassium Moles/volume", "mmol/L", 4.1, 0.35, 0.40, shift=-0.2, decimals=2),
    _lab("6768-6", "Alkaline phosphatase Enzymatic activity/volume", "U/L", 75.0, 20.0, 0.30, shift=0.5),
    _lab("5902-2", "Prothrombin time (PT)", "s", 12.5, 1.0, 0.08, shift=0.4, weight=0.5),
    _lab("33037-3", "Anion gap", "mmol/L", 9.0, 2.5, 0.30, shift=0.3),
    # Labs highlighted by the tree-ensemble importances.
    _lab("2039-6", "Carcinoembryonic Ag Mass/volume", "ng/mL", 1.6, 0.8, 0.01, shift=1.5, weight=2.5),
    _lab("2777-1", "Phosphate Mass/volume", "mg/dL", 3.6, 0.5, 0.10, shift=-0.4, weight=0.6),
    _lab("2708-6", "Oxygen saturation in Arterial blood", "%", 97.5, 1.2, 0.05, shift=-0.5, weight=0.6),
    _lab("718-7", "Hemoglobin Mass/volume", "g/dL", 13.5, 1.4, 0.45, shift=-0.8),
    # Routine labs without signal.
    _lab("777-3", "Platelets #/volume", "10*3/uL", 260.0, 55.0, 0.45, decimals=0),
    _lab("6690-2", "Leukocytes #/volume", "10*3/uL", 7.2, 1.9, 0.45),
    _lab("2345-7", "Glucose Mass/volume", "mg/dL", 92.0, 14.0, 0.40, decimals=0),
    _lab("2951-2", "Sodium Moles/volume", "mmol/L", 139.0, 2.2, 0.40, decimals=0),
    _lab("2160-0", "Creatinine Mass/volume", "mg/dL", 0.85, 0.18, 0.40, decimals=2),
    _lab("1742-6", "Alanine aminotransferase Enzymatic activity/volume", "U/L", 24.0, 10.0, 0.30, decimals=0),
    _lab("2276-4", "Ferritin Mass/volume", "ng/mL", 80.0, 45.0, 0.08, decimals=0),
)

OBSERVATIONS = (
    VocabEntry(O, LNC, "29463-7", "Body weight", 0.9, repeat_mean=1.0, unit="kg", mean=78.0, sd=18.0),
    VocabEntry(O, LNC, "39156-5", "Body mass index (BMI) [Ratio]", 0.7, repeat_mean=0.8, unit="kg/m2", mean=27.5, sd=5.5, value_shift=-0.3),
    VocabEntry(O, LNC, "72514-3", "Pain severity - 0-10 verbal numeric rating Score - Reported", 0.3, 0.6, 0.5, unit="{score}", mean=3.0, sd=2.0, value_shift=0.6, decimals=0),
    VocabEntry(O, LNC, "8867-4", "Heart rate", 0.8, repeat_mean=1.0, unit="/min", mean=76.0, sd=11.0, decimals=0),
    VocabEntry(O, LNC, "8480-6", "Systolic blood pressure", 0.8, repeat_mean=1.0, unit="mm[Hg]", mean=120.0, sd=13.0, decimals=0),
    VocabEntry(O, LNC, "8310-5", "Body temperature", 0.5, repeat_mean=0.3, unit="Cel", mean=36.8, sd=0.3),
    VocabEntry(O, SCT, "161832001", "Significant weight change", 0.02, 1.4, 0.1),
    VocabEntry(O, SCT, "229819007", "Tobacco use and exposure", 0.2, repeat_mean=0.2),
)

PRENATAL_OBSERVATIONS = (
    VocabEntry(O, LNC, "11884-4", "Gestational age Estimated", 0.0, repeat_mean=2.0, unit="wk", mean=20.0, sd=8.0, decimals=0, prenatal=True),
)

DEFAULT_VOCABULARY: tuple[VocabEntry, ...] = (
    RISK_CONDITIONS + NEUTRAL_CONDITIONS + PRENATAL_CONDITIONS + LABS + OBSERVATIONS + PRENATAL_OBSERVATIONS
)

# Diagnosis coded on the index date of every CRC patient (outside any observation window).
CRC_DIAGNOSIS = VocabEntry(C, ICD, "C18.9", "Malignant neoplasm of colon, unspecified", 0.0)

# History anchor recorded at the start of every synthetic patient's journey.
ANCHOR_ENCOUNTER = VocabEntry(O, LNC, "29463-7", "Body weight", 0.0, unit="kg", mean=78.0, sd=18.0)

# (code_system, code, display) for the exclusion criteria.
EXCLUSION_CODES = (
    (ICD, "Z85.038", "Personal history of malignant neoplasm of large intestine"),
    (ICD, "Z80.0", "Family history of malignant neoplasm of digestive organs"),
    (ICD, "K50.90", "Crohn's disease"),
    (SCT, "315058005", "Lynch syndrome"),
    (ICD, "K51.90", "Ulcerative colitis"),
)


def signal_entries(vocabulary=DEFAULT_VOCABULARY) -> list[VocabEntry]:
    return [v for v in vocabulary if v.is_signal]
