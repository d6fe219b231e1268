"""Chain-of-thought prompt template and patient serialization."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

from ..cohort.records import ClinicalEvent, EventKind, PatientRecord

MAX_TOKENS = 4096
TEMPERATURE = 0.0


@dataclass(frozen=True)
class GuidelineSpec:
    symptoms_early: tuple[str, ...] = (
        "Changes in bowel habits (diarrhea, constipation, narrow stool)",
        "Persistent feeling of needing a bowel movement",
        "Rectal bleeding (bright red) or blood in stool (dark brown/black)",
        "Cramping or abdominal pain",
        "Weakness, fatigue, unintended weight loss",
        "Anemia (low red blood cell count)",
    )
    symptoms_advanced: tuple[str, ...] = (
        "Enlarged liver",
        "Jaundice (yellowing of the skin/eyes)",
        "Difficulty breathing (due to cancer spreading to lungs)",
    )
    high_risk_conditions: tuple[str, ...] = (
        "Malignant neoplastic disease",
        "Fresh blood passed per rectum",
        "Hemorrhage of rectum and anus",
        "Colitis",
        "Pain due to neoplastic disease",
        "Hemorrhoids",
        "Melena",
        "Malignant tumor of anus",
        "Rectal hemorrhage",
        "Localized enlarged lymph nodes",
        "Altered bowel function",
        "Human immunodeficiency virus infection",
        "Gastrointestinal hemorrhage",
        "Intra-abdominal and pelvic swelling, mass and lump",
        "Rectal pain",
        "History of disorder of digestive system",
        "Chronic constipation",
    )
    high_risk_labs: tuple[str, ...] = (
        "Glomerular filtration rate/1.73 sq M.predicted Volume Rate/Area",
        "Carbon dioxide, total Moles/volume",
        "Cholesterol in HDL Mass/volume",
        "Erythrocyte distribution width Ratio",
        "Chloride Moles/volume",
        "Monocytes/100 leukocytes",
        "Potassium Moles/volume",
        "Alkaline phosphatase Enzymatic activity/volume",
        "Prothrombin time (PT)",
        "Anion gap",
    )
    high_risk_observations: tuple[str, ...] = (
        "Significant weight change",
        "Pain severity - 0-10 verbal numeric rating Score - Reported",
    )

    def render(self) -> str:
        def items(xs):
            return [f" - * {x}" for x in xs]

        lines = ["1. Symptoms and Signs", " - Early Stages:"]
        lines += items(self.symptoms_early)
        lines.append(" - Advanced Stages:")
        lines += items(self.symptoms_advanced)
        lines.append("2. High-Risk Conditions")
        lines += items(self.high_risk_conditions)
        lines.append("3. High-Risk Lab tests")
        lines += items(self.high_risk_labs)
        lines.append("4. High-Risk observations")
        lines += items(self.high_risk_observations)
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {k: list(getattr(self, k)) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "GuidelineSpec":
        return cls(**{k: tuple(v) for k, v in d.items()})


def template_head() -> str:
    """Role definition, reasoning steps and output format, ending with the guideline tag."""
    return resources.files(__package__).joinpath("prompt_head.txt").read_text(encoding="utf-8")


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    max_tokens: int = MAX_TOKENS
    temperature: float = TEMPERATURE

    def messages(self) -> list[dict]:
        return [{"role": "system", "content": self.system_text}, {"role": "user", "content": self.user_text}]


def build_system_text(guidelines: GuidelineSpec = GuidelineSpec()) -> str:
    return template_head() + "\n\n" + guidelines.render()


def build_prompt(user_text: str, guidelines: GuidelineSpec = GuidelineSpec()) -> PromptBundle:
    return PromptBundle(build_system_text(guidelines), user_text)


_RACE = {"White": "White", "Black": "Black", "Asian": "Asian", "Other": "Other", "NotSpecified": "Not specified"}
_ETHNICITY = {
    "NotHispanic": "Not Hispanic or Latino",
    "Hispanic": "Hispanic or Latino",
    "MexicanOrPuertoRican": "Mexican or Puerto Rican",
    "NotSpecified": "Not specified",
}


def _fmt_value(value: float, unit) -> str:
    return f"{value!r} {unit}" if unit else repr(value)


def serialize_patient(events: Sequence[ClinicalEvent], patient: PatientRecord) -> str:
    """Demographics line, then CONDITIONS / LAB RESULTS / OBSERVATIONS blocks.

    Conditions and observations appear once (first occurrence, first value);
    each lab appears once, at its first position, with its latest value.
    """
    conditions: dict[tuple, str] = {}
    labs: dict[tuple, ClinicalEvent] = {}
    lab_latest: dict[tuple, ClinicalEvent] = {}
    observations: dict[tuple, str] = {}
    for e in sorted(events, key=lambda e: e.date):
        if e.kind is EventKind.CONDITION:
            conditions.setdefault(e.key, e.display)
        elif e.kind is EventKind.LAB:
            labs.setdefault(e.key, e)
            if e.value is not None:
                lab_latest[e.key] = e
        elif e.key not in observations:
            observations[e.key] = e.display if e.value is None else f"{e.display} ({_fmt_value(e.value, e.unit)})"

    lab_items = []
    for key, first in labs.items():
        latest = lab_latest.get(key)
        lab_items.append(first.display if latest is None else f"{first.display} ({_fmt_value(latest.value, latest.unit)})")

    demo = (
        f"DEMOGRAPHICS: Age {patient.age_years}, Gender {patient.gender.value}, "
        f"Race {_RACE[patient.race.value]}, Ethnicity {_ETHNICITY[patient.ethnicity.value]}"
    )
    return "\n".join(
        [
            demo,
            f"CONDITIONS: [{', '.join(conditions.values())}]",
            f"LAB RESULTS: [{', '.join(lab_items)}]",
            f"OBSERVATIONS: [{', '.join(observations.values())}]",
        ]
    )
