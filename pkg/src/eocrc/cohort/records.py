"""Patient and event records, plus JSON Lines persistence."""

from __future__ import annotations

import datetime as dt
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional


class EventKind(str, enum.Enum):
    CONDITION = "Condition"
    LAB = "LabResult"
    OBSERVATION = "Observation"


class CodeSystem(str, enum.Enum):
    ICD10 = "ICD10"
    SNOMEDCT = "SNOMEDCT"
    LOINC = "LOINC"


class Gender(str, enum.Enum):
    MALE = "Male"
    FEMALE = "Female"


class Race(str, enum.Enum):
    WHITE = "White"
    BLACK = "Black"
    ASIAN = "Asian"
    OTHER = "Other"
    NOT_SPECIFIED = "NotSpecified"


class Ethnicity(str, enum.Enum):
    NOT_HISPANIC = "NotHispanic"
    HISPANIC = "Hispanic"
    MEXICAN_OR_PUERTO_RICAN = "MexicanOrPuertoRican"
    NOT_SPECIFIED = "NotSpecified"


class Label(str, enum.Enum):
    CRC = "CRC"
    NON_CRC = "NonCRC"


@dataclass(frozen=True)
class ClinicalEvent:
    kind: EventKind
    code_system: CodeSystem
    code: str
    display: str
    date: dt.date
    value: Optional[float] = None
    unit: Optional[str] = None

    def __post_init__(self):
        if not self.display:
            raise ValueError(f"event {self.code_system.value}:{self.code} has an empty display name")
        if self.kind is EventKind.CONDITION and self.value is not None:
            raise ValueError(f"condition {self.code} cannot carry a value")

    @property
    def key(self) -> tuple[str, str, str]:
        """Feature identity: names are for display only."""
        return (self.kind.value, self.code_system.value, self.code)

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind.value,
            "code_system": self.code_system.value,
            "code": self.code,
            "display": self.display,
            "date": self.date.isoformat(),
        }
        if self.value is not None:
            d["value"] = self.value
        if self.unit is not None:
            d["unit"] = self.unit
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClinicalEvent":
        return cls(
            kind=EventKind(d["kind"]),
            code_system=CodeSystem(d["code_system"]),
            code=d["code"],
            display=d["display"],
            date=dt.date.fromisoformat(d["date"]),
            value=d.get("value"),
            unit=d.get("unit"),
        )


def _event_sort_key(e: ClinicalEvent):
    return (e.date, e.kind.value, e.code_system.value, e.code, -1.0 if e.value is None else e.value)


@dataclass(frozen=True)
class PatientRecord:
    id: str
    age_years: int
    gender: Gender
    race: Race
    ethnicity: Ethnicity
    index_date: dt.date
    label: Label
    events: tuple[ClinicalEvent, ...] = field(default_factory=tuple)

    def __post_init__(self):
        ordered = tuple(sorted(self.events, key=_event_sort_key))
        object.__setattr__(self, "events", ordered)

    @property
    def is_crc(self) -> bool:
        return self.label is Label.CRC

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "age_years": self.age_years,
            "gender": self.gender.value,
            "race": self.race.value,
            "ethnicity": self.ethnicity.value,
            "index_date": self.index_date.isoformat(),
            "label": self.label.value,
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PatientRecord":
        return cls(
            id=d["id"],
            age_years=int(d["age_years"]),
            gender=Gender(d["gender"]),
            race=Race(d["race"]),
            ethnicity=Ethnicity(d["ethnicity"]),
            index_date=dt.date.fromisoformat(d["index_date"]),
            label=Label(d["label"]),
            events=tuple(ClinicalEvent.from_dict(e) for e in d["events"]),
        )


def dumps_patient(p: PatientRecord) -> str:
    return json.dumps(p.to_dict(), sort_keys=True, separators=(",", ":"))


def write_cohort(patients: Iterable[PatientRecord], path, metadata: Optional[dict] = None) -> int:
    """Write one record per line; metadata goes to a ``<stem>.meta.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = n_crc = 0
    with path.open("w", encoding="utf-8") as fh:
        for p in patients:
            fh.write(dumps_patient(p))
            fh.write("\n")
            n += 1
            n_crc += p.is_crc
    meta = dict(metadata or {})
    meta["counts"] = {"patients": n, "crc": n_crc, "non_crc": n - n_crc}
    meta_path = path.with_name(path.stem + ".meta.json")
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return n


def read_cohort(path) -> list[PatientRecord]:
    with Path(path).open(encoding="utf-8") as fh:
        return [PatientRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
