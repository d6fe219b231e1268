"""Export a supervised fine-tuning dataset as JSON Lines chat records."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

from ..features import Windowed
from .parse import ParsedPrediction, render_prediction
from .prompt import GuidelineSpec, build_system_text, serialize_patient


@dataclass(frozen=True)
class FineTuneExample:
    system_text: str
    user_text: str
    assistant_text: str

    def to_record(self) -> dict:
        return {
            "messages": [
                {"role": "system", "content": self.system_text},
                {"role": "user", "content": self.user_text},
                {"role": "assistant", "content": self.assistant_text},
            ]
        }


def gold_reply(is_crc: bool) -> str:
    """Answer and probability lines only; no reasoning text is synthesized."""
    return render_prediction(ParsedPrediction(is_crc, 1.0 if is_crc else 0.0))


def finetune_examples(train: Sequence[Windowed], guidelines: GuidelineSpec = GuidelineSpec()) -> list[FineTuneExample]:
    system_text = build_system_text(guidelines)
    return [
        FineTuneExample(system_text, serialize_patient(w.events, w.patient), gold_reply(w.patient.is_crc))
        for w in sorted(train, key=lambda w: w.id)
    ]


def export_finetune_dataset(
    train: Sequence[Windowed], guidelines: GuidelineSpec, path: Union[str, Path]
) -> int:
    """Write one chat record per patient, ordered by patient id; returns the count."""
    examples = finetune_examples(train, guidelines)
    with Path(path).open("w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_record(), ensure_ascii=False, sort_keys=True) + "\n")
    return len(examples)
