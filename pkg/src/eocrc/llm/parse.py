"""Extract the answer, probability score and explanation from a model reply."""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Optional

from ..errors import ParseError

_ANSWER = re.compile(r"answer\s*:\s*(yes|no)\b", re.IGNORECASE)
_PROB = re.compile(r"probability\s+score\s*:\s*([0-9]+(?:\.[0-9]+)?)\s*%", re.IGNORECASE)


@dataclass(frozen=True)
class ParsedPrediction:
    answer: bool
    probability: Optional[float] = None
    explanation: str = ""

    @property
    def label(self) -> int:
        return int(self.answer)


def _line_span(text: str, m: re.Match) -> tuple[int, int]:
    start = text.rfind("\n", 0, m.start()) + 1
    end = text.find("\n", m.end())
    return start, len(text) if end < 0 else end + 1


def parse_response(text: str) -> ParsedPrediction:
    """Last "Answer: yes/no" wins; the probability is optional.

    Raises ParseError (carrying the raw text) when no answer token is found.
    """
    answers = list(_ANSWER.finditer(text))
    if not answers:
        raise ParseError("no 'Answer: yes/no' token in response", text)
    ans = answers[-1]
    probs = list(_PROB.finditer(text))
    prob_match = probs[-1] if probs else None
    probability = None
    if prob_match is not None:
        try:
            probability = float(Decimal(prob_match.group(1)) / Decimal(100))
        except InvalidOperation:  # pragma: no cover - regex admits only digits
            probability = None
        if probability is not None and not 0.0 <= probability <= 1.0:
            probability = None

    spans = sorted(_line_span(text, m) for m in ([ans, prob_match] if prob_match else [ans]))
    pieces, cursor = [], 0
    for s, e in spans:
        pieces.append(text[cursor:s])
        cursor = max(cursor, e)
    pieces.append(text[cursor:])
    explanation = "".join(pieces).strip()
    return ParsedPrediction(ans.group(1).lower() == "yes", probability, explanation)


def format_percent(p: float) -> str:
    s = f"{p * 100:.8f}".rstrip("0").rstrip(".")
    return s or "0"


def render_prediction(pred: ParsedPrediction) -> str:
    """Reply text in the prompt's required output format."""
    lines = [f"Answer: {'Yes' if pred.answer else 'No'}"]
    if pred.probability is not None:
        lines.append(f"Probability score: {format_percent(pred.probability)}%")
    if pred.explanation:
        lines.append(pred.explanation)
    return "\n".join(lines)
