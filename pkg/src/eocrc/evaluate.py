"""Confusion-matrix metrics, the multi-run test protocol, and aggregation."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy import stats

log = logging.getLogger(__name__)

METRICS = ("sensitivity", "specificity", "precision", "npv", "f1")
METRIC_HEADERS = {
    "sensitivity": "Sensitivity (Recall)",
    "specificity": "Specificity",
    "precision": "Precision (PPV)",
    "npv": "NPV",
    "f1": "F1-Score",
}


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(labels, predictions) -> ConfusionCounts:
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(predictions, dtype=np.int64)
    if labels.shape != preds.shape:
        raise ValueError(f"{labels.size} labels but {preds.size} predictions")
    return ConfusionCounts(
        tp=int(np.sum((labels == 1) & (preds == 1))),
        fp=int(np.sum((labels == 0) & (preds == 1))),
        fn=int(np.sum((labels == 1) & (preds == 0))),
        tn=int(np.sum((labels == 0) & (preds == 0))),
    )


@dataclass(frozen=True)
class RunMetrics:
    sensitivity: float
    specificity: float
    precision: float
    npv: float
    f1: float
    counts: ConfusionCounts = field(default_factory=ConfusionCounts)
    degenerate: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return asdict(self)


def _ratio(num: int, den: int, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def compute_metrics(c: ConfusionCounts) -> RunMetrics:
    """Ratios from counts; any 0/0 is reported as 0 and named in ``degenerate``."""
    flags: list[str] = []
    sens = _ratio(c.tp, c.tp + c.fn, "sensitivity", flags)
    spec = _ratio(c.tn, c.tn + c.fp, "specificity", flags)
    prec = _ratio(c.tp, c.tp + c.fp, "precision", flags)
    npv = _ratio(c.tn, c.tn + c.fn, "npv", flags)
    if prec + sens == 0.0:
        flags.append("f1")
        f1 = 0.0
    else:
        f1 = 2.0 * prec * sens / (prec + sens)
    return RunMetrics(sens, spec, prec, npv, f1, c, tuple(flags))


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    sd: float
    ci_half_width: Optional[float]


@dataclass(frozen=True)
class AggregateReport:
    metrics: dict[str, MetricSummary]
    n_runs: int

    def to_dict(self) -> dict:
        return {"n_runs": self.n_runs, "metrics": {k: asdict(v) for k, v in self.metrics.items()}}


def aggregate(runs: Sequence[RunMetrics], confidence: float = 0.95) -> AggregateReport:
    """Mean, sample sd and t-based CI half-width per metric (CI needs two or more runs)."""
    n = len(runs)
    out = {}
    for m in METRICS:
        vals = np.array([getattr(r, m) for r in runs], dtype=float)
        mean = float(vals.mean()) if n else math.nan
        if n >= 2:
            sd = float(vals.std(ddof=1))
            half = float(stats.t.ppf(0.5 + confidence / 2.0, n - 1) * sd / math.sqrt(n))
        else:
            sd, half = 0.0, None
        out[m] = MetricSummary(mean, sd, half)
    return AggregateReport(out, n)


Predictor = Callable[[Any], np.ndarray]


def evaluate_runs(predict: Predictor, runs: Sequence[tuple[Any, Sequence[int]]]) -> tuple[list[RunMetrics], AggregateReport]:
    """Score each ``(inputs, labels)`` run with ``predict(inputs) -> 0/1 labels``.

    Runs without positives are skipped (sensitivity undefined).
    """
    per_run = []
    for i, (inputs, labels) in enumerate(runs):
        labels = np.asarray(labels, dtype=np.int64)
        if not labels.any():
            log.warning("run %d has no positives; skipped", i)
            continue
        preds = np.asarray(predict(inputs), dtype=np.int64)
        per_run.append(compute_metrics(confusion(labels, preds)))
    return per_run, aggregate(per_run)


def model_predictor(model) -> Predictor:
    from .models import predict_labels

    return lambda matrix: predict_labels(model, matrix)


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.3f}"


def table_rows(reports: dict[str, AggregateReport], spread: str = "ci") -> list[list[str]]:
    """Rows shaped like ``mean ±(spread)`` per metric; ``spread`` is "ci" or "sd"."""
    header = ["Model"] + [METRIC_HEADERS[m] for m in METRICS]
    rows = [header]
    for name, rep in reports.items():
        row = [name]
        for m in METRICS:
            s = rep.metrics[m]
            width = s.ci_half_width if spread == "ci" else s.sd
            row.append(f"{s.mean:.3f} ±({_fmt(width) or 'n/a'})")
        rows.append(row)
    return rows


def metrics_csv(reports: dict[str, AggregateReport]) -> str:
    """One row per model: mean, sd and CI half-width for every metric."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "sd", "ci95")] + ["n_runs"])
    for name, rep in reports.items():
        row = [name]
        for m in METRICS:
            s = rep.metrics[m]
            ci = "" if s.ci_half_width is None else f"{s.ci_half_width:.6f}"
            row += [f"{s.mean:.6f}", f"{s.sd:.6f}", ci]
        w.writerow(row + [rep.n_runs])
    return buf.getvalue()


def metrics_json(reports: dict[str, AggregateReport], per_run: Optional[dict[str, list[RunMetrics]]] = None) -> str:
    doc = {"models": {}}
    for name, rep in reports.items():
        entry = rep.to_dict()
        if per_run is not None and name in per_run:
            entry["runs"] = [r.as_dict() for r in per_run[name]]
        doc["models"][name] = entry
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"
