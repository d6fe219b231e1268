"""Sparse feature representation of windowed patient histories.

Columns: age, demographic one-hots (missing values kept as their own
"NotSpecified" category), condition occurrence counts, and mean lab /
observation values. Observations that never carry a value are counted like
conditions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .cohort.records import ClinicalEvent, EventKind, PatientRecord
from .cohort.selection import CohortCriteria, extract_window
from .errors import DimensionError

_PREFIX = {EventKind.CONDITION: "cond", EventKind.LAB: "lab", EventKind.OBSERVATION: "obs"}
_KIND_ORDER = {"demo": 0, "cond": 1, "lab": 2, "obs": 3}
STD_FLOOR = 1e-12


@dataclass(frozen=True)
class Windowed:
    """A patient paired with the events inside its observation window."""

    patient: PatientRecord
    events: tuple[ClinicalEvent, ...]

    @property
    def id(self) -> str:
        return self.patient.id

    @property
    def label(self) -> int:
        return int(self.patient.is_crc)


def window_patients(patients: Iterable[PatientRecord], criteria: CohortCriteria = CohortCriteria()) -> list[Windowed]:
    return [Windowed(p, tuple(extract_window(p, criteria))) for p in patients]


def event_feature(e: ClinicalEvent) -> str:
    return f"{_PREFIX[e.kind]}:{e.code_system.value}:{e.code}"


def _demographic_features(p: PatientRecord) -> dict[str, float]:
    return {
        "demo:age_years": float(p.age_years),
        f"demo:gender={p.gender.value}": 1.0,
        f"demo:race={p.race.value}": 1.0,
        f"demo:ethnicity={p.ethnicity.value}": 1.0,
    }


def _raw_features(w: Windowed) -> dict[str, float]:
    feats = _demographic_features(w.patient)
    counts: dict[str, int] = {}
    sums: dict[str, float] = {}
    nvals: dict[str, int] = {}
    for e in w.events:
        name = event_feature(e)
        counts[name] = counts.get(name, 0) + 1
        if e.value is not None and e.kind is not EventKind.CONDITION:
            sums[name] = sums.get(name, 0.0) + e.value
            nvals[name] = nvals.get(name, 0) + 1
    for name, c in counts.items():
        feats[name] = sums[name] / nvals[name] if name in nvals else float(c)
    return feats


def _sort_key(name: str):
    return (_KIND_ORDER[name.split(":", 1)[0]], name)


def is_binary_feature(name: str) -> bool:
    return name.startswith("demo:") and "=" in name


@dataclass(frozen=True)
class FeatureSpace:
    names: tuple[str, ...]
    displays: dict[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")
        object.__setattr__(self, "index", {n: i for i, n in enumerate(self.names)})
        object.__setattr__(self, "binary_mask", np.array([is_binary_feature(n) for n in self.names], dtype=bool))

    @property
    def dim(self) -> int:
        return len(self.names)

    def display(self, name: str) -> str:
        return self.displays.get(name, name)

    def manifest(self) -> dict:
        return {"names": list(self.names), "displays": {n: self.displays[n] for n in self.names if n in self.displays}}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(list(self.names)).encode()).hexdigest()[:16]

    @classmethod
    def from_manifest(cls, d: dict) -> "FeatureSpace":
        return cls(tuple(d["names"]), dict(d.get("displays", {})))


def build_feature_space(train: Sequence[Windowed]) -> FeatureSpace:
    """One column per demographic category, condition, lab and observation seen in training."""
    if not train:
        raise ValueError("cannot build a feature space from an empty training set")
    names: set[str] = set()
    displays: dict[str, str] = {}
    for w in train:
        names.update(_demographic_features(w.patient))
        for e in w.events:
            n = event_feature(e)
            names.add(n)
            displays.setdefault(n, e.display)
    return FeatureSpace(tuple(sorted(names, key=_sort_key)), displays)


@dataclass(frozen=True)
class FeatureVector:
    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.dim):
            raise ValueError("columns must be strictly increasing and inside the space")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    @classmethod
    def from_dense(cls, x) -> "FeatureVector":
        x = np.asarray(x, dtype=float)
        nz = np.flatnonzero(x)
        return cls(nz, x[nz], x.shape[0])


def featurize(w: Windowed, space: FeatureSpace) -> FeatureVector:
    feats = _raw_features(w)
    cols = sorted((space.index[n], v) for n, v in feats.items() if n in space.index and v != 0.0)
    return FeatureVector(np.array([c for c, _ in cols], dtype=np.int64), np.array([v for _, v in cols]), space.dim)


@dataclass
class DesignMatrix:
    X: sp.csr_matrix
    labels: np.ndarray
    space: FeatureSpace
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = sp.csr_matrix(self.X, dtype=float)
        self.X.sort_indices()
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.X.shape[0] != self.labels.shape[0]:
            raise ValueError("rows and labels differ in length")
        if self.X.shape[1] != self.space.dim:
            raise DimensionError(f"matrix has {self.X.shape[1]} columns, space has {self.space.dim}")
        if not self.ids:
            self.ids = [str(i) for i in range(self.n_rows)]

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n_rows

    def row(self, i: int) -> FeatureVector:
        r = self.X.getrow(i)
        return FeatureVector(r.indices.copy(), r.data.copy(), self.dim)

    @property
    def rows(self) -> list[FeatureVector]:
        return [self.row(i) for i in range(self.n_rows)]

    def to_dense(self) -> np.ndarray:
        return self.X.toarray()

    def subset(self, idx) -> "DesignMatrix":
        idx = np.asarray(idx, dtype=np.int64)
        return DesignMatrix(self.X[idx], self.labels[idx], self.space, [self.ids[i] for i in idx])

    @classmethod
    def stack(cls, parts: Sequence["DesignMatrix"]) -> "DesignMatrix":
        space = parts[0].space
        return cls(
            sp.vstack([p.X for p in parts], format="csr"),
            np.concatenate([p.labels for p in parts]),
            space,
            [i for p in parts for i in p.ids],
        )


def design_matrix(windowed: Sequence[Windowed], space: FeatureSpace) -> DesignMatrix:
    vecs = [featurize(w, space) for w in windowed]
    return from_vectors(vecs, [w.label for w in windowed], space, [w.id for w in windowed])


def from_vectors(vecs: Sequence[FeatureVector], labels, space: FeatureSpace, ids=None) -> DesignMatrix:
    indptr = np.zeros(len(vecs) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([v.indices.size for v in vecs])
    indices = np.concatenate([v.indices for v in vecs]) if vecs else np.zeros(0, dtype=np.int64)
    data = np.concatenate([v.values for v in vecs]) if vecs else np.zeros(0)
    X = sp.csr_matrix((data, indices, indptr), shape=(len(vecs), space.dim))
    return DesignMatrix(X, np.asarray(labels, dtype=np.int64), space, list(ids or []))


def align_to_space(test: DesignMatrix, train_space: FeatureSpace) -> DesignMatrix:
    """Re-express ``test`` in the training columns; train-only columns stay zero, test-only ones are dropped."""
    src = np.array([train_space.index.get(n, -1) for n in test.space.names], dtype=np.int64)
    coo = test.X.tocoo()
    keep = src[coo.col] >= 0
    X = sp.csr_matrix(
        (coo.data[keep], (coo.row[keep], src[coo.col[keep]])),
        shape=(test.n_rows, train_space.dim),
    )
    return DesignMatrix(X, test.labels.copy(), train_space, list(test.ids))


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray
    continuous: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "continuous": self.continuous.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureStats":
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float), np.array(d["continuous"], dtype=bool))


def compute_stats(X, binary_mask: Optional[np.ndarray] = None) -> FeatureStats:
    """Column mean / population stddev; one-hot columns are flagged and left alone."""
    dense = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=float)
    mask = np.zeros(dense.shape[1], dtype=bool) if binary_mask is None else np.asarray(binary_mask, dtype=bool)
    return FeatureStats(dense.mean(axis=0), dense.std(axis=0), ~mask)


def standardize_array(X, stats: FeatureStats) -> np.ndarray:
    dense = X.toarray() if sp.issparse(X) else np.array(X, dtype=float, copy=True)
    c = stats.continuous
    dense[..., c] = (dense[..., c] - stats.mean[c]) / np.maximum(stats.std[c], STD_FLOOR)
    return dense


def standardize(matrix: DesignMatrix, stats: FeatureStats) -> DesignMatrix:
    return DesignMatrix(sp.csr_matrix(standardize_array(matrix.X, stats)), matrix.labels.copy(), matrix.space, list(matrix.ids))


def write_matrix(matrix: DesignMatrix, rows_path, manifest_path=None) -> None:
    rows_path = Path(rows_path)
    rows_path.parent.mkdir(parents=True, exist_ok=True)
    if manifest_path is not None:
        Path(manifest_path).write_text(json.dumps(matrix.space.manifest(), indent=1, sort_keys=True) + "\n")
    with rows_path.open("w", encoding="utf-8") as fh:
        for i in range(matrix.n_rows):
            start, end = matrix.X.indptr[i], matrix.X.indptr[i + 1]
            pairs = [[int(c), float(v)] for c, v in zip(matrix.X.indices[start:end], matrix.X.data[start:end])]
            fh.write(json.dumps({"id": matrix.ids[i], "label": int(matrix.labels[i]), "x": pairs}, separators=(",", ":")))
            fh.write("\n")


def read_matrix(rows_path, space: FeatureSpace) -> DesignMatrix:
    vecs, labels, ids = [], [], []
    with Path(rows_path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            pairs = rec["x"]
            vecs.append(FeatureVector([c for c, _ in pairs], [v for _, v in pairs], space.dim))
            labels.append(rec["label"])
            ids.append(rec["id"])
    return from_vectors(vecs, labels, space, ids)


def read_space(manifest_path) -> FeatureSpace:
    return FeatureSpace.from_manifest(json.loads(Path(manifest_path).read_text()))
