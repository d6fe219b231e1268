"""Declarative pipeline configuration and per-stage seed derivation.

A config is one JSON document. Every random choice downstream takes its seed
from ``stage_seed(global_seed, stage)``, so the document alone fixes all
outputs apart from live LLM replies.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from .cohort import SplitPlan, SyntheticCohortConfig
from .errors import ConfigError
from .llm import EndpointConfig
from .models import ModelKind

STAGES = ("generate", "featurize", "train", "calibrate", "evaluate", "explain", "llm")


def stage_seed(global_seed: int, stage: str) -> int:
    """First 8 bytes of sha256("<seed>:<stage>"), as a non-negative int below 2**63."""
    digest = hashlib.sha256(f"{global_seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def content_hash(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class CohortSection:
    n_patients: int = 20_000
    prevalence: float = 0.01
    signal_strength: float = 2.0
    ineligible_fraction: float = 0.0
    input_path: Optional[str] = None

    def synthetic(self, seed: int) -> SyntheticCohortConfig:
        cfg = SyntheticCohortConfig(
            n_patients=self.n_patients,
            prevalence=self.prevalence,
            seed=seed,
            signal_strength=self.signal_strength,
            ineligible_fraction=self.ineligible_fraction,
        )
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class SplitSection:
    train_pos: int = 150
    train_neg: int = 150
    n_test_runs: int = 10
    test_pos_per_run: int = 5
    test_neg_per_run: int = 495

    def plan(self, seed: int) -> SplitPlan:
        return SplitPlan(self.train_pos, self.train_neg, self.n_test_runs, self.test_pos_per_run, self.test_neg_per_run, seed)

    def validate(self) -> None:
        for name in ("train_pos", "train_neg", "n_test_runs", "test_pos_per_run", "test_neg_per_run"):
            if getattr(self, name) < 1:
                raise ConfigError("must be a positive integer", f"split.{name}")


@dataclass(frozen=True)
class ModelSection:
    kinds: tuple[str, ...] = ("LR", "XGBoostPreset")
    n_iters: int = 4
    k_folds: int = 5
    search_spaces: dict = field(default_factory=dict)
    hyper: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not self.kinds:
            raise ConfigError("at least one model kind is required", "models.kinds")
        for i, k in enumerate(self.kinds):
            try:
                ModelKind(k)
            except ValueError:
                valid = ", ".join(m.value for m in ModelKind)
                raise ConfigError(f"unknown model kind {k!r} (valid: {valid})", f"models.kinds[{i}]") from None
        if len(set(self.kinds)) != len(self.kinds):
            raise ConfigError("duplicate model kinds", "models.kinds")
        if self.n_iters < 0:
            raise ConfigError("must be >= 0 (0 uses default hyperparameters)", "models.n_iters")
        if self.k_folds < 2:
            raise ConfigError("must be >= 2", "models.k_folds")
        for section in ("search_spaces", "hyper"):
            for k in getattr(self, section):
                if k not in self.kinds:
                    raise ConfigError(f"entry for unconfigured kind {k!r}", f"models.{section}.{k}")

    def search_space(self, kind: str) -> Optional[dict]:
        raw = self.search_spaces.get(kind)
        return None if raw is None else {name: tuple(spec) for name, spec in raw.items()}


@dataclass(frozen=True)
class CalibrationSection:
    k: int = 10
    target_prevalence: float = 0.01
    pool_limit: int = 5000

    def validate(self) -> None:
        if self.k < 2:
            raise ConfigError("must be >= 2", "calibration.k")
        if not 0.0 < self.target_prevalence < 1.0:
            raise ConfigError("must lie in (0, 1)", "calibration.target_prevalence")
        if self.pool_limit < 0:
            raise ConfigError("must be >= 0", "calibration.pool_limit")


@dataclass(frozen=True)
class ExplainSection:
    background_size: int = 32
    max_exact_features: int = 12
    n_samples: int = 512
    top_k: int = 10

    def validate(self) -> None:
        for name in ("background_size", "n_samples", "top_k"):
            if getattr(self, name) < 1:
                raise ConfigError("must be a positive integer", f"explain.{name}")


@dataclass(frozen=True)
class LLMSection:
    """Either a live ``endpoint`` or an offline ``mock_rulebook`` (substring -> reply)."""

    endpoint: Optional[EndpointConfig] = None
    mock_rulebook: Optional[dict] = None
    mock_default_reply: str = "Answer: No"
    guidelines_path: Optional[str] = None
    max_concurrency: int = 4

    def validate(self) -> None:
        if self.endpoint is not None and self.mock_rulebook is not None:
            raise ConfigError("set either endpoint or mock_rulebook, not both", "llm")
        if self.max_concurrency < 1:
            raise ConfigError("must be >= 1", "llm.max_concurrency")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    output_dir: str = "runs/desk"
    cohort: CohortSection = CohortSection()
    split: SplitSection = SplitSection()
    models: ModelSection = ModelSection()
    calibration: CalibrationSection = CalibrationSection()
    explain: ExplainSection = ExplainSection()
    llm: LLMSection = LLMSection()

    def validate(self) -> "PipelineConfig":
        if self.seed < 0:
            raise ConfigError("must be non-negative", "seed")
        if self.cohort.input_path is None:
            self.cohort.synthetic(0)
        for section in (self.split, self.models, self.calibration, self.explain, self.llm):
            section.validate()
        return self

    def seed_for(self, stage: str) -> int:
        return stage_seed(self.seed, stage)

    def to_dict(self) -> dict:
        return _to_jsonable(self)

    def section_hash(self, *names: str) -> str:
        d = self.to_dict()
        return content_hash({"seed": self.seed, **{n: d[n] for n in names}})


_SECTIONS = {
    "cohort": CohortSection,
    "split": SplitSection,
    "models": ModelSection,
    "calibration": CalibrationSection,
    "explain": ExplainSection,
    "llm": LLMSection,
}


def _to_jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    return obj


def _coerce(value, default, path: str):
    """Light type check against the field's default value."""
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}", path)
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path)
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path)
        return float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path)
    elif isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {value!r}", path)
        return tuple(value)
    elif isinstance(default, dict) and not isinstance(value, dict):
        raise ConfigError(f"expected an object, got {value!r}", path)
    return value


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object, got {type(data).__name__}", path or "<root>")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(f"unknown field (known: {', '.join(fields)})", where)
    proto = cls()
    kwargs = {}
    for name, value in data.items():
        sub = f"{path}.{name}" if path else name
        if cls is PipelineConfig and name in _SECTIONS:
            kwargs[name] = _build(_SECTIONS[name], value, sub)
        elif cls is LLMSection and name == "endpoint" and value is not None:
            kwargs[name] = _build(EndpointConfig, value, sub)
        else:
            default = getattr(proto, name)
            if name in ("input_path", "mock_rulebook", "guidelines_path") and value is not None:
                default = {"mock_rulebook": {}}.get(name, "")
            kwargs[name] = _coerce(value, default, sub)
    return cls(**kwargs)


def config_from_dict(data: dict) -> PipelineConfig:
    return _build(PipelineConfig, data, "").validate()


def load_config(path: Union[str, Path]) -> PipelineConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", str(path)) from None
    return config_from_dict(data)


def apply_overrides(config: PipelineConfig, assignments: list[str]) -> PipelineConfig:
    """Apply ``dotted.path=value`` overrides; values parse as JSON, falling back to strings."""
    data = config.to_dict()
    for item in assignments:
        if "=" not in item:
            raise ConfigError("override must look like key=value", item)
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {} if node.get(p) is None else node[p]
                if not isinstance(node[p], dict):
                    raise ConfigError("cannot descend into a non-object", key)
            node = node[p]
        node[parts[-1]] = value
    return config_from_dict(data)
