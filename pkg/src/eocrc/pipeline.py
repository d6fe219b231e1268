"""Stage orchestration over an output directory.

Layout under ``output_dir``::

    cohort.jsonl, cohort.meta.json          generate
    splits.json, features/*.jsonl, features/space.json
                                            featurize
    models/<kind>.json, models/<kind>.search.json
                                            train
    thresholds/<kind>.json, models/<kind>.calibrated.json
                                            calibrate
    metrics.json, metrics.csv, metrics_table.md
                                            evaluate
    explain/<kind>/...                      explain
    llm/finetune.jsonl, llm/metrics.json, llm/metrics.csv, llm/predictions.jsonl
                                            llm
    report.md                               report
    stages/<stage>.json                     input hash per completed stage
    provenance.json                         timestamps and host (not deterministic)

Each stage records a hash of the config sections it depends on, chained
through its prerequisites. A stage refuses to run on a prerequisite whose
recorded hash differs from the current config's.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import platform
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .calibrate import ThresholdReport, cv_threshold
from .cohort import (
    PatientRecord,
    apply_eligibility,
    generate_synthetic_cohort,
    make_splits,
    read_cohort,
    write_cohort,
)
from .config import PipelineConfig, content_hash
from .errors import StageError
from .evaluate import AggregateReport, MetricSummary, RunMetrics, evaluate_runs, metrics_csv, metrics_json, model_predictor, table_rows
from .explain import BackgroundSet, export_waterfall, gain_importance, importance_csv, shap_values, to_json, waterfall_csv
from .features import (
    DesignMatrix,
    Windowed,
    build_feature_space,
    design_matrix,
    read_matrix,
    read_space,
    window_patients,
    write_matrix,
)
from .llm import (
    GuidelineSpec,
    HttpChatEndpoint,
    LLMPredictor,
    build_prompt,
    export_finetune_dataset,
    mock_endpoint,
    serialize_patient,
)
from .models import ModelKind, load_model, random_search, save_model, stratified_folds, train
from .models.search import cross_val_f1

log = logging.getLogger(__name__)

LLM_ARM = "LLM"
PREREQUISITE = {
    "featurize": "generate",
    "train": "featurize",
    "calibrate": "train",
    "evaluate": "calibrate",
    "explain": "calibrate",
    "llm": "featurize",
}


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


class Pipeline:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = Path(config.output_dir)

    # ---- bookkeeping -------------------------------------------------

    def stage_hash(self, stage: str) -> str:
        c = self.config
        if stage == "generate":
            return c.section_hash("cohort")
        if stage == "featurize":
            return content_hash([self.stage_hash("generate"), c.section_hash("split")])
        if stage == "train":
            return content_hash([self.stage_hash("featurize"), c.section_hash("models")])
        if stage == "calibrate":
            return content_hash([self.stage_hash("train"), c.section_hash("calibration")])
        if stage == "evaluate":
            return content_hash([self.stage_hash("calibrate")])
        if stage == "explain":
            return content_hash([self.stage_hash("calibrate"), c.section_hash("explain")])
        if stage == "llm":
            return content_hash([self.stage_hash("featurize"), c.section_hash("llm")])
        raise ValueError(f"unknown stage {stage!r}")

    def _stage_file(self, stage: str) -> Path:
        return self.out / "stages" / f"{stage}.json"

    def require(self, stage: str) -> None:
        """Check ``stage`` and its upstream chain; name the earliest missing or stale one."""
        chain = [stage]
        while chain[-1] in PREREQUISITE:
            chain.append(PREREQUISITE[chain[-1]])
        for s in reversed(chain):
            path = self._stage_file(s)
            if not path.exists():
                raise StageError(f"missing prerequisite stage {s!r}: run `eocrc {s}` first")
            if json.loads(path.read_text())["hash"] != self.stage_hash(s):
                raise StageError(
                    f"stale artifacts from stage {s!r}: they were produced under a different config; rerun `eocrc {s}`"
                )

    def _record(self, stage: str, files: list[Path], started: dt.datetime) -> None:
        path = self._stage_file(stage)
        path.parent.mkdir(parents=True, exist_ok=True)
        rel = sorted(str(f.relative_to(self.out)) for f in files)
        path.write_text(_dump({"stage": stage, "hash": self.stage_hash(stage), "files": rel}))
        prov_path = self.out / "provenance.json"
        prov = json.loads(prov_path.read_text()) if prov_path.exists() else {}
        prov[stage] = {
            "started": started.isoformat(timespec="seconds"),
            "finished": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
            "host": platform.node(),
            "python": platform.python_version(),
            "argv": sys.argv,
        }
        prov_path.write_text(_dump(prov))

    @staticmethod
    def _now() -> dt.datetime:
        return dt.datetime.now(dt.timezone.utc)

    def _write(self, rel: str, text: str) -> Path:
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return path

    # ---- shared loaders ------------------------------------------------

    @property
    def kinds(self) -> list[ModelKind]:
        return [ModelKind(k) for k in self.config.models.kinds]

    def cohort(self) -> list[PatientRecord]:
        return read_cohort(self.out / "cohort.jsonl")

    def split_ids(self) -> dict:
        return json.loads((self.out / "splits.json").read_text())

    def split_patients(self) -> tuple[list[PatientRecord], list[list[PatientRecord]]]:
        by_id = {p.id: p for p in self.cohort()}
        ids = self.split_ids()
        return [by_id[i] for i in ids["train"]], [[by_id[i] for i in run] for run in ids["test_runs"]]

    def space(self):
        return read_space(self.out / "features" / "space.json")

    def train_matrix(self) -> DesignMatrix:
        return read_matrix(self.out / "features" / "train.jsonl", self.space())

    def test_matrices(self) -> list[DesignMatrix]:
        space = self.space()
        n = len(self.split_ids()["test_runs"])
        return [read_matrix(self.out / "features" / f"test_run_{r:02d}.jsonl", space) for r in range(n)]

    # ---- stages ----------------------------------------------------------

    def generate(self) -> Path:
        started = self._now()
        c = self.config
        path = self.out / "cohort.jsonl"
        if c.cohort.input_path:
            patients = read_cohort(c.cohort.input_path)
            meta = {"source": "input"}
        else:
            syn = c.cohort.synthetic(c.seed_for("generate"))
            patients = generate_synthetic_cohort(syn)
            meta = {"source": "synthetic", "config": syn.summary()}
        meta["config_hash"] = self.stage_hash("generate")
        write_cohort(patients, path, meta)
        self._record("generate", [path, path.with_name("cohort.meta.json")], started)
        log.info("wrote %d patients to %s", len(patients), path)
        return path

    def featurize(self) -> list[Path]:
        self.require("generate")
        started = self._now()
        eligible = apply_eligibility(self.cohort())
        splits = make_splits(eligible, self.config.split.plan(self.config.seed_for("split")))
        train_w = window_patients(splits.train)
        space = build_feature_space(train_w)
        feat = self.out / "features"
        files = [feat / "space.json", feat / "train.jsonl"]
        write_matrix(design_matrix(train_w, space), feat / "train.jsonl", feat / "space.json")
        for r, run in enumerate(splits.test_runs):
            p = feat / f"test_run_{r:02d}.jsonl"
            write_matrix(design_matrix(window_patients(run), space), p)
            files.append(p)
        pool = [p for p in splits.reserve if not p.is_crc]
        write_matrix(design_matrix(window_patients(pool), space), feat / "pool.jsonl")
        files.append(feat / "pool.jsonl")
        doc = {
            "config_hash": self.stage_hash("featurize"),
            "train": [p.id for p in splits.train],
            "test_runs": [[p.id for p in run] for run in splits.test_runs],
            "n_reserve": len(splits.reserve),
            "n_eligible": len(eligible),
        }
        files.append(self._write("splits.json", _dump(doc)))
        self._record("featurize", files, started)
        log.info("feature space has %d columns", space.dim)
        return files

    def train(self) -> list[Path]:
        self.require("featurize")
        started = self._now()
        m = self.train_matrix()
        ms = self.config.models
        files = []
        for kind in self.kinds:
            seed = self.config.seed_for(f"train:{kind.value}")
            fixed = dict(ms.hyper.get(kind.value, {}))
            if ms.n_iters > 0:
                searched, cv_f1 = random_search(kind, m, ms.search_space(kind.value), ms.n_iters, ms.k_folds, seed)
                hyper = {**searched, **fixed}
                if fixed:
                    cv_f1 = self._cv_f1(kind, m, hyper, seed)
            else:
                hyper = fixed
                cv_f1 = self._cv_f1(kind, m, hyper, seed)
            model = train(kind, m, hyper, seed)
            path = self.out / "models" / f"{kind.value}.json"
            save_model(model, path)
            doc = {
                "kind": kind.value,
                "hyper": model.hyper,
                "cv_f1": cv_f1,
                "n_iters": ms.n_iters,
                "k_folds": ms.k_folds,
                "config_hash": self.stage_hash("train"),
            }
            files += [path, self._write(f"models/{kind.value}.search.json", _dump(doc))]
            log.info("%s: cv F1 %.3f", kind.value, cv_f1)
        self._record("train", files, started)
        return files

    def _cv_f1(self, kind, m, hyper, seed) -> float:
        rng = np.random.default_rng(seed)
        folds = stratified_folds(m.labels, self.config.models.k_folds, np.random.default_rng(rng.integers(0, 2**63)))
        return cross_val_f1(kind, m, hyper, folds, seed)

    def _pool(self) -> Optional[DesignMatrix]:
        path = self.out / "features" / "pool.jsonl"
        pool = read_matrix(path, self.space())
        limit = self.config.calibration.pool_limit
        if pool.n_rows == 0 or limit == 0:
            return None
        if pool.n_rows > limit:
            rng = np.random.default_rng(self.config.seed_for("calibrate:pool"))
            pool = pool.subset(np.sort(rng.choice(pool.n_rows, size=limit, replace=False)))
        return pool

    def calibrate(self) -> list[Path]:
        self.require("train")
        started = self._now()
        m = self.train_matrix()
        pool = self._pool()
        cal = self.config.calibration
        files = []
        for kind in self.kinds:
            model = load_model(self.out / "models" / f"{kind.value}.json")
            report = cv_threshold(
                kind,
                model.hyper,
                m,
                k=cal.k,
                target_prevalence=cal.target_prevalence,
                seed=self.config.seed_for(f"calibrate:{kind.value}"),
                negative_pool=pool,
            )
            doc = {**report.to_dict(), "config_hash": self.stage_hash("calibrate")}
            files.append(self._write(f"thresholds/{kind.value}.json", _dump(doc)))
            path = self.out / "models" / f"{kind.value}.calibrated.json"
            save_model(model.with_threshold(report.chosen_threshold), path)
            files.append(path)
            log.info("%s: threshold %.4f", kind.value, report.chosen_threshold)
        self._record("calibrate", files, started)
        return files

    def calibrated_model(self, kind: ModelKind):
        return load_model(self.out / "models" / f"{kind.value}.calibrated.json")

    def evaluate(self) -> list[Path]:
        self.require("calibrate")
        started = self._now()
        tests = self.test_matrices()
        reports: dict[str, AggregateReport] = {}
        per_run: dict[str, list[RunMetrics]] = {}
        for kind in self.kinds:
            model = self.calibrated_model(kind)
            runs, agg = evaluate_runs(model_predictor(model), [(t, t.labels) for t in tests])
            reports[kind.value], per_run[kind.value] = agg, runs
        files = self._write_metrics("", reports, per_run, self.stage_hash("evaluate"))
        self._record("evaluate", files, started)
        return files

    def _write_metrics(self, prefix: str, reports, per_run, stage_hash: str) -> list[Path]:
        doc = json.loads(metrics_json(reports, per_run))
        doc["config_hash"] = stage_hash
        rows = table_rows(reports)
        table = ["| " + " | ".join(rows[0]) + " |", "|" + "---|" * len(rows[0])]
        table += ["| " + " | ".join(r) + " |" for r in rows[1:]]
        return [
            self._write(f"{prefix}metrics.json", _dump(doc)),
            self._write(f"{prefix}metrics.csv", metrics_csv(reports)),
            self._write(f"{prefix}metrics_table.md", "\n".join(table) + "\n"),
        ]

    def explain(self, kind: ModelKind, patient_id: Optional[str] = None) -> list[Path]:
        self.require("calibrate")
        started = self._now()
        ex = self.config.explain
        model = self.calibrated_model(kind)
        space = self.space()
        train_m = self.train_matrix()
        candidates = self.test_matrices() + [train_m]
        if patient_id is None:
            first = candidates[0]
            patient_id = first.ids[int(np.flatnonzero(first.labels == 1)[0])]
        row = None
        for mtx in candidates:
            if patient_id in mtx.ids:
                row = mtx.row(mtx.ids.index(patient_id))
                break
        if row is None:
            raise StageError(f"patient {patient_id!r} is not in the training set or any test run")
        bg = BackgroundSet.sample(train_m, ex.background_size, self.config.seed_for(f"explain:{kind.value}:background"))
        expl = shap_values(
            model, row, bg, ex.max_exact_features, ex.n_samples, self.config.seed_for(f"explain:{kind.value}:shap")
        )
        names = [f"{space.displays[n]} ({n})" if n in space.displays else n for n in space.names]
        waterfall = export_waterfall(expl, ex.top_k, names)
        base = f"explain/{kind.value}"
        files = [
            self._write(f"{base}/{patient_id}.shap.json", to_json(expl.to_dict(names))),
            self._write(f"{base}/{patient_id}.waterfall.csv", waterfall_csv(waterfall)),
            self._write(f"{base}/{patient_id}.waterfall.json", to_json(waterfall)),
        ]
        if model.ensemble is not None:
            table = gain_importance(model.ensemble, names)
            files.append(self._write(f"{base}/importance.csv", importance_csv(table)))
            files.append(self._write(f"{base}/importance.json", to_json(table)))
        self._record("explain", files, started)
        return files

    # ---- LLM arm -------------------------------------------------------

    def guidelines(self) -> GuidelineSpec:
        path = self.config.llm.guidelines_path
        if not path:
            return GuidelineSpec()
        return GuidelineSpec.from_dict(json.loads(Path(path).read_text()))

    def llm_export_finetune(self) -> Path:
        self.require("featurize")
        started = self._now()
        train_p, _ = self.split_patients()
        path = self.out / "llm" / "finetune.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        n = export_finetune_dataset(window_patients(train_p), self.guidelines(), path)
        log.info("wrote %d fine-tuning records", n)
        self._record("llm", [path], started)
        return path

    def _endpoint(self):
        llm = self.config.llm
        if llm.mock_rulebook is not None:
            return mock_endpoint(llm.mock_rulebook, default_reply=llm.mock_default_reply)
        if llm.endpoint is None:
            raise StageError("llm evaluate needs llm.endpoint or llm.mock_rulebook in the config")
        return HttpChatEndpoint(llm.endpoint, audit_path=self.out / "llm" / "audit.jsonl")

    def llm_evaluate(self, endpoint=None) -> list[Path]:
        self.require("featurize")
        started = self._now()
        (self.out / "llm").mkdir(parents=True, exist_ok=True)
        _, runs = self.split_patients()
        guidelines = self.guidelines()
        endpoint = endpoint or self._endpoint()
        predictor = LLMPredictor(endpoint, self.config.llm.max_concurrency)
        inputs = []
        for run in runs:
            ws = window_patients(run)
            inputs.append(([build_prompt(serialize_patient(w.events, w.patient), guidelines) for w in ws], [w.label for w in ws]))
        per_run, agg = evaluate_runs(predictor, inputs)
        if isinstance(endpoint, HttpChatEndpoint):
            endpoint.close()
        ids = [p.id for run in runs for p in run]
        labels = [int(p.is_crc) for run in runs for p in run]
        lines = []
        for pid, y, pred in zip(ids, labels, predictor.history):
            parsed = pred.parsed
            lines.append(
                json.dumps(
                    {
                        "id": pid,
                        "label": y,
                        "predicted": pred.label,
                        "probability": None if parsed is None else parsed.probability,
                        "parsed": parsed is not None,
                    },
                    sort_keys=True,
                )
            )
        files = self._write_metrics("llm/", {LLM_ARM: agg}, {LLM_ARM: per_run}, self.stage_hash("llm"))
        files.append(self._write("llm/predictions.jsonl", "\n".join(lines) + "\n"))
        self._record("llm", files, started)
        return files

    # ---- report ----------------------------------------------------------

    def report(self) -> Path:
        self.require("evaluate")
        metrics = json.loads((self.out / "metrics.json").read_text())["models"]
        reports = {k.value: _report_from_dict(metrics[k.value]) for k in self.kinds}
        llm_path = self.out / "llm" / "metrics.json"
        if llm_path.exists():
            reports.update({n: _report_from_dict(d) for n, d in json.loads(llm_path.read_text())["models"].items()})
        lines = ["# Desk-scale results", "", "## Cross-validated F1 on the balanced training set", ""]
        lines += ["| Model | CV F1 | Threshold |", "|---|---|---|"]
        for kind in self.kinds:
            search = json.loads((self.out / "models" / f"{kind.value}.search.json").read_text())
            thr = ThresholdReport.from_dict(json.loads((self.out / "thresholds" / f"{kind.value}.json").read_text()))
            lines.append(f"| {kind.value} | {search['cv_f1']:.3f} | {thr.chosen_threshold:.4f} |")
        lines += ["", "## Test runs at 1% prevalence (mean ±95% CI half-width)", ""]
        rows = table_rows(reports)
        lines += ["| " + " | ".join(rows[0]) + " |", "|" + "---|" * len(rows[0])]
        lines += ["| " + " | ".join(r) + " |" for r in rows[1:]]
        return self._write("report.md", "\n".join(lines) + "\n")

    def run_all(self) -> None:
        self.generate()
        self.featurize()
        self.train()
        self.calibrate()
        self.evaluate()
        self.report()


def _report_from_dict(d: dict) -> AggregateReport:
    return AggregateReport({m: MetricSummary(**s) for m, s in d["metrics"].items()}, d["n_runs"])
