import json
import shutil

import pytest

from eocrc.cli import main
from eocrc.config import (
    PipelineConfig,
    apply_overrides,
    config_from_dict,
    load_config,
    stage_seed,
)
from eocrc.errors import ConfigError

SMALL = {
    "seed": 5,
    "cohort": {"n_patients": 2000, "prevalence": 0.1, "signal_strength": 2.0},
    "split": {"train_pos": 60, "train_neg": 60, "n_test_runs": 3, "test_pos_per_run": 4, "test_neg_per_run": 96},
    "models": {"kinds": ["LR", "DT"], "n_iters": 1, "k_folds": 3},
    "calibration": {"k": 3, "target_prevalence": 0.05, "pool_limit": 300},
    "explain": {"background_size": 8, "n_samples": 64, "top_k": 5},
    "llm": {"mock_rulebook": {"Rectal hemorrhage": "Answer: Yes\nProbability score: 75%"}, "max_concurrency": 4},
}


def write_config(tmp_path, data=SMALL, out="run"):
    cfg = dict(data, output_dir=str(tmp_path / out))
    path = tmp_path / f"{out}.json"
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = write_config(tmp)
    assert main(["run", "-c", cfg]) == 0
    return tmp, cfg


# ---- config -------------------------------------------------------------------


def test_defaults_validate():
    c = PipelineConfig().validate()
    assert c.cohort.n_patients == 20_000 and c.split.test_neg_per_run == 495


def test_shipped_desk_config_loads():
    c = load_config("configs/desk.json")
    assert len(c.models.kinds) == 10 and c.calibration.target_prevalence == 0.01


@pytest.mark.parametrize(
    "data, field",
    [
        ({"models": {"kinds": ["LR", "GPT"]}}, "models.kinds[1]"),
        ({"cohort": {"n_patinets": 10}}, "cohort.n_patinets"),
        ({"bogus": 1}, "bogus"),
        ({"split": {"train_pos": 0}}, "split.train_pos"),
        ({"calibration": {"target_prevalence": 1.5}}, "calibration.target_prevalence"),
        ({"models": {"n_iters": "four"}}, "models.n_iters"),
        ({"llm": {"endpoint": {"max_concurrency": 0}}}, "llm.endpoint.max_concurrency"),
        ({"llm": {"endpoint": {"api_key": "x"}}}, "llm.endpoint.api_key"),
    ],
)
def test_config_errors_name_field(data, field):
    with pytest.raises(ConfigError) as info:
        config_from_dict(data)
    assert info.value.field == field


def test_overrides():
    c = apply_overrides(PipelineConfig(), ["seed=9", "models.kinds=[\"DT\"]", "cohort.prevalence=0.02"])
    assert c.seed == 9 and c.models.kinds == ("DT",) and c.cohort.prevalence == 0.02
    with pytest.raises(ConfigError):
        apply_overrides(PipelineConfig(), ["seed"])


def test_stage_seeds_are_distinct_and_stable():
    seeds = {stage_seed(0, s) for s in ("generate", "split", "train:LR", "calibrate:LR")}
    assert len(seeds) == 4
    assert stage_seed(0, "generate") == stage_seed(0, "generate") != stage_seed(1, "generate")
    assert all(0 <= s < 2**63 for s in seeds)


def test_section_hash_tracks_sections():
    a, b = PipelineConfig(), apply_overrides(PipelineConfig(), ["calibration.k=5"])
    assert a.section_hash("cohort") == b.section_hash("cohort")
    assert a.section_hash("calibration") != b.section_hash("calibration")


def test_secret_never_in_config_dump(monkeypatch):
    monkeypatch.setenv("EOCRC_LLM_API_KEY", "sk-should-not-appear")
    c = config_from_dict({"llm": {"endpoint": {"model": "ft:x"}}})
    assert "sk-should-not-appear" not in json.dumps(c.to_dict())


# ---- CLI exit codes --------------------------------------------------------------


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["generate", "-c", write_config(tmp_path), "--models", "LR,Nope"]) == 2
    assert "models.kinds[1]" in capsys.readouterr().err


def test_missing_stage_exit_code(tmp_path, capsys):
    assert main(["train", "-c", write_config(tmp_path)]) == 3
    assert "'generate'" in capsys.readouterr().err


def test_stale_inputs_detected(small_run, tmp_path, capsys):
    tmp, _ = small_run
    copy = tmp_path / "copy"
    shutil.copytree(tmp / "run", copy)
    cfg = write_config(tmp_path, dict(SMALL, seed=6), out="copy")
    assert main(["evaluate", "-c", cfg]) == 3
    assert "stale" in capsys.readouterr().err


def test_changed_calibration_only_invalidates_downstream(small_run, tmp_path, capsys):
    tmp, _ = small_run
    shutil.copytree(tmp / "run", tmp_path / "copy")
    data = dict(SMALL, calibration=dict(SMALL["calibration"], k=4))
    cfg = write_config(tmp_path, data, out="copy")
    assert main(["evaluate", "-c", cfg]) == 3
    assert "'calibrate'" in capsys.readouterr().err
    assert main(["calibrate", "-c", cfg]) == 0
    assert main(["evaluate", "-c", cfg]) == 0


# ---- end to end ------------------------------------------------------------------


def test_run_outputs(small_run):
    tmp, _ = small_run
    out = tmp / "run"
    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics["models"]) == {"LR", "DT"}
    assert all(len(m["runs"]) == 3 for m in metrics["models"].values())
    assert (out / "metrics.csv").read_text().splitlines()[0].startswith("model,")
    report = (out / "report.md").read_text()
    assert report.index("| LR |") < report.index("| DT |")
    assert (out / "provenance.json").exists()
    assert "timestamp" not in (out / "metrics.json").read_text()


def test_rerun_is_byte_identical(small_run, tmp_path):
    tmp, _ = small_run
    cfg = write_config(tmp_path, out="again")
    assert main(["run", "-c", cfg]) == 0
    assert (tmp_path / "again" / "metrics.json").read_bytes() == (tmp / "run" / "metrics.json").read_bytes()


def test_explain_verb(small_run):
    tmp, cfg = small_run
    assert main(["explain", "-c", cfg, "--model", "DT"]) == 0
    files = {p.name for p in (tmp / "run" / "explain" / "DT").iterdir()}
    assert any(f.endswith(".waterfall.csv") for f in files) and "importance.csv" in files
    assert main(["explain", "-c", cfg, "--model", "Nope"]) == 2
    assert main(["explain", "-c", cfg, "--model", "LR", "--patient", "no-such-id"]) != 0


def test_llm_verbs(small_run):
    tmp, cfg = small_run
    out = tmp / "run" / "llm"
    assert main(["llm", "export-finetune", "-c", cfg]) == 0
    assert len((out / "finetune.jsonl").read_text().splitlines()) == 120
    assert main(["llm", "evaluate", "-c", cfg]) == 0
    doc = json.loads((out / "metrics.json").read_text())
    assert list(doc["models"]) == ["LLM"]
    preds = [json.loads(l) for l in (out / "predictions.jsonl").read_text().splitlines()]
    assert len(preds) == 300 and all(p["parsed"] for p in preds)
    assert main(["report", "-c", cfg]) == 0
    assert "| LLM |" in (tmp / "run" / "report.md").read_text()
