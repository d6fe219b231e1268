"""Run the full desk-scale pipeline (ML arm, mock LLM arm, explanations) and print the report.

    python3 scripts/run_desk.py [--config configs/desk.json] [--out runs/desk]
"""

import argparse
import logging
import time
from pathlib import Path

from eocrc.config import apply_overrides, load_config
from eocrc.models import ModelKind
from eocrc.pipeline import Pipeline

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "desk.json"))
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")

    config = load_config(args.config)
    if args.out:
        config = apply_overrides(config, [f"output_dir={args.out}"])
    pipe = Pipeline(config)
    t0 = time.perf_counter()
    pipe.generate()
    pipe.featurize()
    pipe.train()
    pipe.calibrate()
    pipe.evaluate()
    for kind in pipe.kinds:
        if kind.is_tree:
            pipe.explain(kind)
    if config.llm.mock_rulebook is not None or config.llm.endpoint is not None:
        pipe.llm_export_finetune()
        pipe.llm_evaluate()
    report = pipe.report()
    print(report.read_text())
    print(f"finished in {time.perf_counter() - t0:.1f}s; outputs under {pipe.out}")


if __name__ == "__main__":
    main()
