"""Command-line entry point: ``eocrc <verb> --config desk.json``.

Exit status is 0 when every requested stage succeeds, 2 for configuration
errors, 3 for missing or stale prerequisites, and 1 otherwise.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .config import PipelineConfig, apply_overrides, load_config
from .errors import ConfigError, StageError, TransportError
from .models import ModelKind
from .pipeline import Pipeline

log = logging.getLogger("eocrc")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", "-c", help="pipeline config (JSON); defaults apply when omitted")
    p.add_argument("--out", help="override output_dir")
    p.add_argument("--seed", type=int, help="override the global seed")
    p.add_argument("--models", help="override models.kinds (comma-separated)")
    p.add_argument("--n-iters", type=int, help="override models.n_iters")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any field by dotted path")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="eocrc", description="Early-onset CRC risk prediction pipeline")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, text in [
        ("generate", "write the cohort file"),
        ("featurize", "split the cohort and build feature matrices"),
        ("train", "random search and fit each configured model"),
        ("calibrate", "choose Youden thresholds by cross-validation"),
        ("evaluate", "score every model on the test runs"),
        ("report", "assemble report.md from stage outputs"),
        ("run", "generate through report in one go"),
    ]:
        sub.add_parser(verb, parents=[common], help=text)
    ex = sub.add_parser("explain", parents=[common], help="gain importance and SHAP waterfall for one patient")
    ex.add_argument("--model", required=True, help="model kind, e.g. XGBoostPreset")
    ex.add_argument("--patient", help="patient id (default: first CRC patient of test run 0)")
    llm = sub.add_parser("llm", parents=[common], help="LLM arm")
    llm.add_argument("action", choices=["export-finetune", "evaluate"])
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig().validate()
    overrides = list(args.set)
    if args.out:
        overrides.append(f"output_dir={args.out}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.models:
        kinds = [k.strip() for k in args.models.split(",") if k.strip()]
        overrides.append("models.kinds=" + ",".join(f'"{k}"' for k in kinds).join("[]"))
    if args.n_iters is not None:
        overrides.append(f"models.n_iters={args.n_iters}")
    return apply_overrides(config, overrides) if overrides else config


def dispatch(pipe: Pipeline, args: argparse.Namespace) -> None:
    verb = args.verb
    if verb == "run":
        pipe.run_all()
    elif verb == "explain":
        try:
            kind = ModelKind(args.model)
        except ValueError:
            raise ConfigError(f"unknown model kind {args.model!r}", "--model") from None
        pipe.explain(kind, args.patient)
    elif verb == "llm":
        if args.action == "export-finetune":
            pipe.llm_export_finetune()
        else:
            pipe.llm_evaluate()
    else:
        getattr(pipe, verb)()


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        config = resolve_config(args)
        dispatch(Pipeline(config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return 3
    except (TransportError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
