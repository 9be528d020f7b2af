"""``riskcert`` command line entry point.

Exit codes: 0 success, 1 invariant failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .harness import ConfigError, ExperimentConfig

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2

COMMANDS = {
    "bound": "bound",
    "train": "train",
    "rate-study": "rate_study",
    "manifold-compare": "manifold_compare",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskcert", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=None, help="worker processes")

    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run a {name} experiment from a JSON config")
        p.add_argument("config", type=Path)
        common(p)
    p = sub.add_parser("validate", help="run the invariant suites")
    p.add_argument("config", type=Path, nargs="?", default=None)
    p.add_argument("--suite", action="append", default=None,
                   help="suite to run (repeatable); default all")
    common(p)
    return parser


def _load(args, kind: str) -> ExperimentConfig:
    if args.config is None:
        cfg = ExperimentConfig(kind=kind)
    else:
        cfg = ExperimentConfig.load(args.config)
        if cfg.kind != kind:
            raise ConfigError(f"config kind is {cfg.kind!r}, expected {kind!r}")
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    if getattr(args, "suite", None):
        changes["suites"] = args.suite
    return replace(cfg, **changes) if changes else cfg


def _failed(results: dict) -> bool:
    kind = results.get("kind")
    if kind == "validate":
        return not results["all_passed"]
    if kind == "manifold_compare":
        return not all(results["checks"].values())
    if kind == "rate_study":
        return "training_failure" in results["flags"]
    return False


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    kind = "validate" if args.command == "validate" else COMMANDS[args.command]
    try:
        cfg = _load(args, kind)
        out = args.out or (Path(cfg.out_dir) if cfg.out_dir else None)
        if kind == "train":
            model = None
            if out is not None:
                out.mkdir(parents=True, exist_ok=True)
                model = out / "model.json"
            results = harness.run_train(cfg, model_path=model)
            if out is not None:
                harness.emit_report(results, out)
        else:
            results = harness.run(cfg, out)
    except ConfigError as exc:
        print(f"riskcert: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if out is None:
        sys.stdout.write(harness.dumps_summary(results))
    else:
        summary = {"kind": results["kind"], "out": str(out), "failed": _failed(results)}
        print(json.dumps(summary, sort_keys=True))
    return EXIT_INVARIANT if _failed(results) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
