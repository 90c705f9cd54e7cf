"""Command line: ``ouregularity run | list-builtins | validate-config``.

Exit status: 0 all hard checks passed, 1 a hard check failed, 2 the config
was rejected (nothing is written in that case).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import SUITES, ConfigError, load_config
from .fields import FIELD_BUILDERS, SOURCE_BUILDERS
from .models import BUILTIN_MODELS
from .runner import SetupError, execute, prepare, write_artifacts

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.seed = args.seed
    if getattr(args, "workers", None) is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg.workers = args.workers
    if getattr(args, "out", None) is not None:
        cfg.out = args.out
    return cfg


def cmd_validate(args) -> int:
    try:
        cfg = _load(args)
        prepare(cfg)
    except (ConfigError, SetupError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = _load(args)
        objs = prepare(cfg)
    except (ConfigError, SetupError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = execute(cfg, objs)
    out = Path(cfg.out)
    write_artifacts(cfg, result, out)
    verdict = "PASS" if result.passed else "FAIL"
    print(f"{cfg.suite} [{result.theorem}] {verdict} -> {out}")
    if not result.passed:
        print("failed invariants: " + ", ".join(result.failures), file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_list(args) -> int:
    print("models:")
    for name in sorted(BUILTIN_MODELS):
        print(f"  {name}")
    print("fields:")
    for name in sorted(FIELD_BUILDERS):
        print(f"  {name}")
    print("sources:")
    for name in sorted(SOURCE_BUILDERS):
        print(f"  {name}")
    print("suites:")
    for name in SUITES:
        print(f"  {name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ouregularity",
                                 description="Regularity experiments for OU transition families")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the suite named in a config")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", type=str)
    run.set_defaults(fn=cmd_run)
    val = sub.add_parser("validate-config", help="check a config and print it with defaults")
    val.add_argument("--config", required=True, type=Path)
    val.add_argument("--seed", type=int)
    val.add_argument("--workers", type=int)
    val.add_argument("--out", type=str)
    val.set_defaults(fn=cmd_validate)
    lst = sub.add_parser("list-builtins", help="print the model, field and source registries")
    lst.set_defaults(fn=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
