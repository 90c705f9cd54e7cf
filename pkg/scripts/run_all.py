"""Run every shipped config and print one verdict line per suite.

    python scripts/run_all.py [--out runs] [--skip schauder_heat ...]

Configs whose name starts with ``bad_`` are expected to be rejected with
exit status 2, and are reported as such.
"""
import argparse
import sys
import time
from pathlib import Path

from ouregularity import cli

HERE = Path(__file__).resolve().parent


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs", help="parent directory for run folders")
    ap.add_argument("--skip", nargs="*", default=[], help="config stems to leave out")
    args = ap.parse_args(argv)

    worst = 0
    for cfg in sorted((HERE / "configs").glob("*.json")):
        if cfg.stem in args.skip:
            continue
        expect = cli.EXIT_CONFIG if cfg.stem.startswith("bad_") else cli.EXIT_OK
        start = time.perf_counter()
        code = cli.main(["run", "--config", str(cfg), "--out", str(Path(args.out) / cfg.stem)])
        took = time.perf_counter() - start
        ok = code == expect
        worst = max(worst, 0 if ok else 1)
        print(f"{'ok ' if ok else 'BAD'} {cfg.stem}: exit {code} (expected {expect}) {took:.1f}s",
              flush=True)
    return worst


if __name__ == "__main__":
    sys.exit(main())
