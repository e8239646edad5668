"""Run every bundled certification config and summarize the verdicts.

Each JSON file under configs/ freezes one certification target: a rate
slope, an envelope ratio spread, or a trend check, with its sample
sizes, bandwidth grids, replication counts, and seeds pinned.  This
script runs them all (or a named subset), prints each target's full
report, and ends with a one-line-per-target summary table.

The exit code is the number of failing targets.  One failure is
expected and documented: the sup-norm fitting-error rate never reaches
its claimed slope band because the statistic is dominated by design
fluctuation rather than smoothing bias (see README, "Known honest
failure").  The table marks that target so a run with exit code 1 and
only that line failing is the healthy state.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from resdens.experiments import ExperimentConfig, run_target

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
EXPECTED_FAILURES = {"bias_sup_rate"}


def run_one(path: Path, workers: int | None) -> tuple[object, float]:
    raw = json.loads(path.read_text(encoding="utf-8"))
    if workers is not None:
        raw["workers"] = workers
    cfg = ExperimentConfig.from_dict(raw)
    start = time.perf_counter()
    result = run_target(cfg)
    return result, time.perf_counter() - start


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--configs", type=Path, default=CONFIG_DIR, help="directory of target configs"
    )
    parser.add_argument(
        "--only",
        nargs="*",
        metavar="STEM",
        help="config file stems to run (default: every *.json in the directory)",
    )
    parser.add_argument(
        "--workers", type=int, default=None, help="override the workers setting of every config"
    )
    parser.add_argument(
        "--out", type=Path, default=None, help="write all results to one JSON file"
    )
    args = parser.parse_args(argv)

    paths = sorted(args.configs.glob("*.json"))
    if args.only:
        wanted = set(args.only)
        paths = [p for p in paths if p.stem in wanted]
        missing = wanted - {p.stem for p in paths}
        if missing:
            parser.error(f"no config named: {', '.join(sorted(missing))}")
    if not paths:
        parser.error(f"no configs found under {args.configs}")

    rows = []
    collected = {}
    for path in paths:
        print(f"=== {path.stem} " + "=" * max(1, 60 - len(path.stem)))
        result, elapsed = run_one(path, args.workers)
        print(result.render())
        print(f"elapsed: {elapsed:.1f}s")
        print()
        rows.append((path.stem, result.passed, elapsed))
        collected[path.stem] = result.to_dict()

    print("=== summary " + "=" * 53)
    failures = 0
    for stem, passed, elapsed in rows:
        verdict = "PASS" if passed else "FAIL"
        note = ""
        if not passed:
            failures += 1
            if stem in EXPECTED_FAILURES:
                note = "  (expected failure, documented in README)"
        print(f"{stem:<32} {verdict}  {elapsed:7.1f}s{note}")
    print(f"{failures} of {len(rows)} targets failing")

    if args.out is not None:
        args.out.write_text(json.dumps(collected, indent=2), encoding="utf-8")
        print(f"wrote {args.out}")
    return failures


if __name__ == "__main__":
    raise SystemExit(main())
