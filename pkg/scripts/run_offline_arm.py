"""Run the offline experiment arms end to end with scripted backends.

    python3 scripts/run_offline_arm.py [--output runs/offline] [--jobs 4]

For each arm (raw sandbox, scrubbed sandbox) this runs plan -> refine -> eval,
then compares the two reports. Prints the comparison table and the run dirs.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import sys
from pathlib import Path

from planloop.cli import main as cli

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
ARMS = {"raw": FIXTURES / "config_offline.json", "scrubbed": FIXTURES / "config_offline_scrubbed.json"}


def call(*argv) -> dict:
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli([str(a) for a in argv])
    if code != 0:
        sys.exit(code)
    return json.loads(buf.getvalue().strip().splitlines()[-1])


def run_arm(config: Path, out: Path, jobs: int) -> Path:
    common = ["--config", config, "--output", out, "--jobs", jobs]
    plan = call("plan", *common)["run_dir"]
    refine = call("refine", *common, "--traces", plan)["run_dir"]
    return Path(call("eval", *common, "--traces", refine)["run_dir"])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--output", type=Path, default=Path("runs/offline"))
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    evals = {}
    for name, config in ARMS.items():
        evals[name] = run_arm(config, args.output / name, args.jobs)
        print(f"{name}: {evals[name]}")
    res = call("report", "--output", args.output, *evals.values())
    print((Path(res["run_dir"]) / "comparison.txt").read_text(encoding="utf-8"))


if __name__ == "__main__":
    main()
