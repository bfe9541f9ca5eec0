#!/usr/bin/env python3
"""Simulate, train, infer and evaluate in one work directory, then print a summary."""

import argparse
import json
import sys
from pathlib import Path

from radcube.experiment import run

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default=ROOT / "configs" / "desk_e2e.yaml")
    p.add_argument("--scenario", default=ROOT / "configs" / "scenario_e2e.yaml")
    p.add_argument("--work", default="runs/e2e")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args()

    res = run(args.config, args.scenario, args.work, seed=args.seed, jobs=args.jobs)
    summary = {
        "simulate_s": round(res.simulate_seconds, 1),
        "train_s": round(res.train_seconds, 1),
        "ap_ole3": {c: res.ap(c) for c in ("small", "large")},
        "ar_ole3": {c: res.ar(c) for c in ("small", "large")},
        "model_error_0_3m": res.band_error("0-3m"),
        "model_error_mean": res.mean_error("model"),
        "baseline_error_mean": res.mean_error("baseline"),
    }
    print(json.dumps(summary, indent=1))
    (Path(args.work) / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
