"""Synthetic end-to-end run through the command-line tools.

simulate -> train -> infer (model and baseline) -> eval, all in one work
directory. Used by ``scripts/run_end_to_end.py`` and the acceptance suite.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

from radcube import cli


@dataclass
class EndToEndResult:
    workdir: Path
    model: dict  # report.json of the trained model
    baseline: dict  # report.json of the baseline
    train_seconds: float
    simulate_seconds: float

    def ap(self, cls: str, ole: int = 3) -> float:
        return self.model["ap"][cls][str(ole)]

    def ar(self, cls: str, ole: int = 3) -> float:
        return self.model["ar"][cls][str(ole)]

    def band_error(self, band: str, which: str = "model", cls: str = "all") -> float | None:
        report = self.model if which == "model" else self.baseline
        return report["localization_m"][cls]["bands"].get(band)

    def mean_error(self, which: str = "model") -> float | None:
        report = self.model if which == "model" else self.baseline
        return report["localization_m"]["all"]["overall"]


def _call(*argv) -> None:
    code = cli.main([str(a) for a in argv])
    if code != 0:
        raise RuntimeError(f"radcube {argv[0]} exited with code {code}")


def run(config, scenario, workdir, seed: int | None = None, jobs: int = 1) -> EndToEndResult:
    """Run the full chain; the held-out split is the scenario's ``test`` split."""
    work = Path(workdir)
    work.mkdir(parents=True, exist_ok=True)
    common = ["--config", config, "--jobs", jobs] + (["--seed", seed] if seed is not None else [])
    manifest = work / "data" / "manifest.json"

    t0 = time.perf_counter()
    _call("simulate", *common, "--scenario", scenario, "--out", work / "data")
    t1 = time.perf_counter()
    _call("train", *common, "--manifest", manifest, "--out", work / "model.cdnw")
    t2 = time.perf_counter()
    _call("infer", *common, "--manifest", manifest, "--weights", work / "model.cdnw", "--out", work / "model.csv")
    _call("infer", *common, "--manifest", manifest, "--method", "baseline", "--out", work / "baseline.csv")
    _call(
        "eval", *common, "--manifest", manifest,
        "--detections", work / "model.csv", work / "baseline.csv",
        "--names", "model", "baseline", "--out", work / "eval",
    )
    timing = {"simulate_seconds": t1 - t0, "train_seconds": t2 - t1}
    (work / "timing.json").write_text(json.dumps(timing, indent=1) + "\n")
    return load(work)


def load(workdir) -> EndToEndResult:
    """Read back the reports of a finished :func:`run`."""
    work = Path(workdir)
    timing = json.loads((work / "timing.json").read_text())
    return EndToEndResult(
        workdir=work,
        model=json.loads((work / "eval" / "model.report.json").read_text()),
        baseline=json.loads((work / "eval" / "baseline.report.json").read_text()),
        train_seconds=timing["train_seconds"],
        simulate_seconds=timing["simulate_seconds"],
    )
