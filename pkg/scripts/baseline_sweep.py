#!/usr/bin/env python3
"""Baseline localisation error against SNR and the relative magnitude floor.

Each frame holds one random drone. Prints a table of mean Euclidean error (m)
and the fraction of frames where the baseline found no cluster.
"""

import argparse
import dataclasses

import numpy as np

from radcube.baseline import BaselineParams, localize
from radcube.errors import NoCluster
from radcube.metrics import localization_errors
from radcube.pipeline import process_scene
from radcube.scenarios import RandomSceneConfig, random_scenes
from radcube.sim import RadarConfig, noise_power_for_snr


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--snr", type=float, nargs="+", default=[10.0, 20.0, 30.0])
    p.add_argument("--rel-floor", type=float, nargs="+", default=[0.0, 0.1, 0.3, 0.5])
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    cfg = RadarConfig().desk()
    rc = RandomSceneConfig(mix=(0.0, 0.5, 0.5, 0.0))
    print(f"{'snr_db':>7} {'rel_floor':>9} {'mean_err_m':>10} {'missed':>7}")
    for snr in args.snr:
        scenes = random_scenes(args.frames, cfg, rc, seed=args.seed)
        frames = [process_scene(dataclasses.replace(s, noise_power=noise_power_for_snr(snr)), cfg) for s in scenes]
        for floor in args.rel_floor:
            params = BaselineParams(rel_floor=floor)
            pairs, missed = [], 0
            for fr in frames:
                try:
                    pairs.append((localize(fr.h, fr.v, cfg, params), fr.targets[0]))
                except NoCluster:
                    missed += 1
            errs = [e for _, e in localization_errors(pairs, cfg)]
            mean = np.mean(errs) if errs else float("nan")
            print(f"{snr:7.1f} {floor:9.2f} {mean:10.3f} {missed / len(frames):7.2f}")


if __name__ == "__main__":
    main()
