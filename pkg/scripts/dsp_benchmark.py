#!/usr/bin/env python3
"""Time the FFT cube extraction and the vectorised fusion against their loop oracles."""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from oracles import brute_fuse, naive_spectrum  # noqa: E402

from radcube.dsp import spectrum  # noqa: E402
from radcube.fusion import fuse_arrays  # noqa: E402
from radcube.sim import RadarConfig  # noqa: E402


def timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    rng = np.random.default_rng(args.seed)

    print(f"{'chirps x samples x ant':>24} {'fft_s':>9} {'naive_s':>9} {'rel_err':>9}")
    for chirps, samples in [(15, 32), (31, 64), (63, 128), (127, 256)]:
        cfg = RadarConfig(num_chirps=chirps, num_samples=samples, max_range_m=samples * 0.058)
        x = rng.standard_normal((chirps, samples, 8)) + 1j * rng.standard_normal((chirps, samples, 8))
        fast, tf = timed(spectrum, x, cfg)
        slow, ts = timed(naive_spectrum, x, cfg.doppler_fft_size, cfg.angle_bins, cfg.window)
        err = np.linalg.norm(fast - slow) / np.linalg.norm(slow)
        print(f"{f'{chirps} x {samples} x 8':>24} {tf:9.4f} {ts:9.4f} {err:9.1e}")

    print(f"\n{'fused dims':>24} {'vector_s':>9} {'loop_s':>9} {'identical':>9}")
    for d, r, a in [(8, 16, 8), (16, 32, 16), (16, 64, 32)]:
        h, v = rng.random((d, r, a)), rng.random((d, r, a))
        fast, tf = timed(fuse_arrays, h, v)
        slow, ts = timed(brute_fuse, h, v)
        print(f"{f'{d} x {r} x {a} x {a}':>24} {tf:9.4f} {ts:9.4f} {str(np.array_equal(fast, slow)):>9}")


if __name__ == "__main__":
    main()
