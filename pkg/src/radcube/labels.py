"""Ground-truth confidence cubes from target positions.

A confidence cube is a plain ``float`` array of shape (classes, R, A, E) with
values in [0, 1]; channel ``c`` belongs to ``DroneClass(c)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from radcube.errors import OutOfFieldOfView
from radcube.sim import DroneClass, RadarConfig

CONFIDENCE_FLOOR = 0.05
LABEL_SIGMA = {DroneClass.SMALL: 1.0, DroneClass.LARGE: 2.0}
NUM_CLASSES = len(DroneClass)


def support_radius(sigma: float, floor: float = CONFIDENCE_FLOOR) -> float:
    """Distance at which exp(-d^2 / 2 sigma^2) drops to ``floor``."""
    return math.sqrt(-2.0 * sigma**2 * math.log(floor))


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class PolarPosition:
    """Continuous (range, azimuth, elevation) bin coordinates of a target."""

    r: float
    a: float
    e: float
    cls: DroneClass = DroneClass.SMALL
    position: tuple[float, float, float] | None = None  # source Cartesian point, if known

    @property
    def bins(self) -> tuple[int, int, int]:
        return (round_half_up(self.r), round_half_up(self.a), round_half_up(self.e))


def to_polar_bins(position: Sequence[float], cfg: RadarConfig, cls=DroneClass.SMALL) -> PolarPosition:
    """Map a Cartesian point (boresight +y) onto the cube's bin grid.

    Azimuth and elevation bins are uniform in direction-cosine space,
    ``x / range`` and ``z / range`` respectively.
    """
    x, y, z = (float(c) for c in position)
    rng = math.sqrt(x * x + y * y + z * z)
    if y <= 0 or rng == 0:
        raise OutOfFieldOfView(f"{position} is not in front of the radar")
    n_r, n_a, n_e = cfg.label_dims
    pos = PolarPosition(
        r=rng / cfg.range_resolution_m,
        a=n_a / 2 + (x / rng) / cfg.sine_per_bin,
        e=n_e / 2 + (z / rng) / cfg.sine_per_bin,
        cls=DroneClass.parse(cls),
        position=(x, y, z),
    )
    for idx, n, name in zip(pos.bins, (n_r, n_a, n_e), "rae"):
        if not 0 <= idx < n:
            raise OutOfFieldOfView(f"{name} bin {idx} outside [0, {n})")
    return pos


def gaussian_mask(center: Sequence[int], sigma: float, dims: Sequence[int], floor: float = CONFIDENCE_FLOOR) -> np.ndarray:
    """exp(-d^2 / 2 sigma^2) around an integer bin, zeroed below ``floor``."""
    grids = np.ogrid[tuple(slice(0, n) for n in dims)]
    d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    mask = np.exp(-d2 / (2.0 * sigma**2))
    mask[mask < floor] = 0.0
    return mask


def make_ground_truth(
    targets: Iterable[PolarPosition],
    dims: Sequence[int],
    num_classes: int = NUM_CLASSES,
) -> np.ndarray:
    """Per-class confidence cube; overlapping same-class masks combine by max."""
    dims = tuple(int(d) for d in dims)
    out = np.zeros((num_classes,) + dims)
    for t in targets:
        np.maximum(out[t.cls], gaussian_mask(t.bins, LABEL_SIGMA[t.cls], dims), out=out[t.cls])
    return out


def threshold(cube: np.ndarray, floor: float = CONFIDENCE_FLOOR) -> np.ndarray:
    out = np.array(cube, dtype=float, copy=True)
    out[out < floor] = 0.0
    return out
