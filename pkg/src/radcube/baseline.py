"""Point-cloud localisation baseline: CA-CFAR along range, then DBSCAN per radar.

The horizontal cloud gives (range, azimuth), the vertical one (range,
elevation); the two largest clusters are merged into a single 3D estimate.
No classification is attempted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.cluster import DBSCAN

from radcube.dsp import RadarCube
from radcube.errors import NoCluster, WindowTooLarge
from radcube.labels import round_half_up
from radcube.metrics import polar_bins_to_cartesian
from radcube.postproc import Detection
from radcube.sim import RadarConfig, RadarId


@dataclass(frozen=True)
class BaselineParams:
    guard: int = 2
    train: int = 8
    scale: float = 4.0
    eps: float = 2.0
    min_pts: int = 3
    doppler_gate: int | None = None  # drop points within this many bins of zero Doppler
    rel_floor: float = 0.3  # drop points weaker than this fraction of the cube maximum


@dataclass(frozen=True)
class RadarPoint:
    bins: tuple[int, int, int]  # (doppler, range, angle)
    magnitude: float
    radar_id: RadarId


def cfar_threshold(cube: np.ndarray, guard: int, train: int, scale: float) -> np.ndarray:
    """scale x mean of the training cells along axis 1 (range) for every cell.

    Training cells are the ``train`` cells beyond ``guard`` on each side; near
    the edges only the cells that exist are averaged.
    """
    n = cube.shape[1]
    if guard < 0 or train < 1:
        raise WindowTooLarge("guard must be >= 0 and train >= 1")
    if 2 * (guard + train) + 1 > n:
        raise WindowTooLarge(f"window of {2 * (guard + train) + 1} cells exceeds {n} range bins")
    x = np.asarray(cube, dtype=float)
    total = np.zeros_like(x)
    count = np.zeros(n)
    # Sequential sums in ascending cell index, so ties at the threshold resolve
    # the same way as a direct per-cell loop.
    offsets = list(range(-guard - train, -guard)) + list(range(guard + 1, guard + 1 + train))
    for off in offsets:
        src = np.arange(n) + off
        ok = (src >= 0) & (src < n)
        total[:, ok, :] += x[:, src[ok], :]
        count += ok
    mean = total / count[None, :, None]
    return scale * mean


def cfar_detect(cube: RadarCube, guard: int = 2, train: int = 8, scale: float = 4.0) -> list[RadarPoint]:
    """Cell-averaging CFAR along range for every (Doppler, angle) line."""
    data = np.asarray(cube.data, dtype=float)
    hits = data > cfar_threshold(data, guard, train, scale)
    return [
        RadarPoint(bins=(int(d), int(r), int(a)), magnitude=float(data[d, r, a]), radar_id=cube.radar_id)
        for d, r, a in zip(*np.nonzero(hits))
    ]


@dataclass
class Cluster:
    members: list[RadarPoint] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def total_magnitude(self) -> float:
        return float(sum(p.magnitude for p in self.members))

    @property
    def centroid(self) -> tuple[float, float]:
        """Magnitude-weighted mean (range, angle) in bins."""
        w = np.array([p.magnitude for p in self.members])
        ra = np.array([(p.bins[1], p.bins[2]) for p in self.members], dtype=float)
        if w.sum() <= 0:
            return tuple(ra.mean(axis=0))
        return tuple((w[:, None] * ra).sum(axis=0) / w.sum())


def _canonical(points: Sequence[RadarPoint]) -> list[RadarPoint]:
    return sorted(points, key=lambda p: (p.bins[1], p.bins[2], p.bins[0], -p.magnitude))


def cluster_points(points: Sequence[RadarPoint], eps: float = 2.0, min_pts: int = 3) -> list[Cluster]:
    """Density clusters in (range, angle) bin space, strongest first.

    Clusters are ranked by total magnitude, then by point count. Ranking by
    count alone lets a wide cloud of weak leakage cells win over the target.

    Points are put in a canonical order first, so the result does not depend
    on input order. Raises :class:`NoCluster` when nothing reaches ``min_pts``.
    """
    pts = _canonical(points)
    coords = np.array([(p.bins[1], p.bins[2]) for p in pts], dtype=float).reshape(-1, 2)
    labels = DBSCAN(eps=eps, min_samples=min_pts).fit_predict(coords) if len(pts) else np.zeros(0, int)
    clusters = [Cluster([p for p, lab in zip(pts, labels) if lab == c]) for c in range(labels.max(initial=-1) + 1)]
    if not clusters:
        raise NoCluster(f"no cluster with >= {min_pts} points among {len(pts)}")
    order = sorted(range(len(clusters)), key=lambda i: (-clusters[i].total_magnitude, -clusters[i].size, i))
    return [clusters[i] for i in order]


def gate_magnitude(points: Sequence[RadarPoint], peak: float, rel_floor: float) -> list[RadarPoint]:
    if rel_floor <= 0:
        return list(points)
    return [p for p in points if p.magnitude >= rel_floor * peak]


def gate_doppler(points: Sequence[RadarPoint], zero_bin: int, gate: int | None) -> list[RadarPoint]:
    if gate is None:
        return list(points)
    return [p for p in points if abs(p.bins[0] - zero_bin) > gate]


def localize(h: RadarCube, v: RadarCube, cfg: RadarConfig, params: BaselineParams = BaselineParams()) -> Detection:
    """Single class-agnostic 3D estimate from the strongest cluster of each radar."""
    estimates = []
    for cube in (h, v):
        pts = cfar_detect(cube, params.guard, params.train, params.scale)
        pts = gate_doppler(pts, cube.zero_doppler_bin, params.doppler_gate)
        pts = gate_magnitude(pts, float(np.max(cube.data)), params.rel_floor)
        estimates.append(cluster_points(pts, params.eps, params.min_pts)[0].centroid)
    (r_h, a), (r_v, e) = estimates
    # A compressed range bin k pools native bins ck .. ck+c-1, whose mean sits
    # (c - 1) / 2c of a bin above k on the label grid.
    offset = (cfg.compression - 1) / (2 * cfg.compression)
    centre = ((r_h + r_v) / 2 + offset, a, e)
    # Bins are rounded for matching; the position keeps the sub-bin centroid.
    cart = tuple(float(c) for c in polar_bins_to_cartesian(centre, cfg))
    return Detection(cls=None, bins=tuple(round_half_up(b) for b in centre), confidence=1.0, cartesian=cart)
