"""Peak extraction from predicted confidence cubes.

Two stages per class:

1. Location NMS: take candidates above ``CANDIDATE_FLOOR`` in descending
   confidence (ties by lexicographic (r, a, e)), keep the best, drop every
   candidate inside the 0.05-support of a wider Gaussian around it, repeat.
2. Outlier rejection: compare the binarised 7x7x7 neighbourhood of each peak
   with the label Gaussian that a real target at that bin would produce.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from radcube.errors import ShapeMismatch
from radcube.labels import CONFIDENCE_FLOOR, LABEL_SIGMA, gaussian_mask, support_radius
from radcube.metrics import polar_bins_to_cartesian
from radcube.sim import DroneClass, RadarConfig

CANDIDATE_FLOOR = 0.01
SUPPRESS_SIGMA = {DroneClass.SMALL: 3.0, DroneClass.LARGE: 5.0}
CROP_SIZE = 7
MIN_OVERLAP = 0.5


@dataclass(frozen=True)
class Detection:
    cls: DroneClass | None  # None for class-agnostic estimates
    bins: tuple[int, int, int]
    confidence: float
    cartesian: tuple[float, float, float] | None = None


def suppression_radius(cls: DroneClass) -> float:
    return support_radius(SUPPRESS_SIGMA[DroneClass.parse(cls)])


def lnms(pred: np.ndarray, cls, cfg: RadarConfig | None = None, floor: float = CANDIDATE_FLOOR) -> list[Detection]:
    """Greedy location NMS on one class cube (R, A, E)."""
    cls = DroneClass.parse(cls)
    pred = np.asarray(pred, dtype=float)
    if pred.ndim != 3:
        raise ShapeMismatch(f"class cube must be 3D, got {pred.shape}")
    flat = np.flatnonzero(pred.ravel() > floor)
    if flat.size == 0:
        return []
    values = pred.ravel()[flat]
    # C-order flat index already encodes the lexicographic (r, a, e) tie-break.
    order = np.lexsort((flat, -values))
    flat, values = flat[order], values[order]
    coords = np.stack(np.unravel_index(flat, pred.shape), axis=1)
    rad2 = suppression_radius(cls) ** 2
    alive = np.ones(len(flat), dtype=bool)
    out = []
    for i in range(len(flat)):
        if not alive[i]:
            continue
        d2 = np.sum((coords - coords[i]) ** 2, axis=1)
        alive &= d2 > rad2
        bins = tuple(int(c) for c in coords[i])
        cart = tuple(float(c) for c in polar_bins_to_cartesian(bins, cfg)) if cfg is not None else None
        out.append(Detection(cls=cls, bins=bins, confidence=float(values[i]), cartesian=cart))
    return out


def calculate_overlap_ratio(o: np.ndarray, o_hat: np.ndarray, tau: float = CONFIDENCE_FLOOR) -> float:
    """Intersection over union of the two arrays binarised at ``> tau``."""
    o = np.asarray(o)
    o_hat = np.asarray(o_hat)
    if o.shape != o_hat.shape:
        raise ShapeMismatch(f"{o.shape} != {o_hat.shape}")
    bo = o > tau
    bh = o_hat > tau
    overlap = int(np.count_nonzero(bo & bh))
    total = int(np.count_nonzero(bo)) + int(np.count_nonzero(bh)) - overlap
    return overlap / total if total > 0 else 0.0


def crop(cube: np.ndarray, center: Sequence[int], size: int = CROP_SIZE) -> np.ndarray:
    """Cube of side ``size`` centred on ``center``; out-of-bounds cells are zero."""
    half = size // 2
    padded = np.pad(np.asarray(cube), half)
    sl = tuple(slice(c, c + size) for c in center)
    return padded[sl]


def filter_outliers(pred: np.ndarray, detections: Sequence[Detection], min_overlap: float = MIN_OVERLAP) -> list[Detection]:
    """Keep detections whose neighbourhood looks like a label Gaussian."""
    kept = []
    for det in detections:
        expected = gaussian_mask(det.bins, LABEL_SIGMA[det.cls], pred.shape)
        ratio = calculate_overlap_ratio(crop(expected, det.bins), crop(pred, det.bins))
        if ratio >= min_overlap:
            kept.append(det)
    return kept


def detect(
    pred_cube: np.ndarray,
    cfg: RadarConfig | None = None,
    min_overlap: float = MIN_OVERLAP,
    floor: float = CANDIDATE_FLOOR,
) -> list[Detection]:
    """Run both stages on every class channel of a (C, R, A, E) cube."""
    out = []
    for c in range(pred_cube.shape[0]):
        cls = DroneClass(c)
        out.extend(filter_outliers(pred_cube[c], lnms(pred_cube[c], cls, cfg, floor), min_overlap))
    return out
