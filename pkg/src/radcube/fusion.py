"""Multiplicative fusion of the horizontal (RAD) and vertical (RED) cubes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from radcube.dsp import RadarCube
from radcube.errors import DimMismatch


@dataclass(frozen=True)
class FusedCube:
    """4D cube with axes (doppler, range, azimuth, elevation)."""

    data: np.ndarray = field(repr=False)
    range_m_per_bin: float = 0.0
    doppler_mps_per_bin: float = 0.0
    sine_per_bin: float = 0.0
    scale: float = 1.0  # divisor applied by normalisation

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape


def fuse_arrays(h: np.ndarray, v: np.ndarray) -> np.ndarray:
    """out[d, r, a, e] = h[d, r, a] * v[d, r, e]."""
    h = np.asarray(h)
    v = np.asarray(v)
    if h.ndim != 3 or v.ndim != 3 or h.shape[:2] != v.shape[:2]:
        raise DimMismatch(f"doppler/range dims differ: {h.shape} vs {v.shape}")
    return h[:, :, :, None] * v[:, :, None, :]


def fuse(h: RadarCube, v: RadarCube, normalize: bool = True) -> FusedCube:
    """Fuse two magnitude cubes; optionally scale the result so its max is 1.

    An all-zero product is returned untouched when normalising.
    """
    data = fuse_arrays(h.data, v.data)
    scale = 1.0
    if normalize:
        peak = float(data.max(initial=0.0))
        if peak > 0:
            scale = peak
            data = data / peak
    return FusedCube(
        data=data,
        range_m_per_bin=h.range_m_per_bin,
        doppler_mps_per_bin=h.doppler_mps_per_bin,
        sine_per_bin=h.sine_per_bin,
        scale=scale,
    )
