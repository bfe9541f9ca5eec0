"""Range / Doppler / angle FFT chain producing per-radar magnitude cubes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from radcube.errors import ShapeMismatch
from radcube.sim import RadarConfig, RadarId, RawFrame


@dataclass(frozen=True)
class RadarCube:
    """Magnitude cube of one radar, axes (doppler, range, angle).

    The angle axis is azimuth for the horizontal radar and elevation for the
    vertical one. Doppler and angle axes are centred: bin ``D // 2`` is zero
    velocity and bin ``A // 2`` is boresight.
    """

    data: np.ndarray = field(repr=False)
    radar_id: RadarId
    range_m_per_bin: float
    doppler_mps_per_bin: float
    sine_per_bin: float

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ShapeMismatch(f"radar cube must be 3D, got shape {data.shape}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def zero_doppler_bin(self) -> int:
        return self.data.shape[0] // 2

    @property
    def boresight_bin(self) -> int:
        return self.data.shape[2] // 2


def compress_bins(spectrum: np.ndarray, factor: int = 2, axis: int = 0) -> np.ndarray:
    """Sum groups of ``factor`` adjacent bins along ``axis``.

    >>> compress_bins(np.ones(4))
    array([2., 2.])
    """
    spectrum = np.asarray(spectrum)
    n = spectrum.shape[axis]
    if n % factor:
        raise ValueError(f"axis length {n} is not divisible by {factor}")
    moved = np.moveaxis(spectrum, axis, 0)
    out = moved.reshape((n // factor, factor) + moved.shape[1:]).sum(axis=1)
    return np.moveaxis(out, 0, axis)


def spectrum(samples: np.ndarray, cfg: RadarConfig, window: bool | None = None) -> np.ndarray:
    """Complex range-Doppler-angle spectrum, axes (doppler, range, angle).

    Range uses every sample (complex baseband ADC); chirps are zero-padded to
    ``cfg.doppler_fft_size`` and antennas to ``cfg.angle_bins``. Doppler and
    angle axes are fftshifted.
    """
    expected = (cfg.num_chirps, cfg.num_samples, cfg.num_virtual_antennas)
    if samples.shape != expected:
        raise ShapeMismatch(f"frame shape {samples.shape} != {expected}")
    window = cfg.window if window is None else window
    x = np.asarray(samples, dtype=np.complex128)
    if window:
        x = x * np.hanning(cfg.num_chirps)[:, None, None] * np.hanning(cfg.num_samples)[None, :, None]
    x = np.fft.fft(x, axis=1)
    x = np.fft.fft(x, n=cfg.doppler_fft_size, axis=0)
    x = np.fft.fft(x, n=cfg.angle_bins, axis=2)
    return np.fft.fftshift(x, axes=(0, 2))


def extract_cube(frame: RawFrame, cfg: RadarConfig, window: bool | None = None) -> RadarCube:
    """FFT, magnitude, then halve Doppler and range resolution by pair summing.

    Compression is applied after the magnitude: the pair sum of magnitudes
    keeps the total reflected amplitude and is phase-independent.
    """
    mag = np.abs(spectrum(frame.samples, cfg, window))
    mag = compress_bins(mag, cfg.compression, axis=0)
    mag = compress_bins(mag, cfg.compression, axis=1)
    return RadarCube(
        data=mag,
        radar_id=frame.radar_id,
        range_m_per_bin=cfg.range_resolution_m,
        doppler_mps_per_bin=cfg.doppler_resolution_mps,
        sine_per_bin=cfg.sine_per_bin,
    )
