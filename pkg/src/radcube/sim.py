"""Point-scatterer FMCW simulator for a horizontal + 90-degree rotated radar pair.

Each scatterer contributes a separable complex exponential to the ADC cube:

* fast time (samples within a chirp): beat frequency proportional to range,
* slow time (chirp index): phase ramp proportional to radial velocity,
* antenna index: phase ramp proportional to the direction cosine along the
  array axis (x for the horizontal radar, z for the vertical one).

Frequencies are expressed directly on the FFT grid of the DSP chain so that a
target sitting on a bin centre produces an exact peak there.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from radcube.errors import TargetOutOfRange

SPEED_OF_LIGHT = 299_792_458.0


class DroneClass(enum.IntEnum):
    SMALL = 0
    LARGE = 1

    @classmethod
    def parse(cls, value) -> "DroneClass":
        if isinstance(value, DroneClass):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        return cls[str(value).upper()]

    @property
    def label(self) -> str:
        return self.name.lower()


class RadarId(enum.IntEnum):
    HORIZONTAL = 0
    VERTICAL = 1


# Per-class defaults for the scatterer model.
DEFAULT_RCS = {DroneClass.SMALL: 1.0, DroneClass.LARGE: 3.0}
DEFAULT_SPREAD_M = 0.3


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class RadarConfig:
    """Radar and cube-geometry parameters.

    ``range_resolution_m`` and ``doppler_resolution_mps`` are the resolutions
    *after* bin compression; the native FFT grid is ``compression`` times finer.
    """

    num_chirps: int = 255
    num_samples: int = 256
    num_virtual_antennas: int = 8
    angle_bins: int = 32
    range_resolution_m: float = 0.116
    doppler_resolution_mps: float = 0.094
    max_range_m: float = 15.0
    carrier_wavelength_m: float = SPEED_OF_LIGHT / 77e9
    antenna_spacing: float = 0.5
    radar_separation_m: float = 0.05
    compression: int = 2
    window: bool = True
    desk_scale_dims: tuple[int, int, int, int] = (16, 32, 16, 16)

    def __post_init__(self):
        object.__setattr__(self, "desk_scale_dims", tuple(int(d) for d in self.desk_scale_dims))
        for name in ("num_chirps", "num_samples", "num_virtual_antennas", "angle_bins", "compression"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("range_resolution_m", "doppler_resolution_mps", "max_range_m", "carrier_wavelength_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.antenna_spacing <= 0 or self.antenna_spacing > 0.5:
            raise ValueError("antenna_spacing must be in (0, 0.5] wavelengths for an unambiguous field of view")
        if self.num_samples % self.compression or self.doppler_fft_size % self.compression:
            raise ValueError("range and doppler FFT sizes must be divisible by the compression factor")
        if self.angle_bins < self.num_virtual_antennas:
            raise ValueError("angle_bins must be >= num_virtual_antennas (zero padding only)")
        # 256 x 0.058 m = 14.85 m against a nominal 15 m: allow 2% slack.
        if self.unambiguous_range_m < 0.98 * self.max_range_m:
            raise ValueError("num_samples does not cover max_range_m")
        if len(self.desk_scale_dims) != 4 or not all(_is_pow2(d) for d in self.desk_scale_dims):
            raise ValueError("desk_scale_dims must be four powers of two")

    @property
    def doppler_fft_size(self) -> int:
        """Chirp count zero-padded up to the next even length (255 -> 256)."""
        return self.num_chirps + (self.num_chirps % 2)

    @property
    def native_range_resolution_m(self) -> float:
        return self.range_resolution_m / self.compression

    @property
    def native_doppler_resolution_mps(self) -> float:
        return self.doppler_resolution_mps / self.compression

    @property
    def unambiguous_range_m(self) -> float:
        return self.num_samples * self.native_range_resolution_m

    @property
    def max_radial_velocity_mps(self) -> float:
        """Half-width of the unambiguous Doppler interval (exclusive)."""
        return self.doppler_fft_size / 2 * self.native_doppler_resolution_mps

    @property
    def chirp_period_s(self) -> float:
        return self.carrier_wavelength_m / (2 * self.doppler_fft_size * self.native_doppler_resolution_mps)

    @property
    def cube_dims(self) -> tuple[int, int, int]:
        """(D, R, A) of one per-radar magnitude cube."""
        return (
            self.doppler_fft_size // self.compression,
            self.num_samples // self.compression,
            self.angle_bins,
        )

    @property
    def fused_dims(self) -> tuple[int, int, int, int]:
        d, r, a = self.cube_dims
        return (d, r, a, a)

    @property
    def label_dims(self) -> tuple[int, int, int]:
        _, r, a, e = self.fused_dims
        return (r, a, e)

    @property
    def zero_doppler_bin(self) -> int:
        return self.cube_dims[0] // 2

    @property
    def sine_per_bin(self) -> float:
        return 1.0 / (self.antenna_spacing * self.angle_bins)

    def desk(self) -> "RadarConfig":
        """Reduced-size configuration producing cubes of ``desk_scale_dims``.

        Resolutions are unchanged; the covered range shrinks accordingly.
        """
        d, r, a, e = self.desk_scale_dims
        if a != e:
            raise ValueError("desk-scale azimuth and elevation bins must match (identical radars)")
        full_d, full_r, full_a = self.cube_dims
        if d > full_d or r > full_r or a > full_a:
            raise ValueError("desk_scale_dims must not exceed the full cube dims")
        return replace(
            self,
            num_chirps=self.compression * d - 1,
            num_samples=self.compression * r,
            angle_bins=a,
            max_range_m=r * self.range_resolution_m,
        )

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["desk_scale_dims"] = list(self.desk_scale_dims)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RadarConfig":
        return cls(**data)


@dataclass(frozen=True)
class Target:
    """A drone in the horizontal radar's frame (boresight along +y)."""

    cls: DroneClass
    position: tuple[float, float, float]
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rcs: float | None = None
    phase: float = 0.0
    spread_m: float = DEFAULT_SPREAD_M

    def __post_init__(self):
        object.__setattr__(self, "cls", DroneClass.parse(self.cls))
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        if self.rcs is None:
            object.__setattr__(self, "rcs", DEFAULT_RCS[self.cls])

    @property
    def range_m(self) -> float:
        return float(np.linalg.norm(self.position))

    def scatterers(self) -> list[tuple[np.ndarray, float, float]]:
        """(position, amplitude, phase) of each point scatterer.

        Small drones are one scatterer. Large drones are three scatterers whose
        offsets have zero mean, extending laterally and in depth by ``spread_m``.
        """
        p = np.asarray(self.position, dtype=float)
        if self.cls is DroneClass.SMALL:
            return [(p, float(self.rcs), self.phase)]
        s = self.spread_m
        offsets = np.array([
            [-s, -s / 2, -s / 2],
            [s, -s / 2, -s / 2],
            [0.0, s, s],
        ])
        amp = float(self.rcs) / len(offsets)
        return [(p + o, amp, self.phase + 2 * np.pi * k / 3) for k, o in enumerate(offsets)]

    def to_dict(self) -> dict:
        return {
            "class": self.cls.label,
            "position": list(self.position),
            "velocity": list(self.velocity),
            "rcs": self.rcs,
            "phase": self.phase,
            "spread_m": self.spread_m,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Target":
        known = {"class", "position", "velocity", "rcs", "phase", "spread_m"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown target keys: {sorted(unknown)}")
        return cls(
            cls=DroneClass.parse(data["class"]),
            position=data["position"],
            velocity=data.get("velocity", (0.0, 0.0, 0.0)),
            rcs=data.get("rcs"),
            phase=data.get("phase", 0.0),
            spread_m=data.get("spread_m", DEFAULT_SPREAD_M),
        )


@dataclass(frozen=True)
class Scene:
    targets: tuple[Target, ...] = ()
    noise_power: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.noise_power < 0:
            raise ValueError("noise_power must be non-negative")

    def to_dict(self) -> dict:
        return {
            "noise_power": self.noise_power,
            "seed": self.seed,
            "targets": [t.to_dict() for t in self.targets],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        unknown = set(data) - {"noise_power", "seed", "targets"}
        if unknown:
            raise ValueError(f"unknown scene keys: {sorted(unknown)}")
        return cls(
            targets=tuple(Target.from_dict(t) for t in data.get("targets", [])),
            noise_power=float(data.get("noise_power", 0.0)),
            seed=int(data.get("seed", 0)),
        )


@dataclass(frozen=True)
class RawFrame:
    samples: np.ndarray = field(repr=False)  # (num_chirps, num_samples, num_virtual_antennas)
    radar_id: RadarId


@dataclass(frozen=True)
class FramePair:
    horizontal: RawFrame
    vertical: RawFrame


def radar_origin(radar_id: RadarId, cfg: RadarConfig) -> np.ndarray:
    # Vertical board sits beside the horizontal one, same plane.
    if radar_id is RadarId.HORIZONTAL:
        return np.zeros(3)
    return np.array([cfg.radar_separation_m, 0.0, 0.0])


def _array_axis(radar_id: RadarId) -> np.ndarray:
    return np.array([1.0, 0.0, 0.0]) if radar_id is RadarId.HORIZONTAL else np.array([0.0, 0.0, 1.0])


def check_target(target: Target, cfg: RadarConfig) -> None:
    """Raise :class:`TargetOutOfRange` if any scatterer would alias."""
    for radar_id in RadarId:
        origin = radar_origin(radar_id, cfg)
        for pos, _, _ in target.scatterers():
            rel = pos - origin
            rng = float(np.linalg.norm(rel))
            if rng <= 0 or rng > cfg.max_range_m or rng >= cfg.unambiguous_range_m:
                raise TargetOutOfRange(f"range {rng:.3f} m outside (0, {cfg.max_range_m}] m")
            vr = float(np.dot(target.velocity, rel) / rng)
            if abs(vr) >= cfg.max_radial_velocity_mps:
                raise TargetOutOfRange(
                    f"radial velocity {vr:.3f} m/s aliases (limit {cfg.max_radial_velocity_mps:.3f} m/s)"
                )


def simulate_frame(scene: Scene, cfg: RadarConfig, radar_id: RadarId) -> RawFrame:
    radar_id = RadarId(radar_id)
    nc, ns, nv = cfg.num_chirps, cfg.num_samples, cfg.num_virtual_antennas
    origin = radar_origin(radar_id, cfg)
    axis = _array_axis(radar_id)
    chirp = np.arange(nc)
    sample = np.arange(ns)
    antenna = np.arange(nv)
    out = np.zeros((nc, ns, nv), dtype=np.complex128)

    for target in scene.targets:
        check_target(target, cfg)
        vel = np.asarray(target.velocity)
        for pos, amp, phase0 in target.scatterers():
            rel = pos - origin
            rng = np.linalg.norm(rel)
            direction = rel / rng
            vr = float(vel @ direction)
            u = float(axis @ direction)
            range_bins = rng / cfg.native_range_resolution_m
            doppler_bins = vr / cfg.native_doppler_resolution_mps
            carrier = 4 * np.pi * rng / cfg.carrier_wavelength_m
            fast = np.exp(2j * np.pi * range_bins * sample / ns)
            slow = np.exp(2j * np.pi * doppler_bins * chirp / cfg.doppler_fft_size)
            spatial = np.exp(2j * np.pi * cfg.antenna_spacing * u * antenna)
            out += (amp * np.exp(1j * (phase0 + carrier))) * (
                slow[:, None, None] * fast[None, :, None] * spatial[None, None, :]
            )

    if scene.noise_power > 0:
        rng = np.random.default_rng([int(scene.seed), int(radar_id)])
        scale = np.sqrt(scene.noise_power / 2)
        out += scale * (rng.standard_normal(out.shape) + 1j * rng.standard_normal(out.shape))
    return RawFrame(samples=out, radar_id=radar_id)


def simulate_pair(scene: Scene, cfg: RadarConfig) -> FramePair:
    return FramePair(
        horizontal=simulate_frame(scene, cfg, RadarId.HORIZONTAL),
        vertical=simulate_frame(scene, cfg, RadarId.VERTICAL),
    )


def visible_targets(scene: Scene, cfg: RadarConfig) -> Scene:
    """Drop targets beyond max range; they leave the frame empty rather than alias."""
    keep = []
    for t in scene.targets:
        ranges = [np.linalg.norm(p - radar_origin(r, cfg)) for r in RadarId for p, _, _ in t.scatterers()]
        if max(ranges) <= cfg.max_range_m and max(ranges) < cfg.unambiguous_range_m:
            keep.append(t)
    return replace(scene, targets=tuple(keep))


def simulate_trajectory(scenes: Iterable[Scene], cfg: RadarConfig) -> list[tuple[FramePair, Scene]]:
    """Simulate a temporally ordered scene sequence.

    The returned scene of each frame is its ground truth: targets that have
    flown beyond the maximum range are removed, so such frames are kept as
    empty frames. Doppler aliasing still raises :class:`TargetOutOfRange`.
    """
    out = []
    for scene in scenes:
        visible = visible_targets(scene, cfg)
        out.append((simulate_pair(visible, cfg), visible))
    return out


def noise_power_for_snr(snr_db: float, amplitude: float = 1.0) -> float:
    """Per-sample complex noise variance giving ``snr_db`` against a scatterer of ``amplitude``."""
    return amplitude**2 / 10 ** (snr_db / 10)

