"""Scene generators: hover, straight-line flight and randomised single frames."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from radcube.errors import TargetOutOfRange
from radcube.labels import to_polar_bins
from radcube.sim import DroneClass, RadarConfig, Scene, Target, check_target, noise_power_for_snr


def hover(target: Target, frames: int, noise_power: float = 0.0, seed: int = 0) -> list[Scene]:
    return [Scene((target,), noise_power, seed + k) for k in range(frames)]


def linear_flight(target: Target, frames: int, dt: float = 0.1, noise_power: float = 0.0, seed: int = 0) -> list[Scene]:
    """Constant-velocity flight sampled at 1 / dt Hz (10 Hz by default)."""
    p0 = np.asarray(target.position)
    v = np.asarray(target.velocity)
    return [
        Scene((replace(target, position=tuple(p0 + v * dt * k)),), noise_power, seed + k)
        for k in range(frames)
    ]


@dataclass(frozen=True)
class RandomSceneConfig:
    """Sampling ranges for :func:`random_scene`.

    ``mix`` weights the frame kinds (empty, small only, large only, both).
    """

    min_range_m: float = 0.6
    max_range_m: float | None = None  # defaults to 92% of the radar's max range
    max_sine: float = 0.5
    max_speed_mps: float = 0.6
    snr_db: float = 20.0
    min_separation_bins: float = 6.0
    mix: tuple[float, float, float, float] = (0.05, 0.3, 0.3, 0.35)


def _random_target(rng: np.random.Generator, cls: DroneClass, cfg: RadarConfig, rc: RandomSceneConfig) -> Target:
    max_r = rc.max_range_m if rc.max_range_m is not None else 0.92 * cfg.max_range_m
    for _ in range(1000):
        rng_m = rng.uniform(rc.min_range_m, max_r)
        u, v = rng.uniform(-rc.max_sine, rc.max_sine, size=2)
        if u * u + v * v >= 0.8:
            continue
        pos = rng_m * np.array([u, math.sqrt(1 - u * u - v * v), v])
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        vel = direction * rng.uniform(0, rc.max_speed_mps)
        t = Target(cls=cls, position=tuple(pos), velocity=tuple(vel), phase=float(rng.uniform(0, 2 * np.pi)))
        try:
            check_target(t, cfg)
            to_polar_bins(t.position, cfg, cls)
        except (TargetOutOfRange, ValueError):
            continue
        return t
    raise RuntimeError("could not place a target; sampling ranges are inconsistent with the radar config")


def random_scene(rng: np.random.Generator, cfg: RadarConfig, rc: RandomSceneConfig = RandomSceneConfig(), seed: int = 0) -> Scene:
    kind = rng.choice(4, p=np.asarray(rc.mix) / np.sum(rc.mix))
    classes = [[], [DroneClass.SMALL], [DroneClass.LARGE], [DroneClass.SMALL, DroneClass.LARGE]][kind]
    targets: list[Target] = []
    for cls in classes:
        for _ in range(1000):
            t = _random_target(rng, cls, cfg, rc)
            pb = np.array(to_polar_bins(t.position, cfg).bins)
            if all(np.linalg.norm(pb - np.array(to_polar_bins(o.position, cfg).bins)) >= rc.min_separation_bins for o in targets):
                targets.append(t)
                break
    return Scene(tuple(targets), noise_power_for_snr(rc.snr_db), seed)


def random_scenes(n: int, cfg: RadarConfig, rc: RandomSceneConfig = RandomSceneConfig(), seed: int = 0) -> list[Scene]:
    rng = np.random.default_rng(seed)
    return [random_scene(rng, cfg, rc, seed=seed * 1_000_003 + k) for k in range(n)]
