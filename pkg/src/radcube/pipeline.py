"""Glue between stages: raw frame pair -> cubes -> network input, scene -> labels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from radcube.dsp import RadarCube, extract_cube
from radcube.fusion import FusedCube, fuse
from radcube.labels import PolarPosition, make_ground_truth, to_polar_bins
from radcube.sim import FramePair, RadarConfig, Scene, simulate_pair, visible_targets


@dataclass(frozen=True)
class ProcessedFrame:
    h: RadarCube
    v: RadarCube
    fused: FusedCube
    targets: tuple[PolarPosition, ...]

    def labels(self, cfg: RadarConfig) -> np.ndarray:
        return make_ground_truth(self.targets, cfg.label_dims)


def scene_targets(scene: Scene, cfg: RadarConfig) -> tuple[PolarPosition, ...]:
    return tuple(to_polar_bins(t.position, cfg, t.cls) for t in scene.targets)


def process_pair(pair: FramePair, cfg: RadarConfig, normalize: bool = True) -> tuple[RadarCube, RadarCube, FusedCube]:
    h = extract_cube(pair.horizontal, cfg)
    v = extract_cube(pair.vertical, cfg)
    return h, v, fuse(h, v, normalize=normalize)


def process_scene(scene: Scene, cfg: RadarConfig, normalize: bool = True) -> ProcessedFrame:
    scene = visible_targets(scene, cfg)
    h, v, fused = process_pair(simulate_pair(scene, cfg), cfg, normalize)
    return ProcessedFrame(h, v, fused, scene_targets(scene, cfg))


def build_arrays(frames: Sequence[ProcessedFrame], cfg: RadarConfig, dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """Stack network inputs (N, D, R, A, E) and labels (N, C, R, A, E)."""
    xs = np.stack([f.fused.data.astype(dtype) for f in frames])
    ys = np.stack([f.labels(cfg).astype(dtype) for f in frames])
    return xs, ys
