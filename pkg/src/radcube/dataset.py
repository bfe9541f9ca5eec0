"""Scenario expansion, dataset generation on disk, and loading back for training."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from radcube.config import Scenario, SequenceSpec
from radcube.dsp import RadarCube
from radcube.fusion import fuse, fuse_arrays
from radcube.labels import make_ground_truth
from radcube.pipeline import ProcessedFrame, process_scene, scene_targets
from radcube.scenarios import hover, linear_flight, random_scenes
from radcube.sim import DroneClass, RadarConfig, RadarId, Scene, noise_power_for_snr, visible_targets
from radcube.store import DatasetManifest, FrameRecord, read_cube, write_cube


def sequence_scenes(seq: SequenceSpec, cfg: RadarConfig) -> list[Scene]:
    noise = 0.0 if seq.snr_db is None else noise_power_for_snr(seq.snr_db)
    seed = seq.seed * 100_003
    if seq.kind == "hover":
        return hover(seq.targets[0], seq.frames, noise, seed)
    if seq.kind == "linear":
        return linear_flight(seq.targets[0], seq.frames, seq.dt, noise, seed)
    if seq.kind == "static":
        return [Scene(seq.targets, noise, seed + k) for k in range(seq.frames)]
    rc = seq.random
    scenes = random_scenes(seq.frames, cfg, rc, seed=seq.seed)
    return [dataclasses.replace(s, noise_power=noise) for s in scenes]


def expand(scenario: Scenario, cfg: RadarConfig) -> list[tuple[SequenceSpec, int, Scene]]:
    """(sequence, frame index, scene) for every frame of the scenario."""
    return [(seq, k, scene) for seq in scenario.sequences for k, scene in enumerate(sequence_scenes(seq, cfg))]


def _frame_id(seq: SequenceSpec, k: int) -> str:
    return f"{seq.name}-{k:05d}"


def _generate_one(args) -> FrameRecord:
    seq, k, scene, cfg, root, normalize, write_fused = args
    frame = process_scene(scene, cfg, normalize)
    fid = _frame_id(seq, k)
    rel = Path("frames") / seq.name
    rec = FrameRecord(
        id=fid,
        sequence=seq.name,
        split=seq.split,
        h=str(rel / f"{fid}.h.cdnc"),
        v=str(rel / f"{fid}.v.cdnc"),
        labels=str(rel / f"{fid}.labels.cdnc"),
        fused=str(rel / f"{fid}.fused.cdnc") if write_fused else None,
        targets=list(visible_targets(scene, cfg).targets),
    )
    write_cube(root / rec.h, frame.h.data)
    write_cube(root / rec.v, frame.v.data)
    write_cube(root / rec.labels, frame.labels(cfg))
    if write_fused:
        write_cube(root / rec.fused, frame.fused.data)
    return rec


def generate(
    scenario: Scenario,
    cfg: RadarConfig,
    out_dir,
    jobs: int = 1,
    normalize: bool = True,
    write_fused: bool = False,
) -> DatasetManifest:
    """Simulate every frame and write cubes and labels under ``out_dir``.

    Each frame depends only on its own scene seed, so ``jobs > 1`` produces
    identical files.
    """
    root = Path(out_dir)
    work = [(seq, k, scene, cfg, root, normalize, write_fused) for seq, k, scene in expand(scenario, cfg)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_generate_one, work, chunksize=8))
    else:
        records = [_generate_one(w) for w in work]
    return DatasetManifest(radar=cfg, frames=records, root=root)


def class_counts(manifest: DatasetManifest) -> dict[str, dict[str, int]]:
    """Per split: frame count and target count per class."""
    out: dict[str, dict[str, int]] = {}
    for rec in manifest.frames:
        row = out.setdefault(rec.split, {"frames": 0, **{c.label: 0 for c in DroneClass}})
        row["frames"] += 1
        for t in rec.targets:
            row[t.cls.label] += 1
    return out


def summary_table(manifest: DatasetManifest) -> str:
    counts = class_counts(manifest)
    classes = [c.label for c in DroneClass]
    lines = ["split,frames," + ",".join(classes)]
    for split in ("train", "val", "test"):
        if split in counts:
            row = counts[split]
            lines.append(",".join([split, str(row["frames"])] + [str(row[c]) for c in classes]))
    return "\n".join(lines) + "\n"


def load_frame(manifest: DatasetManifest, rec: FrameRecord, normalize: bool = True) -> ProcessedFrame:
    cfg = manifest.radar
    kw = dict(
        range_m_per_bin=cfg.range_resolution_m,
        doppler_mps_per_bin=cfg.doppler_resolution_mps,
        sine_per_bin=cfg.sine_per_bin,
    )
    h = RadarCube(read_cube(manifest.path(rec.h)).astype(np.float64), RadarId.HORIZONTAL, **kw)
    v = RadarCube(read_cube(manifest.path(rec.v)).astype(np.float64), RadarId.VERTICAL, **kw)
    scene = Scene(tuple(rec.targets))
    return ProcessedFrame(h, v, fuse(h, v, normalize=normalize), scene_targets(scene, cfg))


class FusedInputs:
    """Lazily fused network inputs, indexable like an (N, D, R, A, E) array.

    Only the per-radar cubes are held (D*R*(A+E) values per frame instead of
    D*R*A*E); each index operation fuses the requested frames exactly as
    :func:`radcube.fusion.fuse` does.
    """

    ndim = 5

    def __init__(self, h: np.ndarray, v: np.ndarray, normalize: bool = True, dtype=np.float32):
        if h.shape[:3] != v.shape[:3]:
            raise ValueError(f"horizontal {h.shape} and vertical {v.shape} stacks disagree")
        self.h, self.v = h, v
        self.normalize = normalize
        self.dtype = np.dtype(dtype)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.h.shape + self.v.shape[3:]

    def __len__(self) -> int:
        return len(self.h)

    def __getitem__(self, idx) -> np.ndarray:
        if isinstance(idx, (int, np.integer)):
            return self[np.array([idx])][0]
        h = self.h[idx].astype(np.float64)
        v = self.v[idx].astype(np.float64)
        out = np.empty(h.shape + v.shape[3:], dtype=self.dtype)
        for k in range(len(h)):
            data = fuse_arrays(h[k], v[k])
            peak = float(data.max(initial=0.0))
            if self.normalize and peak > 0:
                data = data / peak
            out[k] = data
        return out


def load_arrays(
    manifest: DatasetManifest,
    records: Sequence[FrameRecord],
    normalize: bool = True,
    dtype=np.float32,
    lazy: bool = False,
) -> tuple[np.ndarray | FusedInputs, np.ndarray]:
    """Network inputs (N, D, R, A, E) and labels (N, C, R, A, E) for ``records``.

    With ``lazy`` the inputs come back as :class:`FusedInputs`, which keeps
    memory linear in the per-radar cube size.
    """
    cfg = manifest.radar
    if lazy:
        hs = np.zeros((len(records),) + cfg.cube_dims, np.float32)
        vs = np.zeros_like(hs)
        ys = np.zeros((len(records), len(DroneClass)) + cfg.label_dims, dtype)
        for k, rec in enumerate(records):
            hs[k] = read_cube(manifest.path(rec.h))
            vs[k] = read_cube(manifest.path(rec.v))
            ys[k] = make_ground_truth(rec.polar_targets(cfg), cfg.label_dims)
        return FusedInputs(hs, vs, normalize, dtype), ys
    xs, ys = [], []
    for rec in records:
        frame = load_frame(manifest, rec, normalize)
        xs.append(frame.fused.data.astype(dtype))
        ys.append(make_ground_truth(frame.targets, cfg.label_dims).astype(dtype))
    if not xs:
        return np.zeros((0,) + cfg.fused_dims, dtype), np.zeros((0, len(DroneClass)) + cfg.label_dims, dtype)
    return np.stack(xs), np.stack(ys)
