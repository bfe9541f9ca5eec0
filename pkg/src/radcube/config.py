"""Run configuration and scenario files (YAML or JSON).

Both loaders reject unknown keys with :class:`ConfigError` naming the full
dotted key, and range-check every threshold. The schema is described in
``docs/config.md``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from radcube.baseline import BaselineParams
from radcube.errors import ConfigError
from radcube.model import NetworkSpec, TrainConfig
from radcube.postproc import CANDIDATE_FLOOR, MIN_OVERLAP
from radcube.scenarios import RandomSceneConfig
from radcube.sim import DroneClass, RadarConfig, Target


@dataclass(frozen=True)
class PostprocParams:
    candidate_floor: float = CANDIDATE_FLOOR
    min_overlap: float = MIN_OVERLAP


@dataclass(frozen=True)
class EvalParams:
    oles: tuple[int, ...] = (1, 3, 5)
    localization_ole: int = 3


@dataclass(frozen=True)
class Paths:
    dataset: str | None = None
    weights: str | None = None
    detections: str | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    jobs: int = 1
    desk: bool = True
    normalize: bool = True
    radar: RadarConfig = field(default_factory=RadarConfig)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    postproc: PostprocParams = field(default_factory=PostprocParams)
    baseline: BaselineParams = field(default_factory=BaselineParams)
    eval: EvalParams = field(default_factory=EvalParams)
    paths: Paths = field(default_factory=Paths)

    @property
    def radar_config(self) -> RadarConfig:
        """The radar actually simulated: desk-scale unless ``desk`` is false."""
        return self.radar.desk() if self.desk else self.radar

    def network_spec(self) -> NetworkSpec:
        """``network`` with its input dims tied to the simulated radar."""
        return dataclasses.replace(self.network, input_dims=self.radar_config.fused_dims)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "jobs": self.jobs,
            "desk": self.desk,
            "normalize": self.normalize,
            "radar": self.radar.to_dict(),
            "network": self.network.to_dict(),
            "train": {k: v for k, v in dataclasses.asdict(self.train).items() if k != "seed"},
            "postproc": dataclasses.asdict(self.postproc),
            "baseline": dataclasses.asdict(self.baseline),
            "eval": {"oles": list(self.eval.oles), "localization_ole": self.eval.localization_ole},
            "paths": dataclasses.asdict(self.paths),
        }


SECTIONS = {
    "radar": RadarConfig,
    "network": NetworkSpec,
    "train": TrainConfig,
    "postproc": PostprocParams,
    "baseline": BaselineParams,
    "eval": EvalParams,
    "paths": Paths,
}
SCALARS = {"seed": int, "jobs": int, "desk": bool, "normalize": bool}


def load_structured(path) -> Any:
    """Parse a YAML or JSON file (JSON is valid YAML, but keep its errors precise)."""
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot parse: {exc}") from exc


def _check_keys(data: Any, allowed, where: str) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    for key in data:
        if key not in allowed:
            dotted = f"{where}.{key}" if where else str(key)
            raise ConfigError(f"unknown config key: {dotted}")
    return data


def _build(cls, data: Any, where: str, exclude=()):
    names = [f.name for f in dataclasses.fields(cls) if f.name not in exclude]
    data = _check_keys(data, names, where)
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def validate(cfg: RunConfig) -> RunConfig:
    p, b, e = cfg.postproc, cfg.baseline, cfg.eval
    _require(0 < p.candidate_floor < 1, "postproc.candidate_floor must be in (0, 1)")
    _require(0 <= p.min_overlap <= 1, "postproc.min_overlap must be in [0, 1]")
    _require(b.guard >= 0, "baseline.guard must be >= 0")
    _require(b.train >= 1, "baseline.train must be >= 1")
    _require(b.scale > 0, "baseline.scale must be > 0")
    _require(b.eps > 0, "baseline.eps must be > 0")
    _require(b.min_pts >= 1, "baseline.min_pts must be >= 1")
    _require(0.0 <= b.rel_floor < 1.0, "baseline.rel_floor must be in [0, 1)")
    _require(b.doppler_gate is None or b.doppler_gate >= 0, "baseline.doppler_gate must be >= 0 or null")
    _require(len(e.oles) > 0 and all(int(o) >= 0 for o in e.oles), "eval.oles must be non-negative integers")
    _require(e.localization_ole >= 0, "eval.localization_ole must be >= 0")
    _require(cfg.jobs >= 1, "jobs must be >= 1")
    try:
        cfg.network_spec()
    except ValueError as exc:
        raise ConfigError(f"network: {exc}") from exc
    return cfg


def run_config_from_dict(data: Any) -> RunConfig:
    data = _check_keys(data, list(SCALARS) + list(SECTIONS), "")
    kwargs = {}
    for key, typ in SCALARS.items():
        if key in data:
            value = data[key]
            if typ is int and (isinstance(value, bool) or not isinstance(value, int)):
                raise ConfigError(f"{key} must be an integer")
            if typ is bool and not isinstance(value, bool):
                raise ConfigError(f"{key} must be true or false")
            kwargs[key] = value
    for key, cls in SECTIONS.items():
        if key in data:
            # Training draws from the master seed; a second seed would be ambiguous.
            kwargs[key] = _build(cls, data[key], key, exclude=("seed",) if key == "train" else ())
    try:
        cfg = RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return validate(cfg)


def load_run_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    return run_config_from_dict(load_structured(path))


# -- scenarios ----------------------------------------------------------------

SEQUENCE_KINDS = ("hover", "linear", "random", "static")
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class SequenceSpec:
    name: str
    kind: str
    frames: int = 1
    split: str = "train"
    seed: int = 0
    snr_db: float | None = 20.0  # None means noiseless
    dt: float = 0.1
    targets: tuple[Target, ...] = ()
    random: RandomSceneConfig = field(default_factory=RandomSceneConfig)


@dataclass(frozen=True)
class Scenario:
    sequences: tuple[SequenceSpec, ...]


_SEQUENCE_KEYS = ("name", "kind", "frames", "split", "seed", "snr_db", "dt", "target", "targets", "random")


def _target(data: Any, where: str) -> Target:
    _check_keys(data, ("class", "position", "velocity", "rcs", "phase", "spread_m"), where)
    if "class" not in data or "position" not in data:
        raise ConfigError(f"{where}: 'class' and 'position' are required")
    try:
        DroneClass.parse(data["class"])
        return Target.from_dict(data)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _sequence(data: Any, index: int) -> SequenceSpec:
    where = f"sequences[{index}]"
    data = _check_keys(data, _SEQUENCE_KEYS, where)
    kind = data.get("kind")
    if kind not in SEQUENCE_KINDS:
        raise ConfigError(f"{where}.kind must be one of {SEQUENCE_KINDS}, got {kind!r}")
    split = data.get("split", "train")
    if split not in SPLITS:
        raise ConfigError(f"{where}.split must be one of {SPLITS}")
    frames = data.get("frames", 1)
    if not isinstance(frames, int) or frames < 1:
        raise ConfigError(f"{where}.frames must be a positive integer")
    targets = []
    if "target" in data:
        targets.append(_target(data["target"], f"{where}.target"))
    for k, t in enumerate(data.get("targets") or []):
        targets.append(_target(t, f"{where}.targets[{k}]"))
    if kind in ("hover", "linear") and len(targets) != 1:
        raise ConfigError(f"{where}: {kind} sequences take exactly one target")
    random_cfg = RandomSceneConfig()
    if "random" in data:
        if kind != "random":
            raise ConfigError(f"{where}.random only applies to kind 'random'")
        # Noise is set per sequence, so the random block has no snr_db of its own.
        random_cfg = _build(RandomSceneConfig, data["random"], f"{where}.random", exclude=("snr_db",))
    return SequenceSpec(
        name=str(data.get("name", f"seq{index:03d}")),
        kind=kind,
        frames=frames,
        split=split,
        seed=int(data.get("seed", index)),
        snr_db=data.get("snr_db", 20.0),
        dt=float(data.get("dt", 0.1)),
        targets=tuple(targets),
        random=random_cfg,
    )


def scenario_from_dict(data: Any) -> Scenario:
    data = _check_keys(data, ("sequences",), "")
    seqs = data.get("sequences") or []
    if not seqs:
        raise ConfigError("scenario has no sequences")
    specs = tuple(_sequence(s, i) for i, s in enumerate(seqs))
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError("sequence names must be unique")
    return Scenario(specs)


def load_scenario(path) -> Scenario:
    return scenario_from_dict(load_structured(path))
