"""On-disk formats: cube files, weight files, detection tables, dataset manifests.

Cube file (``.cdnc``), all integers little-endian::

    b"CDNC" | u16 version=1 | u16 dtype=1 (float32 LE) | u32 ndim | u32 dims[ndim] | payload

Weight file (``.cdnw``)::

    b"CDNW" | u16 version=1 | u16 reserved=0 | u32 meta_len | meta (UTF-8 JSON: spec, seed)
    | u32 ntensors | per tensor: u16 name_len, name, u32 ndim, u32 dims[ndim]
    | payload: float64 LE tensors concatenated in table order

Payloads are row-major, last dimension fastest. Files are written to a
temporary sibling and renamed, so readers never observe a partial file.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from radcube.errors import BadMagic, TruncatedPayload, VersionMismatch
from radcube.labels import PolarPosition, to_polar_bins
from radcube.model import NetworkSpec, Weights
from radcube.postproc import Detection
from radcube.sim import DroneClass, RadarConfig, Target

CUBE_MAGIC = b"CDNC"
WEIGHT_MAGIC = b"CDNW"
CUBE_VERSION = 1
WEIGHT_VERSION = 1
DTYPE_FLOAT32_LE = 1

DETECTION_FIELDS = ["frame_id", "class", "r", "a", "e", "confidence", "x", "y", "z"]
UNCLASSIFIED = "none"


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedPayload(f"need {n} bytes at offset {self.pos}, file has {len(self.buf)}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def encode_cube(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    header = CUBE_MAGIC + struct.pack("<HHI", CUBE_VERSION, DTYPE_FLOAT32_LE, array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    return header + np.ascontiguousarray(array, dtype="<f4").tobytes()


def decode_cube(buf: bytes) -> np.ndarray:
    r = _Reader(buf)
    if r.take(4) != CUBE_MAGIC:
        raise BadMagic("not a cube file")
    version, dtype, ndim = r.unpack("<HHI")
    if version != CUBE_VERSION:
        raise VersionMismatch(f"cube version {version}, expected {CUBE_VERSION}")
    if dtype != DTYPE_FLOAT32_LE:
        raise VersionMismatch(f"unknown element type code {dtype}")
    dims = r.unpack(f"<{ndim}I")
    count = int(np.prod(dims, dtype=np.int64))
    payload = r.take(4 * count)
    if r.pos != len(buf):
        raise ValueError(f"{len(buf) - r.pos} trailing bytes after cube payload")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)


def write_cube(path, array: np.ndarray) -> None:
    _atomic_write(Path(path), encode_cube(array))


def read_cube(path) -> np.ndarray:
    return decode_cube(Path(path).read_bytes())


def encode_weights(weights: Weights) -> bytes:
    meta = json.dumps({"spec": weights.spec.to_dict(), "seed": weights.seed}, sort_keys=True).encode()
    out = [WEIGHT_MAGIC, struct.pack("<HHI", WEIGHT_VERSION, 0, len(meta)), meta]
    names = list(weights.spec.layer_shapes())
    out.append(struct.pack("<I", len(names)))
    for name in names:
        shape = weights.params[name].shape
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb + struct.pack(f"<I{len(shape)}I", len(shape), *shape))
    for name in names:
        out.append(np.ascontiguousarray(weights.params[name], dtype="<f8").tobytes())
    return b"".join(out)


def decode_weights(buf: bytes) -> Weights:
    r = _Reader(buf)
    if r.take(4) != WEIGHT_MAGIC:
        raise BadMagic("not a weight file")
    version, _, meta_len = r.unpack("<HHI")
    if version != WEIGHT_VERSION:
        raise VersionMismatch(f"weight version {version}, expected {WEIGHT_VERSION}")
    meta = json.loads(r.take(meta_len).decode())
    spec = NetworkSpec.from_dict(meta["spec"])
    (count,) = r.unpack("<I")
    table = []
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode()
        (ndim,) = r.unpack("<I")
        table.append((name, r.unpack(f"<{ndim}I")))
    params = {}
    for name, shape in table:
        n = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(r.take(8 * n), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(buf):
        raise ValueError(f"{len(buf) - r.pos} trailing bytes after weight payload")
    return Weights(spec, params, seed=int(meta.get("seed", 0)), version=version)


def write_weights(path, weights: Weights) -> None:
    _atomic_write(Path(path), encode_weights(weights))


def read_weights(path) -> Weights:
    return decode_weights(Path(path).read_bytes())


# -- detection tables ---------------------------------------------------------


def _num(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _parse_num(s: str):
    try:
        return int(s)
    except ValueError:
        return float(s)


def _sort_key(row: tuple[str, Detection]):
    fid, det = row
    cls = -1 if det.cls is None else int(det.cls)
    return (fid, cls, -det.confidence, tuple(float(b) for b in det.bins))


def _row(fid: str, det: Detection) -> list[str]:
    xyz = [""] * 3 if det.cartesian is None else [_num(c) for c in det.cartesian]
    cls = UNCLASSIFIED if det.cls is None else det.cls.label
    return [fid, cls] + [_num(b) for b in det.bins] + [_num(det.confidence)] + xyz


def format_detections(rows: Iterable[tuple[str, Detection]]) -> str:
    """Delimited text, one row per detection, sorted by frame, class, confidence.

    Remaining ties are broken by the rendered row, so the output does not
    depend on input order.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DETECTION_FIELDS)
    for _, row in sorted((_sort_key(r), _row(*r)) for r in rows):
        w.writerow(row)
    return buf.getvalue()


def parse_detections(text: str) -> list[tuple[str, Detection]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != DETECTION_FIELDS:
        raise ValueError(f"bad detection header {header}")
    out = []
    for row in reader:
        fid, cls, r, a, e, conf, x, y, z = row
        cart = None if x == "" else (float(x), float(y), float(z))
        det = Detection(
            cls=None if cls == UNCLASSIFIED else DroneClass.parse(cls),
            bins=(_parse_num(r), _parse_num(a), _parse_num(e)),
            confidence=float(conf),
            cartesian=cart,
        )
        out.append((fid, det))
    return out


def write_detections(path, rows: Iterable[tuple[str, Detection]]) -> None:
    _atomic_write(Path(path), format_detections(rows).encode())


def read_detections(path) -> list[tuple[str, Detection]]:
    return parse_detections(Path(path).read_text())


# -- dataset manifests --------------------------------------------------------

SPLITS = ("train", "val", "test")


@dataclass
class FrameRecord:
    id: str
    sequence: str
    split: str
    h: str
    v: str
    targets: list[Target] = field(default_factory=list)
    fused: str | None = None
    labels: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "sequence": self.sequence,
            "split": self.split,
            "h": self.h,
            "v": self.v,
            "fused": self.fused,
            "labels": self.labels,
            "targets": [t.to_dict() for t in self.targets],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrameRecord":
        return cls(
            id=d["id"],
            sequence=d["sequence"],
            split=d["split"],
            h=d["h"],
            v=d["v"],
            fused=d.get("fused"),
            labels=d.get("labels"),
            targets=[Target.from_dict(t) for t in d["targets"]],
        )

    def polar_targets(self, cfg: RadarConfig) -> list[PolarPosition]:
        return [to_polar_bins(t.position, cfg, t.cls) for t in self.targets]


@dataclass
class DatasetManifest:
    radar: RadarConfig
    frames: list[FrameRecord]
    root: Path = Path(".")

    def split(self, name: str) -> list[FrameRecord]:
        return [f for f in self.frames if f.split == name]

    def path(self, rel: str) -> Path:
        return self.root / rel

    def validate(self) -> None:
        ids = [f.id for f in self.frames]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate frame ids: splits are not disjoint")
        for f in self.frames:
            if f.split not in SPLITS:
                raise ValueError(f"frame {f.id}: unknown split {f.split!r}")
            for rel in [f.h, f.v, f.fused, f.labels]:
                if rel is None:
                    continue
                if not self.path(rel).exists():
                    raise FileNotFoundError(f"frame {f.id}: missing {rel}")

    def to_dict(self) -> dict:
        return {
            "format": "radcube-manifest",
            "version": 1,
            "radar": self.radar.to_dict(),
            "frames": [f.to_dict() for f in self.frames],
        }


def write_manifest(path, manifest: DatasetManifest) -> None:
    _atomic_write(Path(path), (json.dumps(manifest.to_dict(), indent=1) + "\n").encode())


def read_manifest(path, validate: bool = True) -> DatasetManifest:
    path = Path(path)
    data = json.loads(path.read_text())
    if data.get("format") != "radcube-manifest":
        raise BadMagic(f"{path} is not a dataset manifest")
    if data.get("version") != 1:
        raise VersionMismatch(f"manifest version {data.get('version')}")
    m = DatasetManifest(
        radar=RadarConfig.from_dict(data["radar"]),
        frames=[FrameRecord.from_dict(f) for f in data["frames"]],
        root=path.parent,
    )
    if validate:
        m.validate()
    return m


def write_text(path, text: str) -> None:
    _atomic_write(Path(path), text.encode())
