"""Command-line entry point: ``radcube simulate|train|infer|eval|export``.

Exit codes: 0 success, 1 runtime or I/O failure, 2 configuration or usage
error, 3 training diverged, 4 weights incompatible with the data, 5 frame ids
in a detection file missing from the manifest.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from radcube import store
from radcube.baseline import localize
from radcube.config import RunConfig, load_run_config, load_scenario
from radcube.dataset import generate, load_arrays, load_frame, summary_table
from radcube.errors import ConfigError, DivergenceDetected, NoCluster, ShapeMismatch
from radcube.metrics import evaluate, localization_table
from radcube.model import predict, train
from radcube.postproc import detect

log = logging.getLogger("radcube")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_DIVERGED, EXIT_MISMATCH, EXIT_MISSING = 0, 1, 2, 3, 4, 5
PLANES = ("RA", "RD", "DA", "RE", "AE")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _run_config(args) -> RunConfig:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = dataclasses.replace(cfg, jobs=args.jobs)
    return cfg


def _path(arg, fallback, what: str) -> Path:
    value = arg if arg is not None else fallback
    if value is None:
        raise ConfigError(f"no {what} given (flag or paths section of the config)")
    return Path(value)


def _frames(manifest: store.DatasetManifest, split: str):
    return list(manifest.frames) if split == "all" else manifest.split(split)


# -- simulate -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _run_config(args)
    scenario = load_scenario(args.scenario)
    # The run seed shifts every sequence seed, so one scenario file yields
    # independent datasets under different --seed values.
    scenario = dataclasses.replace(
        scenario,
        sequences=tuple(dataclasses.replace(s, seed=s.seed + 1_000_003 * cfg.seed) for s in scenario.sequences),
    )
    out = _path(args.out, cfg.paths.dataset, "output directory")
    manifest = generate(scenario, cfg.radar_config, out, jobs=cfg.jobs, normalize=cfg.normalize, write_fused=args.write_fused)
    store.write_manifest(out / "manifest.json", manifest)
    table = summary_table(manifest)
    store.write_text(out / "summary.csv", table)
    print(f"wrote {len(manifest.frames)} frames in {len(scenario.sequences)} sequence(s) to {out}")
    print(table, end="")
    return EXIT_OK


# -- train --------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _run_config(args)
    manifest = store.read_manifest(_path(args.manifest, cfg.paths.dataset and Path(cfg.paths.dataset) / "manifest.json", "manifest"))
    records = manifest.split("train")
    if not records:
        raise CliError("manifest has no train split", EXIT_CONFIG)
    out = _path(args.out, cfg.paths.weights, "output weight path")
    spec = dataclasses.replace(cfg.network, input_dims=manifest.radar.fused_dims)
    xs, ys = load_arrays(manifest, records, cfg.normalize, lazy=True)
    train_cfg = dataclasses.replace(cfg.train, seed=cfg.seed)
    log_path = out.with_suffix(".loss.csv")
    rows = []

    def on_epoch(rec):
        rows.append(rec)
        print(f"epoch {rec['epoch']} train_loss {rec['train_loss']:.6g} val_loss {rec['val_loss']}", flush=True)
        store.write_text(log_path, _loss_csv(rows))

    ckpt = out.parent / f"{out.stem}.checkpoints" if train_cfg.checkpoint_every else None
    try:
        result = train((xs, ys), spec, train_cfg, checkpoint_dir=ckpt, on_epoch=on_epoch)
    except DivergenceDetected as exc:
        print(f"error: training diverged: {exc}; last epochs: {rows[-3:]}", file=sys.stderr)
        return EXIT_DIVERGED
    store.write_weights(out, result.weights)
    print(f"wrote {out} and {log_path}")
    return EXIT_OK


def _loss_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "val_loss"])
    for r in rows:
        w.writerow([r["epoch"], repr(r["train_loss"]), "" if r["val_loss"] is None else repr(r["val_loss"])])
    return buf.getvalue()


# -- infer --------------------------------------------------------------------


def _baseline_one(job):
    manifest, rec, cfg = job
    t0 = time.perf_counter()
    frame = load_frame(manifest, rec, cfg.normalize)
    try:
        dets = [localize(frame.h, frame.v, manifest.radar, cfg.baseline)]
    except NoCluster:
        dets = []
    return rec.id, dets, time.perf_counter() - t0


def cmd_infer(args) -> int:
    cfg = _run_config(args)
    manifest = store.read_manifest(_path(args.manifest, cfg.paths.dataset and Path(cfg.paths.dataset) / "manifest.json", "manifest"))
    records = _frames(manifest, args.split)
    out = _path(args.out, cfg.paths.detections, "output detection path")
    rows, latencies = [], []
    if args.method == "baseline":
        jobs = [(manifest, rec, cfg) for rec in records]
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(pool.map(_baseline_one, jobs))
        else:
            results = [_baseline_one(j) for j in jobs]
        for fid, dets, dt in results:
            rows.extend((fid, d) for d in dets)
            latencies.append((fid, dt))
    else:
        weights = store.read_weights(_path(args.weights, cfg.paths.weights, "weight file"))
        if weights.spec.input_dims != manifest.radar.fused_dims:
            raise CliError(
                f"weights expect input {weights.spec.input_dims}, dataset has {manifest.radar.fused_dims}", EXIT_MISMATCH
            )
        for rec in records:
            t0 = time.perf_counter()
            xs, _ = load_arrays(manifest, [rec], cfg.normalize)
            pred = predict(xs, weights)[0]
            dets = detect(pred, manifest.radar, cfg.postproc.min_overlap, cfg.postproc.candidate_floor)
            latencies.append((rec.id, time.perf_counter() - t0))
            rows.extend((rec.id, d) for d in dets)
    store.write_detections(out, rows)
    lat_path = out.with_suffix(".latency.csv")
    store.write_text(lat_path, "frame_id,seconds\n" + "".join(f"{f},{dt!r}\n" for f, dt in latencies))
    if latencies:
        p50, p90, p99 = np.percentile([dt for _, dt in latencies], [50, 90, 99])
        print(f"latency per frame: p50 {p50 * 1e3:.1f} ms, p90 {p90 * 1e3:.1f} ms, p99 {p99 * 1e3:.1f} ms")
    print(f"wrote {len(rows)} detections for {len(records)} frames to {out}")
    return EXIT_OK


# -- eval ---------------------------------------------------------------------


def _eval_frames(det_rows, manifest: store.DatasetManifest, records):
    known = {r.id for r in manifest.frames}
    missing = sorted({fid for fid, _ in det_rows} - known)
    if missing:
        raise CliError("frames missing from manifest: " + ", ".join(missing), EXIT_MISSING)
    by_frame: dict[str, list] = {}
    for fid, det in det_rows:
        by_frame.setdefault(fid, []).append(det)
    return [(by_frame.get(rec.id, []), rec.polar_targets(manifest.radar)) for rec in records]


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    manifest = store.read_manifest(_path(args.manifest, cfg.paths.dataset and Path(cfg.paths.dataset) / "manifest.json", "manifest"))
    records = _frames(manifest, args.split)
    out = _path(args.out, None, "output directory")
    names = args.names or [Path(p).stem for p in args.detections]
    if len(names) != len(args.detections):
        raise ConfigError("--names must match --detections one to one")
    reports = {}
    for name, path in zip(names, args.detections):
        frames = _eval_frames(store.read_detections(path), manifest, records)
        rep = evaluate(frames, manifest.radar, cfg.eval.oles, cfg.eval.localization_ole)
        reports[name] = rep
        store.write_text(out / f"{name}.detection.csv", rep.detection_table())
        store.write_text(out / f"{name}.localization.csv", rep.localization_table())
        store.write_text(out / f"{name}.report.json", json.dumps(rep.to_dict(), indent=1, sort_keys=True) + "\n")
        print(f"== {name}")
        print(rep.detection_table(), end="")
        print(rep.localization_table(), end="")
    if len(reports) > 1:
        table = localization_table({name: rep.localization["all"] for name, rep in reports.items()})
        store.write_text(out / "comparison.csv", table)
        print("== localization error (m) by method")
        print(table, end="")
    return EXIT_OK


# -- export -------------------------------------------------------------------


def project(cube: np.ndarray, axes: str, plane: str, mode: str = "max") -> np.ndarray:
    """2D projection of ``cube`` (axis letters ``axes``) onto ``plane``, rows first."""
    plane = plane.upper()
    if plane not in PLANES:
        raise ConfigError(f"bad plane {plane!r}; expected one of {', '.join(PLANES)}")
    if len(axes) != cube.ndim:
        raise ConfigError(f"axes {axes!r} do not match a {cube.ndim}D cube")
    if any(c not in axes for c in plane):
        raise ConfigError(f"plane {plane} needs axes {plane[0]} and {plane[1]}, cube has {axes}")
    keep = [axes.index(c) for c in plane]
    drop = tuple(i for i in range(cube.ndim) if i not in keep)
    reduce = np.max if mode == "max" else np.sum
    img = reduce(cube, axis=drop) if drop else cube
    remaining = [i for i in range(cube.ndim) if i not in drop]
    if remaining.index(keep[0]) != 0:
        img = img.T
    return img


def to_gray(img: np.ndarray) -> np.ndarray:
    """Scale to 0..255 by the image maximum; an all-zero image stays black."""
    img = np.asarray(img, dtype=np.float64)
    peak = img.max() if img.size else 0.0
    if peak <= 0:
        return np.zeros(img.shape, dtype=np.uint8)
    return np.clip(np.floor(img / peak * 255 + 0.5), 0, 255).astype(np.uint8)


def default_axes(cube: np.ndarray, prediction: bool) -> str:
    if cube.ndim == 3:
        return "DRA"
    if cube.ndim == 4:
        return "CRAE" if prediction else "DRAE"
    raise ConfigError(f"cannot export a {cube.ndim}D array")


def cmd_export(args) -> int:
    from PIL import Image

    cube = store.read_cube(args.cube)
    axes = (args.axes or default_axes(cube, args.prediction)).upper()
    img = to_gray(project(cube, axes, args.plane, args.projection))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img, mode="L").save(out, format="PPM")
    print(f"wrote {args.plane.upper()} {args.projection}-projection {img.shape[0]}x{img.shape[1]} to {out}")
    return EXIT_OK


# -- entry --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (YAML or JSON)")
    common.add_argument("--seed", type=int, help="master seed; overrides the config")
    common.add_argument("--jobs", type=int, help="worker processes for frame-level work (default 1)")
    common.add_argument("--out", help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="radcube", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--scenario", required=True, help="scenario file (YAML or JSON)")
    s.add_argument("--write-fused", action="store_true", help="also store fused 4D cubes")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", parents=[common], help="train the network on a manifest's train split")
    t.add_argument("--manifest")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", parents=[common], help="write detections for a split")
    i.add_argument("--manifest")
    i.add_argument("--weights")
    i.add_argument("--method", choices=("model", "baseline"), default="model")
    i.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", parents=[common], help="score detection files against a manifest")
    e.add_argument("--manifest")
    e.add_argument("--detections", nargs="+", required=True, help="one or more detection files")
    e.add_argument("--names", nargs="+", help="labels for the detection files")
    e.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("export", parents=[common], help="render a cube projection as a grayscale image")
    x.add_argument("--cube", required=True, help="cube file (.cdnc)")
    x.add_argument("--plane", required=True, help="one of " + ", ".join(PLANES))
    x.add_argument("--axes", help="axis letters of the cube, e.g. DRAE; inferred from ndim by default")
    x.add_argument("--prediction", action="store_true", help="4D cube is (class, R, A, E)")
    x.add_argument("--projection", choices=("max", "sum"), default="max")
    x.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "export" and args.out is None:
        parser.error("export requires --out")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ShapeMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
