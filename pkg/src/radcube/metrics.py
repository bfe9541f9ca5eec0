"""OLE matching, AP/AR, polar/Cartesian conversion and range-banded localisation error."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from radcube.errors import UndefinedMetric
from radcube.labels import PolarPosition
from radcube.sim import DroneClass, RadarConfig

OLE_THRESHOLDS = (1, 3, 5)
OVERALL_OLES = (1, 2, 3, 4, 5)
RANGE_BANDS_M = ((0.0, 3.0), (3.0, 6.0), (6.0, 9.0), (9.0, 12.0), (12.0, 15.0))


def band_label(band: tuple[float, float]) -> str:
    return f"{band[0]:g}-{band[1]:g}m"


def polar_bins_to_cartesian(det, cfg: RadarConfig) -> np.ndarray:
    """(x, y, z) metres of a bin position; accepts a detection or an (r, a, e) triple.

    Angle bins are direction cosines: azimuth = arcsin(x / range) and
    elevation = arcsin(z / range).
    """
    r, a, e = getattr(det, "bins", det)
    _, n_a, n_e = cfg.label_dims
    rng = float(r) * cfg.range_resolution_m
    u = float(np.clip((float(a) - n_a / 2) * cfg.sine_per_bin, -1.0, 1.0))
    v = float(np.clip((float(e) - n_e / 2) * cfg.sine_per_bin, -1.0, 1.0))
    az, el = math.asin(u), math.asin(v)
    x = rng * math.sin(az)
    z = rng * math.sin(el)
    y = rng * math.sqrt(max(0.0, 1.0 - u * u - v * v))
    return np.array([x, y, z])


def chebyshev(p: Sequence[int], q: Sequence[int]) -> int:
    return max(abs(int(i) - int(j)) for i, j in zip(p, q))


def _pred_order(preds):
    def key(i):
        p = preds[i]
        return (-p.confidence, -1 if p.cls is None else int(p.cls), tuple(p.bins))

    return sorted(range(len(preds)), key=key)


@dataclass
class MatchResult:
    pairs: list = field(default_factory=list)  # (detection, PolarPosition)
    false_positives: list = field(default_factory=list)
    false_negatives: list = field(default_factory=list)
    scored: list = field(default_factory=list)  # (class, confidence, is_tp) in match order

    def counts(self, cls: DroneClass | None = None) -> tuple[int, int, int]:
        def keep(c):
            return cls is None or c == cls

        tp = sum(1 for p, _ in self.pairs if keep(p.cls))
        fp = sum(1 for p in self.false_positives if keep(p.cls))
        fn = sum(1 for g in self.false_negatives if keep(g.cls))
        return tp, fp, fn


def match(preds: Sequence, gts: Sequence[PolarPosition], ole: int) -> MatchResult:
    """Greedy one-to-one matching in descending confidence.

    A prediction may take any unmatched same-class ground truth whose rounded
    bins are within ``ole`` on every axis; the nearest one is taken
    (Chebyshev, then Euclidean, then list order). Predictions without a
    class (``cls is None``) may take a ground truth of any class.
    """
    taken = [False] * len(gts)
    result = MatchResult()
    for i in _pred_order(preds):
        p = preds[i]
        best, best_key = None, None
        for j, g in enumerate(gts):
            if taken[j] or (p.cls is not None and g.cls != p.cls):
                continue
            cheb = chebyshev(p.bins, g.bins)
            if cheb > ole:
                continue
            key = (cheb, sum((float(x) - y) ** 2 for x, y in zip(p.bins, g.bins)), j)
            if best_key is None or key < best_key:
                best, best_key = j, key
        if best is None:
            result.false_positives.append(p)
            result.scored.append((p.cls, p.confidence, False))
        else:
            taken[best] = True
            result.pairs.append((p, gts[best]))
            result.scored.append((p.cls, p.confidence, True))
    result.false_negatives = [g for j, g in enumerate(gts) if not taken[j]]
    return result


def average_precision(confidences: Sequence[float], is_tp: Sequence[bool], num_gt: int) -> tuple[float, float]:
    """All-points interpolated AP and the recall reached at the lowest threshold."""
    if num_gt <= 0:
        raise UndefinedMetric("no ground-truth instances")
    if len(confidences) == 0:
        return 0.0, 0.0
    order = np.argsort(-np.asarray(confidences, dtype=float), kind="stable")
    tp = np.asarray(is_tp, dtype=float)[order]
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    recall = ctp / num_gt
    precision = ctp / (ctp + cfp)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    ap = float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))
    return ap, float(recall[-1])


@dataclass
class APAR:
    ap: float
    ar: float
    per_class: dict  # DroneClass -> (ap, ar)


def ap_ar(frames: Iterable[tuple[Sequence, Sequence[PolarPosition]]], ole: int, classes: Sequence[DroneClass] | None = None) -> APAR:
    """Per-class AP/AR over a set of frames, macro-averaged.

    Classes with no ground truth are left out of the average; if no requested
    class has any, :class:`UndefinedMetric` is raised.
    """
    classes = list(DroneClass) if classes is None else [DroneClass.parse(c) for c in classes]
    scored = {c: ([], []) for c in classes}
    num_gt = {c: 0 for c in classes}
    for preds, gts in frames:
        res = match(preds, gts, ole)
        for cls, conf, tp in res.scored:
            if cls in scored:
                scored[cls][0].append(conf)
                scored[cls][1].append(tp)
        for g in gts:
            if g.cls in num_gt:
                num_gt[g.cls] += 1
    per_class = {}
    for c in classes:
        if num_gt[c]:
            per_class[c] = average_precision(scored[c][0], scored[c][1], num_gt[c])
    if not per_class:
        raise UndefinedMetric("no ground-truth instances for the requested classes")
    return APAR(
        ap=float(np.mean([v[0] for v in per_class.values()])),
        ar=float(np.mean([v[1] for v in per_class.values()])),
        per_class=per_class,
    )


def _band_of(range_m: float, bands) -> tuple[float, float] | None:
    for lo, hi in bands:
        if lo <= range_m < hi or (hi == bands[-1][1] and range_m == hi):
            return (lo, hi)
    return None


@dataclass
class LocalizationStats:
    overall: float | None
    bands: dict  # band label -> mean error (absent bands omitted)
    counts: dict  # band label -> number of pairs


def localization_errors(pairs, cfg: RadarConfig) -> list[tuple[float, float]]:
    """(ground-truth range, Euclidean error) per matched pair, metres."""
    out = []
    for pred, gt in pairs:
        if gt.position is not None:
            truth = np.asarray(gt.position, dtype=float)
        else:
            truth = polar_bins_to_cartesian((gt.r, gt.a, gt.e), cfg)
        est = getattr(pred, "cartesian", None)
        est = polar_bins_to_cartesian(pred, cfg) if est is None else np.asarray(est, dtype=float)
        out.append((float(np.linalg.norm(truth)), float(np.linalg.norm(est - truth))))
    return out


def localization_stats(errors: Sequence[tuple[float, float]], bands=RANGE_BANDS_M) -> LocalizationStats:
    per_band: dict[str, list[float]] = {}
    for rng, err in errors:
        band = _band_of(rng, bands)
        if band is not None:
            per_band.setdefault(band_label(band), []).append(err)
    ordered = [band_label(b) for b in bands if band_label(b) in per_band]
    return LocalizationStats(
        overall=float(np.mean([e for _, e in errors])) if errors else None,
        bands={k: float(np.mean(per_band[k])) for k in ordered},
        counts={k: len(per_band[k]) for k in ordered},
    )


@dataclass
class EvalReport:
    ap: dict  # class label ("small", "large", "all") -> {ole: value}
    ar: dict
    overall_ap: dict  # class label -> mean over OVERALL_OLES
    overall_ar: dict
    localization: dict  # class label -> LocalizationStats
    localization_ole: int = 3

    def to_dict(self) -> dict:
        return {
            "ap": {k: {str(o): v for o, v in d.items()} for k, d in self.ap.items()},
            "ar": {k: {str(o): v for o, v in d.items()} for k, d in self.ar.items()},
            "overall_ap_mean_ole_1_to_5": self.overall_ap,
            "overall_ar_mean_ole_1_to_5": self.overall_ar,
            "localization_ole": self.localization_ole,
            "localization_m": {
                k: {"overall": s.overall, "bands": s.bands, "counts": s.counts} for k, s in self.localization.items()
            },
        }

    def detection_table(self) -> str:
        """Delimited AP/AR table, one row per class."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        oles = sorted(next(iter(self.ap.values())).keys()) if self.ap else []
        w.writerow(["class", "ap_overall"] + [f"ap_ole{o}" for o in oles] + ["ar_overall"] + [f"ar_ole{o}" for o in oles])
        for k in self.ap:
            w.writerow(
                [k, _fmt(self.overall_ap.get(k))]
                + [_fmt(self.ap[k][o]) for o in oles]
                + [_fmt(self.overall_ar.get(k))]
                + [_fmt(self.ar[k][o]) for o in oles]
            )
        return buf.getvalue()

    def localization_table(self, bands=RANGE_BANDS_M) -> str:
        return localization_table({k: s for k, s in self.localization.items()}, bands)


def _fmt(v) -> str:
    return "" if v is None else f"{v:.4f}"


def localization_table(rows: dict, bands=RANGE_BANDS_M) -> str:
    """Delimited table, one row per method/class, one column per range band."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    labels = [band_label(b) for b in bands]
    w.writerow(["method", "overall"] + labels)
    for name, s in rows.items():
        w.writerow([name, _fmt(s.overall)] + [_fmt(s.bands.get(lb)) for lb in labels])
    return buf.getvalue()


def evaluate(
    frames: Sequence[tuple[Sequence, Sequence[PolarPosition]]],
    cfg: RadarConfig,
    oles: Sequence[int] = OVERALL_OLES,
    localization_ole: int = 3,
    bands=RANGE_BANDS_M,
) -> EvalReport:
    frames = list(frames)
    present = [c for c in DroneClass if any(g.cls == c for _, gts in frames for g in gts)]
    if not present:
        raise UndefinedMetric("no ground-truth instances in any frame")
    ap: dict = {c.label: {} for c in present}
    ar: dict = {c.label: {} for c in present}
    ap["all"], ar["all"] = {}, {}
    for ole in oles:
        res = ap_ar(frames, ole, present)
        for c, (a, r) in res.per_class.items():
            ap[c.label][ole] = a
            ar[c.label][ole] = r
        ap["all"][ole] = res.ap
        ar["all"][ole] = res.ar
    overall_ap = {k: float(np.mean(list(d.values()))) for k, d in ap.items()}
    overall_ar = {k: float(np.mean(list(d.values()))) for k, d in ar.items()}

    by_class: dict = {c.label: [] for c in present}
    by_class["all"] = []
    for preds, gts in frames:
        for pred, gt in match(preds, gts, localization_ole).pairs:
            errs = localization_errors([(pred, gt)], cfg)
            by_class[gt.cls.label].extend(errs)
            by_class["all"].extend(errs)
    loc = {k: localization_stats(v, bands) for k, v in by_class.items()}
    return EvalReport(ap=ap, ar=ar, overall_ap=overall_ap, overall_ar=overall_ar, localization=loc, localization_ole=localization_ole)
