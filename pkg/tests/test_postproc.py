import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import brute_lnms, support_voxels
from radcube.errors import ShapeMismatch
from radcube.labels import LABEL_SIGMA, PolarPosition, gaussian_mask, make_ground_truth
from radcube.postproc import (
    CROP_SIZE,
    Detection,
    calculate_overlap_ratio,
    crop,
    detect,
    filter_outliers,
    lnms,
    suppression_radius,
)
from radcube.sim import DroneClass, RadarConfig

DESK = RadarConfig().desk()
DIMS = DESK.label_dims


def test_suppression_radii():
    assert suppression_radius(DroneClass.SMALL) == pytest.approx(math.sqrt(-2 * 9 * math.log(0.05)))
    assert suppression_radius(DroneClass.LARGE) == pytest.approx(math.sqrt(-2 * 25 * math.log(0.05)))


def test_lnms_single_peak():
    gt = make_ground_truth([PolarPosition(10, 5, 6, DroneClass.SMALL)], DIMS)
    dets = lnms(gt[0], DroneClass.SMALL, DESK)
    assert [d.bins for d in dets] == [(10, 5, 6)]
    assert dets[0].confidence == 1.0
    assert dets[0].cartesian is not None


def test_lnms_empty_and_shape():
    assert lnms(np.zeros(DIMS), DroneClass.SMALL) == []
    assert lnms(np.full(DIMS, 0.01), DroneClass.SMALL) == []
    with pytest.raises(ShapeMismatch):
        lnms(np.zeros((2, 2)), DroneClass.SMALL)


def test_lnms_tie_breaks_lexicographically():
    cube = np.zeros(DIMS)
    cube[20, 3, 3] = 0.5
    cube[2, 9, 9] = 0.5
    dets = lnms(cube, DroneClass.SMALL)
    assert [d.bins for d in dets] == [(2, 9, 9), (20, 3, 3)]


@settings(max_examples=40, deadline=None)
@given(
    hnp.arrays(
        np.float64,
        st.tuples(st.integers(1, 12), st.integers(1, 12), st.integers(1, 12)),
        elements=st.sampled_from([0.0, 0.005, 0.02, 0.3, 0.5, 0.7, 0.9, 1.0]),
    ),
    st.sampled_from(list(DroneClass)),
)
def test_lnms_matches_brute_force_rescan(cube, cls):
    got = [(d.bins, d.confidence) for d in lnms(cube, cls)]
    want = brute_lnms(cube, suppression_radius(cls))
    assert got == want


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, (8, 8, 8), elements=st.floats(0, 1)), st.sampled_from(list(DroneClass)))
def test_lnms_peaks_descend_and_are_separated(cube, cls):
    dets = lnms(cube, cls)
    conf = [d.confidence for d in dets]
    assert conf == sorted(conf, reverse=True)
    rad = suppression_radius(cls)
    for i, a in enumerate(dets):
        assert a.confidence > 0.01
        for b in dets[i + 1 :]:
            assert math.dist(a.bins, b.bins) > rad


def test_overlap_ratio_unit_values():
    mask = gaussian_mask((3, 3, 3), 1.0, (7, 7, 7))
    assert calculate_overlap_ratio(mask, mask) == 1.0
    other = np.zeros((7, 7, 7))
    other[0, 0, 0] = 1.0
    disjoint = np.zeros((7, 7, 7))
    disjoint[6, 6, 6] = 1.0
    assert calculate_overlap_ratio(other, disjoint) == 0.0
    assert calculate_overlap_ratio(np.zeros((7, 7, 7)), np.zeros((7, 7, 7))) == 0.0
    with pytest.raises(ShapeMismatch):
        calculate_overlap_ratio(np.zeros((7, 7, 7)), np.zeros((5, 5, 5)))


def test_nested_support_ratio_is_voxel_count_ratio():
    small = crop(gaussian_mask((10, 8, 8), LABEL_SIGMA[DroneClass.SMALL], DIMS), (10, 8, 8))
    large = crop(gaussian_mask((10, 8, 8), LABEL_SIGMA[DroneClass.LARGE], DIMS), (10, 8, 8))
    n_small = support_voxels(1.0)
    n_large_in_crop = support_voxels(2.0, half=CROP_SIZE // 2)
    assert (n_small, n_large_in_crop) == (57, np.count_nonzero(large > 0.05))
    assert calculate_overlap_ratio(small, large) == pytest.approx(n_small / n_large_in_crop)


def test_isolated_spike_is_rejected():
    pred = np.zeros(DIMS)
    pred[10, 8, 8] = 0.9
    dets = lnms(pred, DroneClass.SMALL)
    assert len(dets) == 1
    ratio = calculate_overlap_ratio(crop(gaussian_mask((10, 8, 8), 1.0, DIMS), (10, 8, 8)), crop(pred, (10, 8, 8)))
    assert ratio == pytest.approx(1 / 57)
    assert filter_outliers(pred, dets) == []


def test_crop_pads_with_zeros_at_edges():
    cube = np.ones((5, 5, 5))
    c = crop(cube, (0, 0, 0))
    assert c.shape == (7, 7, 7)
    assert c.sum() == 4 * 4 * 4
    assert c[3, 3, 3] == 1.0 and c[0, 0, 0] == 0.0


@st.composite
def label_scenes(draw):
    """1-4 targets, mixed classes, separated beyond both suppression radii."""
    n = draw(st.integers(1, 4))
    targets = []
    for _ in range(50):
        if len(targets) == n:
            break
        cls = draw(st.sampled_from(list(DroneClass)))
        p = (draw(st.integers(0, DIMS[0] - 1)), draw(st.integers(0, DIMS[1] - 1)), draw(st.integers(0, DIMS[2] - 1)))
        if all(math.dist(p, t.bins) > suppression_radius(DroneClass.LARGE) + 1 for t in targets):
            targets.append(PolarPosition(*p, cls=cls))
    return targets


@settings(max_examples=200, deadline=None)
@given(label_scenes())
def test_ground_truth_is_a_fixed_point(targets):
    gt = make_ground_truth(targets, DIMS)
    dets = detect(gt, DESK)
    got = sorted((int(d.cls), d.bins) for d in dets)
    want = sorted((int(t.cls), t.bins) for t in targets)
    assert got == want


def test_detect_runs_per_class():
    targets = [PolarPosition(8, 4, 4, DroneClass.SMALL), PolarPosition(8, 4, 4, DroneClass.LARGE)]
    dets = detect(make_ground_truth(targets, DIMS), DESK)
    assert sorted((int(d.cls), d.bins) for d in dets) == [(0, (8, 4, 4)), (1, (8, 4, 4))]


def test_detection_allows_unclassified():
    d = Detection(cls=None, bins=(1, 2, 3), confidence=1.0)
    assert d.cls is None
