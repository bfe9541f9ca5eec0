import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import naive_dft, naive_spectrum, pair_sum
from radcube.dsp import RadarCube, compress_bins, extract_cube, spectrum
from radcube.errors import ShapeMismatch
from radcube.sim import DroneClass, RadarConfig, RadarId, RawFrame, Scene, Target, simulate_frame

FULL = RadarConfig()
DESK = RadarConfig().desk()


def small_config(chirps, samples, antennas, angle_bins, window):
    # Only the FFT geometry matters here; range coverage is not exercised.
    return RadarConfig(
        num_chirps=chirps,
        num_samples=samples,
        num_virtual_antennas=antennas,
        angle_bins=angle_bins,
        max_range_m=samples * 0.058,
        window=window,
    )


def test_zero_frame_gives_zero_cube():
    frame = RawFrame(np.zeros((DESK.num_chirps, DESK.num_samples, DESK.num_virtual_antennas), complex), RadarId.HORIZONTAL)
    cube = extract_cube(frame, DESK)
    assert cube.shape == DESK.cube_dims
    assert not np.any(cube.data)


def test_full_scale_shape_and_metadata():
    frame = simulate_frame(Scene((Target("small", (0, 5.8, 0)),)), FULL, RadarId.HORIZONTAL)
    cube = extract_cube(frame, FULL)
    assert cube.shape == (128, 128, 32)
    assert cube.range_m_per_bin == pytest.approx(0.116)
    assert cube.doppler_mps_per_bin == pytest.approx(0.094)
    assert (cube.zero_doppler_bin, cube.boresight_bin) == (64, 16)
    assert not cube.data.flags.writeable


def test_stationary_boresight_target_has_unique_max():
    frame = simulate_frame(Scene((Target("small", (0, 5.8, 0)),)), FULL, RadarId.HORIZONTAL)
    cube = extract_cube(frame, FULL).data
    oracle = pair_sum(pair_sum(np.abs(naive_spectrum(frame.samples, 256, 32, True)), 0), 1)
    peak = np.unravel_index(np.argmax(cube), cube.shape)
    assert peak == (64, 50, 16)
    assert peak == np.unravel_index(np.argmax(oracle), oracle.shape)
    assert np.count_nonzero(cube == cube.max()) == 1


def test_shape_mismatch():
    frame = RawFrame(np.zeros((3, 4, 5), complex), RadarId.HORIZONTAL)
    with pytest.raises(ShapeMismatch):
        extract_cube(frame, DESK)


def test_compress_examples():
    np.testing.assert_array_equal(compress_bins(np.ones(4)), [2.0, 2.0])
    impulse = np.zeros(256)
    impulse[7] = 1.0
    out = compress_bins(impulse)
    assert out.shape == (128,)
    assert np.flatnonzero(out).tolist() == [3]
    assert FULL.range_resolution_m == pytest.approx(2 * FULL.native_range_resolution_m)
    with pytest.raises(ValueError):
        compress_bins(np.ones(5))


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 6).map(lambda n: 2 * n), st.integers(1, 4)), elements=st.floats(0, 1e3)))
def test_compress_preserves_total(x):
    out = compress_bins(x, 2, axis=0)
    assert out.shape == (x.shape[0] // 2, x.shape[1])
    np.testing.assert_allclose(out.sum(axis=0), x.sum(axis=0), rtol=1e-12, atol=1e-9)
    np.testing.assert_array_equal(out, pair_sum(x, 0))


def _random_frame(rng, chirps, samples, antennas):
    shape = (chirps, samples, antennas)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@settings(max_examples=30, deadline=None)
@given(
    st.integers(1, 33),
    st.sampled_from([2, 4, 8, 16, 64, 128, 256]),
    st.integers(1, 8),
    st.booleans(),
    st.integers(0, 2**32 - 1),
)
def test_fft_chain_matches_dft_oracle(chirps, samples, antennas, window, seed):
    # Hann windows of length <= 2 are all zero, leaving nothing to compare.
    assume(not window or (chirps >= 3 and samples >= 4))
    cfg = small_config(chirps, samples, antennas, max(antennas, 8), window)
    x = _random_frame(np.random.default_rng(seed), chirps, samples, antennas)
    got = spectrum(x, cfg)
    want = naive_spectrum(x, cfg.doppler_fft_size, cfg.angle_bins, window)
    err = np.linalg.norm(got - want) / np.linalg.norm(want)
    assert err < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 256), st.integers(0, 2**32 - 1))
def test_dft_oracle_self_check_1d(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    err = np.linalg.norm(np.fft.fft(x) - naive_dft(x)) / np.linalg.norm(x)
    assert err < 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 33), st.sampled_from([4, 16, 64]), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_parseval_without_window(chirps, samples, antennas, seed):
    cfg = small_config(chirps, samples, antennas, 8, False)
    x = _random_frame(np.random.default_rng(seed), chirps, samples, antennas)
    got = spectrum(x, cfg)
    # Zero padding keeps Parseval exact with the padded lengths as the scale.
    scale = cfg.num_samples * cfg.doppler_fft_size * cfg.angle_bins
    np.testing.assert_allclose(np.sum(np.abs(got) ** 2), scale * np.sum(np.abs(x) ** 2), rtol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 63), st.integers(-6, 6), st.integers(-3, 3))
def test_tone_peak_matches_analytic_bin(rbin, dbin, abin):
    cfg = small_config(15, 64, 8, 16, True)
    c = np.arange(cfg.num_chirps)[:, None, None]
    s = np.arange(cfg.num_samples)[None, :, None]
    k = np.arange(cfg.num_virtual_antennas)[None, None, :]
    x = np.exp(2j * np.pi * (rbin * s / 64 + dbin * c / 16 + abin * k / 16))
    spec = np.abs(spectrum(x, cfg))
    peak = np.unravel_index(np.argmax(spec), spec.shape)
    assert abs(peak[0] - (8 + dbin)) <= 1
    assert abs(peak[1] - rbin) <= 1
    assert abs(peak[2] - (8 + abin)) <= 1


def test_cube_rejects_wrong_rank():
    with pytest.raises(ShapeMismatch):
        RadarCube(np.zeros((2, 2)), RadarId.HORIZONTAL, 0.1, 0.1, 0.1)


def test_magnitude_cube_nonnegative_and_compressed_after_abs():
    frame = simulate_frame(Scene((Target(DroneClass.LARGE, (0.4, 2.0, 0.1)),), 0.01, 1), DESK, RadarId.VERTICAL)
    cube = extract_cube(frame, DESK).data
    assert np.all(cube >= 0)
    want = pair_sum(pair_sum(np.abs(naive_spectrum(frame.samples, DESK.doppler_fft_size, DESK.angle_bins, True)), 0), 1)
    np.testing.assert_allclose(cube, want, rtol=1e-9, atol=1e-9 * want.max())
