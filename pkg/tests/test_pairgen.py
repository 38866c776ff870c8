import numpy as np
import pytest
from scipy import stats

from corrcam.objects import disc, point
from corrcam.optics import ObjectSpec, OpticalConfig, theoretical_correlation_image
from corrcam.pairgen import (CameraModel, PairSourceConfig, render_frames,
                             sample_interference_pairs, sample_pairs, simulate_stack)

NOISELESS = dict(dark_rate=0.0, readout_sigma=0.0)


def uniform_object(n=32, px=40e-6):
    return ObjectSpec(np.ones((n, n)), pixel_size=px)


def test_point_object_gives_single_sum_bin():
    cfg = OpticalConfig(sensor_shape=(16, 16), f=0.1, f_prime=0.1, pixel_pitch=16e-6)
    # a point at the origin falls exactly between the 4 central sensor pixels
    obj = ObjectSpec(point(33).astype(float), pixel_size=1e-9)
    pairs = sample_pairs(obj, cfg, PairSourceConfig(minus_sigma=1.5), 1, 20000)
    np.testing.assert_allclose(pairs.r_plus, 0.0, atol=1e-3)
    idx = pairs.pixel_indices()
    i, j = idx // 16, idx % 16
    # r+ sits on a bin edge up to the sub-pixel jitter: one bin, maybe its neighbour
    assert set(i.sum(axis=1)) <= {15, 16} and set(j.sum(axis=1)) <= {15, 16}
    assert np.mean(i.sum(axis=1) == 15) > 0.99


def test_uniform_object_fills_sum_coordinates_flatly():
    # object much larger than the sensor: r+ uniform over the sensor region
    cfg = OpticalConfig(sensor_shape=(8, 8), f=0.1, f_prime=0.1, pixel_pitch=16e-6)
    obj = uniform_object(64, 16e-6)
    pairs = sample_pairs(obj, cfg, PairSourceConfig(minus_sigma=0.2), 2, 400000)
    inner = np.all(np.abs(pairs.r_plus) < 3, axis=1)
    counts, _, _ = np.histogram2d(*pairs.r_plus[inner].T, bins=6, range=[[-3, 3], [-3, 3]])
    expected = counts.mean()
    assert stats.chisquare(counts.ravel()).pvalue > 1e-3
    assert np.all(np.abs(counts - expected) < 4 * np.sqrt(expected))


def test_minus_coordinate_is_gaussian_with_configured_width():
    cfg = OpticalConfig(sensor_shape=(256, 256))
    obj = ObjectSpec(disc(16, 0.5).astype(float), pixel_size=40e-6)
    pairs = sample_pairs(obj, cfg, PairSourceConfig(minus_sigma=3.0), 3, 10 ** 6)
    sigma = pairs.r_minus.std(axis=0)
    np.testing.assert_allclose(sigma, 3.0, rtol=0.02)


def test_off_sensor_pairs_are_discarded_and_counted():
    cfg = OpticalConfig(sensor_shape=(8, 8))
    obj = ObjectSpec(disc(16, 0.5).astype(float), pixel_size=40e-6)
    src = PairSourceConfig(minus_sigma=20.0)
    pairs = sample_pairs(obj, cfg, src, 4, 10000)
    assert pairs.n_discarded == 10000 - len(pairs)
    assert pairs.n_discarded > 9000
    assert np.all(np.abs(pairs.r1) <= 4) and np.all(np.abs(pairs.r2) <= 4)
    assert len(pairs.singles) > 0 and np.all(np.abs(pairs.singles) <= 4)
    lonely = sample_pairs(obj, cfg, PairSourceConfig(minus_sigma=20.0, keep_singles=False), 4, 10000)
    assert len(lonely.singles) == 0


def test_zero_object_rejected():
    with pytest.raises(ValueError):
        sample_pairs(ObjectSpec(np.zeros((4, 4))), OpticalConfig(), PairSourceConfig(), 0, 10)


def kl(p, q):
    p = p / p.sum()
    q = q / q.sum()
    m = p > 0
    return float(np.sum(p[m] * np.log(p[m] / q[m])))


def test_sum_histogram_converges_to_target():
    cfg = OpticalConfig(sensor_shape=(16, 16), f=0.1, f_prime=0.1, pixel_pitch=40e-6)
    amp = np.zeros((16, 16))
    amp[3:13, 5:9] = 1.0
    amp[3:6, 5:13] = 0.6
    obj = ObjectSpec(amp, pixel_size=40e-6)
    # target: object intensity per object pixel, point inverted
    target = (amp ** 2)[::-1, ::-1] + 1e-300
    kls = []
    for n in (10 ** 3, 10 ** 4, 10 ** 5):
        pairs = sample_pairs(obj, cfg, PairSourceConfig(minus_sigma=0.5, keep_singles=False), 5, n)
        counts, _, _ = np.histogram2d(*pairs.r_plus.T, bins=16, range=[[-8, 8], [-8, 8]])
        kls.append(kl(counts, target))
    assert kls[0] > kls[1] > kls[2]
    assert kls[2] < 1e-3


def test_frames_are_deterministic_and_worker_independent():
    cfg = OpticalConfig(sensor_shape=(12, 12))
    obj = ObjectSpec(disc(16, 0.7).astype(float), pixel_size=40e-6)
    src = PairSourceConfig(mean_pairs_per_frame=3.0)
    a = simulate_stack(obj, cfg, src, CameraModel(), 50, seed=9, workers=1)
    b = simulate_stack(obj, cfg, src, CameraModel(), 50, seed=9, workers=3)
    c = simulate_stack(obj, cfg, src, CameraModel(), 50, seed=10)
    np.testing.assert_array_equal(a.to_array(), b.to_array())
    assert not np.array_equal(a.to_array(), c.to_array())
    assert a.metadata == b.metadata


def test_no_detection_and_no_noise_gives_zero_frames():
    cfg = OpticalConfig(sensor_shape=(8, 8))
    obj = ObjectSpec(disc(16).astype(float), pixel_size=40e-6)
    cam = CameraModel(quantum_efficiency=0.0, **NOISELESS)
    stack = simulate_stack(obj, cfg, PairSourceConfig(), cam, 20, seed=1)
    assert not stack.to_array().any()


def test_perfect_camera_counts_two_photons_per_pair():
    cfg = OpticalConfig(sensor_shape=(16, 16))
    obj = ObjectSpec(disc(16, 0.4).astype(float), pixel_size=40e-6)
    pairs = sample_pairs(obj, cfg, PairSourceConfig(minus_sigma=0.5, keep_singles=False), 2, 500)
    cam = CameraModel(quantum_efficiency=1.0, gain=7.0, gain_model="deterministic", **NOISELESS)
    stack = render_frames(pairs, cam, 40, seed=3)
    totals = stack.to_array().sum(axis=(1, 2))
    assert totals.sum() == pytest.approx(7.0 * 2 * len(pairs))
    assert np.allclose(totals % 14.0, 0.0)


def test_mean_intensity_matches_model():
    cfg = OpticalConfig(sensor_shape=(16, 16))
    obj = ObjectSpec(disc(16, 0.4).astype(float), pixel_size=40e-6)
    src = PairSourceConfig(mean_pairs_per_frame=4.0, minus_sigma=1.0, keep_singles=False)
    cam = CameraModel(dark_rate=0.0)
    m = 10 ** 4
    stack = simulate_stack(obj, cfg, src, cam, m, seed=11)
    frames = stack.to_array()
    kept = stack.metadata["n_pairs"] / (stack.metadata["n_pairs"] + stack.metadata["n_discarded"])
    expected = 4.0 * kept * 2 * 0.7 * 1000.0 / 256
    per_frame = frames.mean(axis=(1, 2))
    sigma = per_frame.std(ddof=1) / np.sqrt(m)
    assert abs(per_frame.mean() - expected) < 3 * sigma


def test_default_dark_rate_makes_noise_a_tenth_of_events():
    cam = CameraModel()
    rate = cam.resolved_dark_rate(photons_per_frame=8.0, n_pixels=64)
    detected = 8.0 * 0.7
    assert rate * 64 / (rate * 64 + detected) == pytest.approx(0.1)
    assert CameraModel(dark_rate=0.5).resolved_dark_rate(8.0, 64) == 0.5


def test_threshold_binarizes():
    cfg = OpticalConfig(sensor_shape=(8, 8))
    obj = ObjectSpec(disc(16).astype(float), pixel_size=40e-6)
    stack = simulate_stack(obj, cfg, PairSourceConfig(), CameraModel(threshold=200.0), 30, seed=2)
    assert set(np.unique(stack.to_array())) <= {0.0, 1.0}


def test_render_rejects_single_frame():
    pairs = sample_pairs(ObjectSpec(disc(8).astype(float)), OpticalConfig(sensor_shape=(8, 8)),
                         PairSourceConfig(), 0, 10)
    with pytest.raises(ValueError):
        render_frames(pairs, CameraModel(), 1, seed=0)


@pytest.mark.parametrize("bad", [dict(mean_pairs_per_frame=0), dict(minus_sigma=-1),
                                 dict(mode="other"), dict(theta=2 * np.pi)])
def test_source_validation(bad):
    with pytest.raises(ValueError):
        PairSourceConfig(**bad)


@pytest.mark.parametrize("bad", [dict(quantum_efficiency=1.5), dict(dark_rate=-1),
                                 dict(gain=0), dict(gain_model="poisson")])
def test_camera_validation(bad):
    with pytest.raises(ValueError):
        CameraModel(**bad)


# -- interference mode ---------------------------------------------------------

def interference_setup(n=16):
    cfg = OpticalConfig(sensor_shape=(n, n), pixel_pitch=16e-6)
    return cfg


def test_zero_object_gives_uniform_reference():
    cfg = interference_setup()
    obj = ObjectSpec(np.zeros((8, 8)), pixel_size=16e-6)
    src = PairSourceConfig(mode="interference", minus_sigma=0.3, keep_singles=False)
    pairs = sample_interference_pairs(obj, cfg, src, 1, 200000)
    counts, _, _ = np.histogram2d(*pairs.r_plus.T, bins=8, range=[[-4, 4], [-4, 4]])
    assert counts.min() > 0.9 * counts.mean() and counts.max() < 1.1 * counts.mean()


def test_destructive_interference_empties_the_support():
    cfg = interference_setup()
    amp = np.zeros((8, 8))
    amp[2:6, 2:6] = 1.0
    obj = ObjectSpec(amp, pixel_size=16e-6)
    src = PairSourceConfig(mode="interference", theta=np.pi / 2, minus_sigma=0.3)
    pairs = sample_interference_pairs(obj, cfg, src, 1, 50000)
    inside = np.all(np.abs(pairs.r_plus) < 1.5, axis=1)
    assert not inside.any()
    assert len(pairs) > 0


def test_fully_destructive_pattern_raises():
    cfg = interference_setup()
    obj = ObjectSpec(np.ones((8, 8)), pixel_size=16e-6)
    src = PairSourceConfig(mode="interference", theta=np.pi / 2)
    with pytest.raises(ValueError, match="zero"):
        sample_interference_pairs(obj, cfg, src, 1, 100)


def test_count_inside_support_oscillates_with_theta():
    cfg = interference_setup()
    amp = np.zeros((8, 8))
    amp[2:6, 2:6] = 1.0
    obj = ObjectSpec(amp, pixel_size=16e-6)
    n = 100000
    inside_share = 16 / 64
    for k in range(8):
        theta = k * np.pi / 8
        src = PairSourceConfig(mode="interference", theta=theta, minus_sigma=0.3,
                               keep_singles=False)
        pairs = sample_interference_pairs(obj, cfg, src, k, n)
        emitted_inside = np.all(np.abs(pairs.r_plus) < 2, axis=1).sum() + 0.0
        expected = n * inside_share * (2 + 2 * np.cos(2 * theta))
        # off-sensor losses are negligible for a 0.3 px spread on a 16 px sensor
        assert abs(emitted_inside - expected) <= 4 * np.sqrt(expected) + 0.002 * expected


def test_modes_are_checked():
    cfg = interference_setup()
    obj = ObjectSpec(np.ones((8, 8)), pixel_size=16e-6)
    with pytest.raises(ValueError):
        sample_interference_pairs(obj, cfg, PairSourceConfig(), 1, 10)
    with pytest.raises(ValueError):
        sample_pairs(obj, cfg, PairSourceConfig(mode="interference"), 1, 10)


def test_intensity_hides_object_with_broad_minus_coordinate():
    from corrcam.analysis import ncc
    from corrcam.estimator import intensity_image
    cfg = OpticalConfig(sensor_shape=(16, 16), f=0.1, f_prime=0.1, pixel_pitch=40e-6)
    amp = np.zeros((16, 16))
    amp[4:12, 6:10] = 1.0
    obj = ObjectSpec(amp, pixel_size=40e-6)
    theory = theoretical_correlation_image(obj, cfg)[::2, ::2]
    narrow = simulate_stack(obj, cfg, PairSourceConfig(minus_sigma=0.3), CameraModel(), 3000, 1)
    broad = simulate_stack(obj, cfg, PairSourceConfig(minus_sigma=64, mean_pairs_per_frame=40),
                           CameraModel(), 3000, 1)
    assert ncc(intensity_image(narrow), theory) > 0.8
    assert ncc(intensity_image(broad), theory) < 0.2
