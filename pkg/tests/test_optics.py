import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrcam.exceptions import AliasingError, QuadratureError
from corrcam.objects import gaussian_amplitude, grating, l_shape, point
from corrcam.optics import (ObjectSpec, OpticalConfig, fourier_image, g2_general_distance_1d,
                            sum_grid_transmission, theoretical_correlation_image, unit_peak,
                            wrap_phase)


def nearest_neighbour_theory(obj, cfg):
    """Independent resampler: nearest object sample to -(f/f') r+, squared."""
    nx, ny = cfg.sensor_shape
    out = np.zeros((2 * nx - 1, 2 * ny - 1))
    n0, n1 = obj.shape
    for k in range(2 * nx - 1):
        for l in range(2 * ny - 1):
            rx = (k - (nx - 1)) * cfg.pixel_pitch / 2
            ry = (l - (ny - 1)) * cfg.pixel_pitch / 2
            a = -cfg.f / cfg.f_prime * rx / obj.pixel_size + (n0 - 1) / 2
            b = -cfg.f / cfg.f_prime * ry / obj.pixel_size + (n1 - 1) / 2
            ia, ib = int(np.floor(a + 0.5)), int(np.floor(b + 0.5))
            if 0 <= ia < n0 and 0 <= ib < n1:
                out[k, l] = obj.amplitude[ia, ib] ** 2
    return out / out.max()


def test_object_spec_extent_and_validation():
    obj = ObjectSpec(np.ones((4, 6)), pixel_size=2e-5)
    assert obj.extent == pytest.approx((8e-5, 1.2e-4))
    with pytest.raises(ValueError):
        ObjectSpec(-np.ones((2, 2)))
    with pytest.raises(ValueError):
        ObjectSpec(np.ones((2, 2)), phase=np.zeros((3, 3)))
    with pytest.raises(ValueError):
        ObjectSpec(np.ones((2, 2)), pixel_size=0)


def test_phase_is_wrapped_into_half_open_interval():
    obj = ObjectSpec(np.ones(4), phase=np.array([np.pi, -np.pi, 3 * np.pi, 0.5]))
    np.testing.assert_allclose(obj.phase, [np.pi, np.pi, np.pi, 0.5])


def test_optical_config_invariants():
    cfg = OpticalConfig()
    assert cfg.lambda_spdc == pytest.approx(2 * cfg.lambda_pump)
    assert cfg.d == cfg.f and cfg.d_prime == cfg.f_prime
    with pytest.raises(ValueError):
        OpticalConfig(f=-1)
    with pytest.raises(ValueError):
        OpticalConfig(lambda_spdc=700e-9)


def test_delta_object_gives_flat_unit_field():
    # a delta is maximally broadband, so the band-edge guard must be off
    field = fourier_image(ObjectSpec(point(33), pixel_size=1e-5), OpticalConfig(),
                          check_aliasing=False)
    np.testing.assert_allclose(np.abs(field.values), 1.0, atol=1e-12)


@pytest.mark.parametrize("amplitude", [gaussian_amplitude(32, 5.0), l_shape(32).astype(float)])
def test_parseval(amplitude):
    obj = ObjectSpec(amplitude, pixel_size=1e-5)
    field = fourier_image(obj, OpticalConfig(), check_aliasing=False)
    expected = amplitude.size * np.sum(amplitude ** 2)
    assert field.energy == pytest.approx(expected, rel=1e-10)


def test_gaussian_maps_to_gaussian_of_predicted_width():
    n, px, s = 128, 1e-5, 6.0
    x = (np.arange(n) - (n - 1) / 2) * px
    sigma = s * px
    obj = ObjectSpec(np.exp(-x ** 2 / (2 * sigma ** 2)), pixel_size=px)
    cfg = OpticalConfig()
    field = fourier_image(obj, cfg)
    intensity = np.abs(field.values) ** 2
    xc = field.axes[0]
    width = np.sqrt(np.sum(xc ** 2 * intensity) / np.sum(intensity))
    # |FT|^2 of a Gaussian amplitude of std sigma has std lambda f / (4 pi sigma);
    # the amplitude itself has std lambda f / (2 pi sigma)
    assert width * np.sqrt(2) == pytest.approx(cfg.lambda_pump * cfg.f / (2 * np.pi * sigma), rel=1e-3)


def test_undersampled_object_raises_aliasing():
    rough = np.zeros((32, 32))
    rough[::2, ::2] = 1.0
    with pytest.raises(AliasingError):
        fourier_image(ObjectSpec(rough, pixel_size=1e-5), OpticalConfig())


def test_theory_of_delta_is_single_central_peak():
    cfg = OpticalConfig(sensor_shape=(9, 9))
    image = theoretical_correlation_image(ObjectSpec(point(33), pixel_size=1e-5), cfg)
    assert image.shape == (17, 17)
    assert np.unravel_index(image.argmax(), image.shape) == (8, 8)
    assert np.count_nonzero(image) == 1


def test_l_shape_matches_independent_resampler():
    # magnification f'/f = 1/2 and object pixel = 2 sum-grid bins -> nodes align
    obj = ObjectSpec(l_shape(32).astype(float), pixel_size=32e-6)
    cfg = OpticalConfig(f=0.1, f_prime=0.05, pixel_pitch=16e-6, sensor_shape=(32, 32))
    got = theoretical_correlation_image(obj, cfg)
    np.testing.assert_allclose(got[::2, ::2], nearest_neighbour_theory(obj, cfg)[::2, ::2],
                               atol=1e-12)


def test_l_shape_is_point_inverted():
    obj = ObjectSpec(l_shape(32).astype(float), pixel_size=32e-6)
    cfg = OpticalConfig(f=0.1, f_prime=0.1, pixel_pitch=32e-6, sensor_shape=(32, 32))
    image = theoretical_correlation_image(obj, cfg)
    # unit magnification: every other bin lands on an object node, reversed
    np.testing.assert_allclose(image[::2, ::2][:31, :31][::-1, ::-1] > 0.5,
                               obj.amplitude[1:, 1:] > 0.5)


def test_point_displacement_is_inverted_and_magnified():
    obj = ObjectSpec(point(65, offset=(8, 0)).astype(float), pixel_size=20e-6)
    cfg = OpticalConfig(f=0.1, f_prime=0.05, pixel_pitch=10e-6, sensor_shape=(33, 33))
    image = theoretical_correlation_image(obj, cfg)
    k, l = np.unravel_index(image.argmax(), image.shape)
    r_plus = (k - 32) * cfg.pixel_pitch / 2
    assert r_plus == pytest.approx(-cfg.magnification * 8 * 20e-6)
    assert l == 32


def test_grating_gives_stripes():
    # 1.25 lp/mm: period 0.8 mm = 20 samples of 40 um
    obj = ObjectSpec(grating(128, period=20).astype(float), pixel_size=40e-6)
    cfg = OpticalConfig(f=0.1, f_prime=0.1, pixel_pitch=40e-6, sensor_shape=(64, 64))
    image = theoretical_correlation_image(obj, cfg)
    rows = image[40:80, :]
    assert np.allclose(rows, rows[0])  # constant along the stripe direction
    spectrum = np.abs(np.fft.rfft(rows[0] - rows[0].mean()))
    period_bins = rows.shape[1] / spectrum.argmax()
    assert period_bins == pytest.approx(40, rel=0.1)  # 0.8 mm at 20 um per bin


@settings(max_examples=25, deadline=None)
@given(k=st.floats(0.2, 5.0), seed=st.integers(0, 2 ** 16))
def test_only_the_focal_ratio_matters(k, seed):
    amp = np.random.default_rng(seed).random((12, 12))
    obj = ObjectSpec(amp, pixel_size=5e-5)
    a = theoretical_correlation_image(obj, OpticalConfig(f=0.1, f_prime=0.02, sensor_shape=(10, 10)))
    b = theoretical_correlation_image(obj, OpticalConfig(f=0.1 * k, f_prime=0.02 * k,
                                                         sensor_shape=(10, 10)))
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_interference_mapping_has_no_inversion():
    amp = np.zeros((16, 16))
    amp[12, 8] = 1.0
    obj = ObjectSpec(amp, pixel_size=16e-6)
    cfg = OpticalConfig(sensor_shape=(16, 16))
    t = sum_grid_transmission(obj, cfg, "interference")
    k, _ = np.unravel_index(np.abs(t).argmax(), t.shape)
    # sample 12 sits 4.5 px right of centre -> bin 15 + 9
    assert k == 24
    with pytest.raises(ValueError):
        sum_grid_transmission(obj, cfg, "other")


def gaussian_1d(n=64, sigma=5.0, px=40e-6):
    x = np.arange(n) - (n - 1) / 2
    return ObjectSpec(np.exp(-x ** 2 / (2 * sigma ** 2)), pixel_size=px)


def test_confocal_g2_depends_on_sum_only_and_matches_theory():
    obj = gaussian_1d()
    cfg = OpticalConfig(sensor_shape=(32, 1))
    g2 = unit_peak(g2_general_distance_1d(obj, cfg, 256))
    theory = theoretical_correlation_image(obj, cfg)
    i = np.arange(32)
    np.testing.assert_allclose(g2, theory[i[:, None] + i[None, :]], atol=1e-4)


@pytest.mark.parametrize("d_scale, dp_scale", [(0.85, 1.0), (1.0, 0.9), (1.2, 1.1)])
def test_distance_independence(d_scale, dp_scale):
    obj = gaussian_1d(sigma=4.0)
    ref = unit_peak(g2_general_distance_1d(obj, OpticalConfig(sensor_shape=(32, 1)), 256))
    cfg = OpticalConfig(sensor_shape=(32, 1), d=0.1 * d_scale, d_prime=0.0117 * dp_scale)
    other = unit_peak(g2_general_distance_1d(obj, cfg, 256))
    assert np.max(np.abs(other - ref)) < 1e-4


def test_verify_flag_accepts_converged_quadrature():
    obj = gaussian_1d()
    g2_general_distance_1d(obj, OpticalConfig(sensor_shape=(16, 1), d=0.09), 256, verify=True)


def test_too_few_quadrature_samples():
    obj = gaussian_1d()
    with pytest.raises(QuadratureError):
        g2_general_distance_1d(obj, OpticalConfig(sensor_shape=(32, 1)), 32)
    wide = ObjectSpec(np.ones(512), pixel_size=1e-4)
    with pytest.raises(QuadratureError, match="Nyquist"):
        g2_general_distance_1d(wide, OpticalConfig(sensor_shape=(8, 1), d=0.05), 16)


def test_wrap_phase_range():
    phi = wrap_phase(np.linspace(-20, 20, 1001))
    assert phi.min() > -np.pi and phi.max() <= np.pi
