"""Fourier-optics forward models for pump-shaped photon-pair correlations.

Coordinate conventions
----------------------
Object samples sit at ``(a - (N - 1) / 2) * pixel_size`` along each axis.
Sensor pixel ``i`` is centred at ``(i - (Nx - 1) / 2) * pixel_pitch``.
The sum coordinate r+ = (r1 + r2) / 2 of a pixel pair ``(i1, i2)`` lives
on a grid of ``2 * Nx - 1`` bins, bin ``k = i1 + i2`` sitting at
``(k - (Nx - 1)) * pixel_pitch / 2``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .exceptions import AliasingError, QuadratureError
from .validation import check_positive


@dataclass
class ObjectSpec:
    """Complex transmission ``t = amplitude * exp(1j * phase)`` on a grid.

    ``amplitude`` may be 1-D (a slice, for the 1-D propagator) or 2-D with
    axis 0 along x.
    """

    amplitude: np.ndarray
    phase: np.ndarray = None
    pixel_size: float = 50e-6

    def __post_init__(self):
        self.amplitude = np.asarray(self.amplitude, dtype=float)
        if self.amplitude.ndim not in (1, 2) or self.amplitude.size == 0:
            raise ValueError("amplitude must be a non-empty 1-D or 2-D array")
        if not np.all(np.isfinite(self.amplitude)) or np.any(self.amplitude < 0):
            raise ValueError("amplitude must be finite and non-negative")
        if self.phase is None:
            self.phase = np.zeros_like(self.amplitude)
        self.phase = np.asarray(self.phase, dtype=float)
        if self.phase.shape != self.amplitude.shape:
            raise ValueError("phase and amplitude shapes differ")
        if not np.all(np.isfinite(self.phase)):
            raise ValueError("phase must be finite")
        self.phase = wrap_phase(self.phase)
        self.pixel_size = check_positive(self.pixel_size, "pixel_size")

    @property
    def shape(self):
        return self.amplitude.shape

    @property
    def extent(self):
        return tuple(n * self.pixel_size for n in self.shape)

    @property
    def transmission(self):
        return self.amplitude * np.exp(1j * self.phase)

    def axis(self, dim=0):
        n = self.shape[dim]
        return (np.arange(n) - (n - 1) / 2) * self.pixel_size

    def is_degenerate(self):
        return not np.any(self.amplitude > 0)


@dataclass
class OpticalConfig:
    """Lens geometry and sensor sampling.

    ``d`` and ``d_prime`` default to ``f`` and ``f_prime`` (confocal
    placement); only the 1-D general-distance propagator reads them.
    """

    lambda_pump: float = 405e-9
    f: float = 0.100
    f_prime: float = 0.0117
    pixel_pitch: float = 16e-6
    sensor_shape: tuple = (64, 64)
    d: float = None
    d_prime: float = None
    lambda_spdc: float = None

    def __post_init__(self):
        self.lambda_pump = check_positive(self.lambda_pump, "lambda_pump")
        if self.lambda_spdc is None:
            self.lambda_spdc = 2 * self.lambda_pump
        self.lambda_spdc = check_positive(self.lambda_spdc, "lambda_spdc")
        if not np.isclose(self.lambda_spdc, 2 * self.lambda_pump, rtol=1e-12, atol=0):
            raise ValueError("degenerate down-conversion requires lambda_spdc == 2 * lambda_pump")
        self.f = check_positive(self.f, "f")
        self.f_prime = check_positive(self.f_prime, "f_prime")
        self.pixel_pitch = check_positive(self.pixel_pitch, "pixel_pitch")
        self.d = self.f if self.d is None else check_positive(self.d, "d")
        self.d_prime = self.f_prime if self.d_prime is None else check_positive(self.d_prime, "d_prime")
        shape = tuple(int(n) for n in np.atleast_1d(self.sensor_shape))
        if len(shape) == 1:
            shape = (shape[0], 1)
        if len(shape) != 2 or min(shape) < 1:
            raise ValueError(f"bad sensor_shape {self.sensor_shape!r}")
        self.sensor_shape = shape

    @property
    def magnification(self):
        """Object-to-correlation-image scale ``f' / f``."""
        return self.f_prime / self.f

    def sum_axis(self, dim=0):
        """r+ positions (meters) of the sum-coordinate bins along ``dim``."""
        n = self.sensor_shape[dim]
        return (np.arange(2 * n - 1) - (n - 1)) * self.pixel_pitch / 2

    def sensor_axis(self, dim=0):
        n = self.sensor_shape[dim]
        return (np.arange(n) - (n - 1) / 2) * self.pixel_pitch


@dataclass
class Field1D:
    """Complex samples on a uniform grid symmetric about zero."""

    samples: np.ndarray
    spacing: float
    origin_index: float = field(default=None)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("field samples must be finite")
        self.spacing = check_positive(self.spacing, "spacing")
        if self.origin_index is None:
            self.origin_index = (self.samples.size - 1) / 2

    @property
    def coordinates(self):
        return (np.arange(self.samples.size) - self.origin_index) * self.spacing


@dataclass
class FourierField:
    """Crystal-plane field with one coordinate vector per axis (meters)."""

    values: np.ndarray
    axes: tuple

    @property
    def energy(self):
        return float(np.sum(np.abs(self.values) ** 2))


def wrap_phase(phase):
    """Wrap angles into (-pi, pi]."""
    phase = np.asarray(phase, dtype=float)
    return np.pi - np.mod(np.pi - phase, 2 * np.pi)


def fourier_image(obj, config, check_aliasing=True, alias_tolerance=0.05):
    """Pump field on the crystal: the chirp-free 2f Fourier transform of ``t``.

    The transform is the plain DFT sum over object samples, so a unit
    single-pixel object gives a flat unit-modulus field and
    ``sum(|F|**2) == N * sum(|t|**2)`` with ``N`` the number of samples.
    Spatial frequency ``nu`` lands at crystal position ``lambda_pump * f * nu``.

    Parameters
    ----------
    obj : ObjectSpec
    config : OpticalConfig
    check_aliasing : bool
        Reject objects whose spectrum carries more than ``alias_tolerance``
        of its energy in the outer quarter of the frequency band, i.e.
        objects the grid is too coarse to represent.

    Returns
    -------
    FourierField
    """
    t = obj.transmission
    values = t.astype(complex)
    axes = []
    for dim, n in enumerate(t.shape):
        nu = (np.arange(n) - n // 2) / (n * obj.pixel_size)
        values = np.fft.fftshift(np.fft.fft(values, axis=dim), axes=dim)
        # DFT origin is sample 0; objects are centred at (n - 1) / 2
        shift = np.exp(2j * np.pi * nu * (n - 1) / 2 * obj.pixel_size)
        values = values * shift.reshape([-1 if d == dim else 1 for d in range(t.ndim)])
        axes.append(config.lambda_pump * config.f * nu)
    if check_aliasing:
        power = np.abs(values) ** 2
        total = power.sum()
        if total > 0:
            outer = np.zeros(power.shape, dtype=bool)
            for dim, n in enumerate(t.shape):
                if n < 4:
                    continue
                idx = np.abs(np.arange(n) - n // 2) > 0.75 * (n / 2)
                outer |= idx.reshape([-1 if d == dim else 1 for d in range(t.ndim)])
            frac = power[outer].sum() / total
            if frac > alias_tolerance:
                raise AliasingError(
                    f"{frac:.1%} of the spectral energy sits near the band edge; "
                    "refine the object grid")
    return FourierField(values, tuple(axes))


def _object_index(obj, coords, dim):
    n = obj.shape[dim]
    return coords / obj.pixel_size + (n - 1) / 2


def sum_grid_transmission(obj, config, mapping="imaging"):
    """Complex ``t`` resampled onto the sum-coordinate grid of the sensor.

    ``mapping="imaging"`` reads ``t(-(f/f') r+)``, the point-inverted and
    magnified object; ``"interference"`` reads ``t(r+)`` with no inversion
    or magnification. Bilinear interpolation of the real and imaginary
    parts, zero outside the object grid.
    """
    if mapping == "imaging":
        scale = -config.f / config.f_prime
    elif mapping == "interference":
        scale = 1.0
    else:
        raise ValueError(f"mapping must be 'imaging' or 'interference', got {mapping!r}")
    t = obj.transmission
    grids = [_object_index(obj, scale * config.sum_axis(dim), dim)
             for dim in range(t.ndim)]
    mesh = np.meshgrid(*grids, indexing="ij")
    return (ndimage.map_coordinates(t.real, mesh, order=1, mode="constant", cval=0.0)
            + 1j * ndimage.map_coordinates(t.imag, mesh, order=1, mode="constant", cval=0.0))


def theoretical_correlation_image(obj, config, normalize=True):
    """Sum-coordinate correlation image ``|t(-(f/f') r+)|**2``.

    Sampled on the ``(2Nx - 1) x (2Ny - 1)`` sum grid of the sensor by
    bilinear interpolation of the complex ``t`` (zero outside the object
    grid) followed by the modulus squared.
    A 1-D object yields a 1-D profile over the ``2Nx - 1`` x-bins.
    """
    image = np.abs(sum_grid_transmission(obj, config)) ** 2
    if normalize:
        peak = image.max()
        if peak > 0:
            image = image / peak
    return image


def nyquist_samples_1d(obj, config, span):
    """Samples needed over ``span`` to resolve the object-plane chirp at Nyquist."""
    curvature = abs(1 / config.f - config.d / config.f ** 2)
    if curvature == 0:
        return 0
    amp = np.abs(obj.amplitude)
    support = obj.axis(0)[amp > 1e-6 * amp.max()]
    reach = np.abs(support).max() if support.size else 0.0
    max_freq = reach * curvature / config.lambda_pump
    return int(np.ceil(2 * span * max_freq))


def _quadrature_grid(obj, config, n_quadrature):
    nx = config.sensor_shape[0]
    refine = n_quadrature // (2 * nx)
    if refine < 1 or n_quadrature % 2:
        raise QuadratureError(
            f"n_quadrature={n_quadrature} must be even and >= {2 * nx} "
            "to cover the sum coordinates of the sensor")
    dx = (config.f / config.f_prime) * (config.pixel_pitch / 2) / refine
    x = (np.arange(n_quadrature) - n_quadrature // 2) * dx
    return x, dx


def crystal_field_1d(obj, config, n_quadrature):
    """Chirped pump field on the crystal for lens-crystal distance ``d``.

    Direct quadrature of the general-distance Fresnel integral. Returns
    the field on the conjugate grid of the object quadrature grid.
    """
    x, dx = _quadrature_grid(obj, config, n_quadrature)
    t = np.interp(x, obj.axis(0), obj.transmission.real, left=0, right=0) \
        + 1j * np.interp(x, obj.axis(0), obj.transmission.imag, left=0, right=0)
    lp, f, d = config.lambda_pump, config.f, config.d
    dxp = lp * f / (n_quadrature * dx)
    xp = (np.arange(n_quadrature) - n_quadrature // 2) * dxp
    X, XP = x[None, :], xp[:, None]
    phase = (np.pi / lp) * (X ** 2 / f + XP ** 2 / d - (XP * f + X * d) ** 2 / (f ** 2 * d))
    samples = (np.exp(1j * phase) @ t) * dx
    return Field1D(samples, dxp, origin_index=n_quadrature // 2)


def impulse_response_1d(config, x_camera, x_crystal):
    """Crystal-to-camera kernel ``h(x1, x')`` for lens-crystal distance ``d'``."""
    lam, fp, dp = config.lambda_spdc, config.f_prime, config.d_prime
    X1, XP = np.asarray(x_camera)[:, None], np.asarray(x_crystal)[None, :]
    phase = (np.pi / lam) * (XP ** 2 / dp + X1 ** 2 / fp
                             - (X1 * dp + XP * fp) ** 2 / (dp * fp ** 2))
    return np.exp(1j * phase)


def g2_general_distance_1d(obj, config, n_quadrature=256, verify=False, rtol=1e-6):
    """Two-photon correlation ``G2(x1, x2)`` for arbitrary crystal distances.

    Evaluates ``|sum_x' FT[t](x') h(x1, x') h(x2, x')|**2`` by direct
    quadrature on uniform grids, the object grid being aligned so that
    every sensor sum coordinate maps onto a quadrature node.

    Parameters
    ----------
    obj : ObjectSpec
        1-D object.
    config : OpticalConfig
        Uses ``d``/``d_prime`` and the x extent of ``sensor_shape``.
    n_quadrature : int
        Samples per integral; must be at least four times the Nyquist
        estimate of the object-plane chirp.
    verify : bool
        Recompute with twice the samples and raise if the unit-peak maps
        differ by more than ``rtol``.

    Returns
    -------
    ndarray, shape (Nx, Nx)
        Indexed ``[i1, i2]`` over sensor pixels.
    """
    if obj.amplitude.ndim != 1:
        raise ValueError("g2_general_distance_1d needs a 1-D object")
    x, dx = _quadrature_grid(obj, config, n_quadrature)
    span = n_quadrature * dx
    needed = nyquist_samples_1d(obj, config, span)
    if n_quadrature < 4 * needed:
        raise QuadratureError(
            f"chirp needs {needed} samples at Nyquist; n_quadrature={n_quadrature} "
            f"is below the required {4 * needed}")
    crystal = crystal_field_1d(obj, config, n_quadrature)
    h = impulse_response_1d(config, config.sensor_axis(0), crystal.coordinates)
    amplitude = (h * crystal.samples[None, :]) @ h.T * crystal.spacing
    g2 = np.abs(amplitude) ** 2
    if verify:
        fine = g2_general_distance_1d(obj, config, 2 * n_quadrature, verify=False)
        err = np.max(np.abs(unit_peak(fine) - unit_peak(g2)))
        if err > rtol:
            raise QuadratureError(f"doubling n_quadrature changed G2 by {err:.3g}")
    return g2


def unit_peak(values):
    values = np.asarray(values, dtype=float)
    peak = np.max(np.abs(values))
    return values / peak if peak > 0 else values.copy()
