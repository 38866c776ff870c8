"""Spot fitting, signal-to-noise and focal-length scaling laws.

The spot model is ``amp * exp(-(x - x0)**2 / sx**2) * exp(-(y - y0)**2 / sy**2)
+ offset``; note the width convention has no factor 2, so ``sx**2 / 2`` is
the variance of the spot profile.
"""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .estimator import CorrelationImage
from .exceptions import ConvergenceError
from .io import format_key_values

PARAM_NAMES = ("amplitude", "x0", "y0", "sigma_x", "sigma_y", "offset")


def gaussian_spot(x, y, amplitude, x0, y0, sigma_x, sigma_y, offset):
    return amplitude * np.exp(-((x - x0) / sigma_x) ** 2 - ((y - y0) / sigma_y) ** 2) + offset


@dataclass
class GaussianFitResult:
    center: tuple
    widths: tuple
    amplitude: float
    offset: float
    residual_rms: float
    n_evaluations: int = 0

    def __call__(self, x, y):
        return gaussian_spot(x, y, self.amplitude, *self.center, *self.widths, self.offset)

    def as_dict(self):
        d = asdict(self)
        (x0, y0), (sx, sy) = d.pop("center"), d.pop("widths")
        return {"x0": x0, "y0": y0, "sigma_x": sx, "sigma_y": sy, **d}

    def report(self):
        return format_key_values(self.as_dict())


def _moments_guess(x, y, v):
    base = np.median(v)
    w = v - base
    peak = w.max()
    if not peak > 0:
        raise ValueError("image has no spot above its median level")
    w = np.where(w > 0.2 * peak, w, 0.0)
    total = w.sum()
    x0 = np.sum(w * x) / total
    y0 = np.sum(w * y) / total
    # exp(-u**2 / s**2) has variance s**2 / 2
    sx = np.sqrt(2 * max(np.sum(w * (x - x0) ** 2) / total, 1e-6))
    sy = np.sqrt(2 * max(np.sum(w * (y - y0) ** 2) / total, 1e-6))
    return np.array([peak, x0, y0, sx, sy, base])


def fit_gaussian_points(x, y, values, init=None, xtol=1e-8, max_iterations=200):
    """Least-squares spot fit on scattered samples.

    Levenberg-Marquardt with a finite-difference Jacobian. Values are scaled
    to unit maximum magnitude internally, so the fit is equivariant under
    positive rescaling of the data.

    Raises
    ------
    ValueError
        Flat or non-finite data.
    ConvergenceError
        Iteration budget exhausted; the last iterate is attached.
    """
    x, y, v = (np.asarray(a, dtype=float).ravel() for a in (x, y, values))
    if not (x.size == y.size == v.size) or x.size < len(PARAM_NAMES):
        raise ValueError("need at least six samples with matching coordinates")
    if not np.all(np.isfinite(v)):
        raise ValueError("data contains non-finite values")
    scale = np.abs(v).max()
    if scale == 0 or np.ptp(v) <= 1e-12 * scale:
        raise ValueError("cannot fit a spot to a flat image")
    v = v / scale
    if init is None:
        p0 = _moments_guess(x, y, v)
    else:
        p0 = np.asarray(init, dtype=float).copy()
        p0[[0, 5]] /= scale

    def residual(p):
        return gaussian_spot(x, y, *p) - v

    n = len(p0)
    res = least_squares(residual, p0, method="lm", xtol=xtol, ftol=1e-12, gtol=1e-12,
                        max_nfev=max_iterations * (n + 1))
    p = res.x
    result = GaussianFitResult(
        center=(float(p[1]), float(p[2])),
        widths=(float(abs(p[3])), float(abs(p[4]))),
        amplitude=float(p[0] * scale),
        offset=float(p[5] * scale),
        residual_rms=float(np.sqrt(np.mean(res.fun ** 2)) * scale),
        n_evaluations=int(res.nfev),
    )
    if res.status == 0 or not np.all(np.isfinite(p)):
        raise ConvergenceError(f"spot fit did not converge: {res.message}", result)
    if min(result.widths) == 0:
        raise ConvergenceError("spot fit collapsed to zero width", result)
    return result


def _grid(image, axes):
    if isinstance(image, CorrelationImage):
        values = image.values
        axes = image.coordinates() if axes is None else axes
    else:
        values = np.asarray(image, dtype=float)
        if values.ndim != 2:
            raise ValueError("expected a 2-D image")
        if axes is None:
            axes = (np.arange(values.shape[0], dtype=float),
                    np.arange(values.shape[1], dtype=float))
    x, y = np.meshgrid(axes[0], axes[1], indexing="ij")
    return x, y, values


def fit_double_gaussian(image, init=None, axes=None, **options):
    """Fit the spot model to a correlation image.

    Coordinates are the sum-coordinate axes of a :class:`CorrelationImage`
    (sensor pixels) or array indices for a plain array; pass ``axes`` to
    override. ``init`` is ``(amplitude, x0, y0, sigma_x, sigma_y, offset)``.
    """
    x, y, values = _grid(image, axes)
    return fit_gaussian_points(x, y, values, init=init, **options)


def compute_snr(image, fit=None, spot_radius=1.0, noise_radius=4.0, axes=None):
    """Mean of the spot over the standard deviation of the surrounding noise.

    The spot is the ellipse within ``spot_radius`` fitted widths of the
    centre; noise is everything beyond ``noise_radius`` widths.
    """
    x, y, values = _grid(image, axes)
    if fit is None:
        fit = fit_double_gaussian(image, axes=axes)
    (x0, y0), (sx, sy) = fit.center, fit.widths
    rho = np.sqrt(((x - x0) / sx) ** 2 + ((y - y0) / sy) ** 2)
    spot = values[rho <= spot_radius]
    noise = values[rho > noise_radius]
    if spot.size == 0:
        raise ValueError("spot region is empty")
    if noise.size < 2:
        raise ValueError("noise region is empty: the spot fills the image")
    std = noise.std()
    if std == 0:
        return float("inf")
    return float(spot.mean() / std)


@dataclass
class ScalingFitResult:
    """``y = coefficient * f**exponent`` with goodness of fit.

    ``free_slope`` is the slope of an unconstrained log-log line, ``nan``
    when any value is non-positive.
    """

    coefficient: float
    exponent: float
    r_squared: float
    free_slope: float
    n_points: int

    def report(self):
        return format_key_values(asdict(self))


def _scaling_points(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (f, value) pairs")
    if len(pts) < 3:
        raise ValueError(f"scaling fits need at least 3 points, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    f = pts[:, 0]
    if np.any(f <= 0):
        raise ValueError("focal lengths must be positive")
    if len(np.unique(f)) < 3:
        raise ValueError("scaling fits need at least 3 distinct focal lengths")
    return f, pts[:, 1]


def fit_power_law(points, exponent):
    """Least-squares coefficient of ``value = c * f**exponent`` (exponent fixed)."""
    f, v = _scaling_points(points)
    basis = f ** float(exponent)
    c = np.sum(v * basis) / np.sum(basis ** 2)
    ss_res = np.sum((v - c * basis) ** 2)
    ss_tot = np.sum((v - v.mean()) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float(ss_res == 0)
    if np.all(v > 0):
        slope = float(np.polyfit(np.log(f), np.log(v), 1)[0])
    else:
        slope = float("nan")
    return ScalingFitResult(float(c), float(exponent), float(np.clip(r2, 0.0, 1.0)), slope,
                            len(f))


def fit_width_scaling(points):
    """Width against focal length (mm) under ``width = a / f``."""
    return fit_power_law(points, -1)


def fit_snr_scaling(points):
    """SNR against focal length under ``SNR = b * f**2``."""
    return fit_power_law(points, 2)


def ncc(a, b):
    """Zero-mean normalized cross-correlation of two equally shaped arrays."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError("ncc needs equally shaped inputs")
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt(np.sum(a * a) * np.sum(b * b))
    return float(np.sum(a * b) / denom) if denom > 0 else 0.0


class GaussianSpotFitter(RegressorMixin, BaseEstimator):
    """Spot model as a regressor from ``(x, y)`` coordinates to values."""

    def __init__(self, init=None, xtol=1e-8, max_iterations=200):
        self.init = init
        self.xtol = xtol
        self.max_iterations = max_iterations

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if X.shape[1] != 2:
            raise ValueError("X must hold (x, y) coordinates")
        self.result_ = fit_gaussian_points(X[:, 0], X[:, 1], y, init=self.init, xtol=self.xtol,
                                           max_iterations=self.max_iterations)
        r = self.result_
        self.params_ = np.array([r.amplitude, *r.center, *r.widths, r.offset])
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X)
        return gaussian_spot(X[:, 0], X[:, 1], *self.params_)


class ScalingLawRegressor(RegressorMixin, BaseEstimator):
    """``y = coef_ * f**exponent`` with the exponent fixed."""

    def __init__(self, exponent=-1.0):
        self.exponent = exponent

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if X.shape[1] != 1:
            raise ValueError("X must be a single column of focal lengths")
        self.result_ = fit_power_law(np.column_stack([X[:, 0], y]), self.exponent)
        self.coef_ = self.result_.coefficient
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X)
        return self.coef_ * X[:, 0] ** float(self.exponent)
