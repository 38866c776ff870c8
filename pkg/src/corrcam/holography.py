"""Four-step phase-shifting holography on correlation images.

With a phase shifter at ``theta`` acting on both photons of a pair, the
correlation image follows ``A + B cos(phi - 2 theta)``. Four shifts a
quarter period apart give ``phi`` pixelwise::

    phi = arg(G_0 - G_{pi/2} + i (G_{pi/4} - G_{3pi/4}))

A reference acquisition without the object yields the instrumental phase,
which is then subtracted.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .estimator import CorrelationImage, correlation_image_fft
from .exceptions import EmptyMaskWarning
from .frames import FrameStack
from .io import write_csv_matrix, write_pgm
from .optics import wrap_phase

CANONICAL_PHASES = (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4)
PHASE_KEYS = ("0", "pi/4", "pi/2", "3pi/4")
MASK_LEVEL = 255


def canonical_phase(key):
    """Map a key (number or one of ``PHASE_KEYS``) to its canonical shift."""
    if isinstance(key, str):
        key = key.strip().replace(" ", "")
        if key in PHASE_KEYS:
            return CANONICAL_PHASES[PHASE_KEYS.index(key)]
        key = float(key)
    for theta in CANONICAL_PHASES:
        if abs(float(key) - theta) < 1e-9:
            return theta
    raise KeyError(f"{key!r} is not one of the four phase shifts 0, pi/4, pi/2, 3pi/4")


def _values(image):
    if isinstance(image, CorrelationImage):
        return image.values
    return np.asarray(image, dtype=float)


@dataclass
class HologramSet:
    """Four correlation images keyed by phase shift."""

    gamma: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        gamma = {canonical_phase(k): v for k, v in self.gamma.items()}
        missing = [PHASE_KEYS[i] for i, t in enumerate(CANONICAL_PHASES) if t not in gamma]
        if missing or len(gamma) != 4:
            raise KeyError(f"hologram set is missing phase(s): {', '.join(missing)}")
        shapes = {_values(v).shape for v in gamma.values()}
        if len(shapes) != 1:
            raise ValueError(f"hologram images have mismatched grids: {sorted(shapes)}")
        self.gamma = {t: gamma[t] for t in CANONICAL_PHASES}

    @property
    def shape(self):
        return _values(self.gamma[0.0]).shape

    def __getitem__(self, theta):
        return _values(self.gamma[canonical_phase(theta)])

    def frame_counts(self):
        return [v.frame_count for v in self.gamma.values() if isinstance(v, CorrelationImage)]


@dataclass
class PhaseMap:
    """Wrapped phase in (-pi, pi] with a support mask; ``nan`` off the mask."""

    phase: np.ndarray
    support_mask: np.ndarray
    modulus: np.ndarray = None

    def __post_init__(self):
        self.support_mask = np.asarray(self.support_mask, dtype=bool)
        phase = np.asarray(self.phase, dtype=float)
        if phase.shape != self.support_mask.shape:
            raise ValueError("phase and mask shapes differ")
        if not np.all(np.isfinite(phase[self.support_mask])):
            raise ValueError("phase must be finite on the support mask")
        self.phase = np.where(self.support_mask, wrap_phase(np.nan_to_num(phase)), np.nan)

    @property
    def shape(self):
        return self.phase.shape

    def to_levels(self):
        """8-bit rendering: ``round((phase + pi) / (2 pi) * 254)``; off-mask 255."""
        levels = np.full(self.shape, MASK_LEVEL, dtype=np.uint8)
        on = self.support_mask
        levels[on] = np.round((self.phase[on] + np.pi) / (2 * np.pi) * 254).astype(np.uint8)
        return levels

    def save(self, stem):
        """Write ``<stem>.csv`` (radians, ``nan`` off-mask) and ``<stem>.pgm``."""
        write_csv_matrix(f"{stem}.csv", self.phase)
        write_pgm(f"{stem}.pgm", self.to_levels())


def combine_phases(hologram_set, support_threshold=0.1):
    """Pixelwise four-step phase retrieval.

    Parameters
    ----------
    hologram_set : HologramSet
    support_threshold : float
        The mask keeps pixels whose combination modulus exceeds this fraction
        of the maximum modulus. An all-zero modulus gives an empty mask.

    Returns
    -------
    PhaseMap
    """
    if not 0 <= support_threshold <= 1:
        raise ValueError("support_threshold must lie in [0, 1]")
    h = hologram_set
    z = (h[0.0] - h[np.pi / 2]) + 1j * (h[np.pi / 4] - h[3 * np.pi / 4])
    modulus = np.abs(z)
    peak = modulus.max()
    mask = modulus > support_threshold * peak if peak > 0 else np.zeros(z.shape, dtype=bool)
    return PhaseMap(np.angle(z), mask, modulus)


def calibrate_reference(reference_set, support_threshold=0.1):
    """Instrumental phase from an acquisition without the object."""
    return combine_phases(reference_set, support_threshold)


def subtract_reference(object_phase, reference):
    """Object phase minus reference phase, wrapped, on the shared support."""
    if object_phase.shape != reference.shape:
        raise ValueError(f"phase maps differ in shape: {object_phase.shape} vs {reference.shape}")
    mask = object_phase.support_mask & reference.support_mask
    if not mask.any():
        warnings.warn("object and reference supports do not overlap", EmptyMaskWarning,
                      stacklevel=2)
    diff = np.where(mask, np.nan_to_num(object_phase.phase) - np.nan_to_num(reference.phase), 0.0)
    return PhaseMap(diff, mask)


@dataclass
class SinusoidFit:
    """``offset + amplitude * cos(2 theta + phase)`` fitted by linear least squares."""

    offset: float
    amplitude: float
    phase: float
    r_squared: float
    period: float = np.pi

    def __call__(self, theta):
        return self.offset + self.amplitude * np.cos(2 * np.asarray(theta) + self.phase)


def fit_sinusoid(theta, values):
    theta = np.asarray(theta, dtype=float)
    values = np.asarray(values, dtype=float)
    if theta.shape != values.shape or theta.size < 3:
        raise ValueError("need at least 3 (theta, value) points of matching length")
    design = np.column_stack([np.ones_like(theta), np.cos(2 * theta), np.sin(2 * theta)])
    (c0, c1, c2), *_ = np.linalg.lstsq(design, values, rcond=None)
    resid = values - design @ np.array([c0, c1, c2])
    ss_tot = np.sum((values - values.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    # c1 cos + c2 sin = B cos(2 theta + C) with B cos C = c1, -B sin C = c2
    return SinusoidFit(float(c0), float(np.hypot(c1, c2)), float(np.arctan2(-c2, c1)),
                       float(np.clip(r2, 0.0, 1.0)))


def phase_sweep_curve(images, probe=None, min_points=8, **estimator_options):
    """Correlation value at one bin as a function of the phase shift.

    Parameters
    ----------
    images : dict
        ``theta -> CorrelationImage``, array or FrameStack. Stacks are
        reduced with :func:`correlation_image_fft` (same-pixel products
        excluded unless overridden).
    probe : (int, int), optional
        Bin index; defaults to the centre bin ``r+ = 0``.

    Returns
    -------
    list of (theta, value), sorted by theta
    """
    if len(images) < min_points:
        raise ValueError(f"a phase sweep needs at least {min_points} points, got {len(images)}")
    estimator_options.setdefault("exclude_diagonal", True)
    curve = []
    for theta, item in images.items():
        theta = float(theta)
        if not 0 <= theta < 2 * np.pi:
            raise ValueError(f"sweep phase {theta} outside [0, 2 pi)")
        if isinstance(item, FrameStack):
            item = correlation_image_fft(item, **estimator_options)
        values = _values(item)
        k, l = probe if probe is not None else ((values.shape[0] - 1) // 2,
                                                (values.shape[1] - 1) // 2)
        if not (0 <= k < values.shape[0] and 0 <= l < values.shape[1]):
            raise IndexError(f"probe {(k, l)} outside the {values.shape} grid")
        curve.append((theta, float(values[k, l])))
    return sorted(curve)


class PhaseShiftingHolography(TransformerMixin, BaseEstimator):
    """Reference-calibrated phase retrieval.

    ``fit`` takes the reference set (no object) and stores
    ``reference_phase_``; ``transform`` takes an object set and returns the
    object phase after reference subtraction. Sets are HologramSets or dicts
    keyed by phase shift holding images or frame stacks.
    """

    def __init__(self, support_threshold=0.1, exclude_diagonal=True, chunk_size=64, workers=1,
                 threshold=None):
        self.support_threshold = support_threshold
        self.exclude_diagonal = exclude_diagonal
        self.chunk_size = chunk_size
        self.workers = workers
        self.threshold = threshold

    def to_hologram_set(self, X):
        if isinstance(X, HologramSet):
            return X
        gamma = {}
        for key, item in dict(X).items():
            if isinstance(item, FrameStack):
                item = correlation_image_fft(item, self.exclude_diagonal, self.chunk_size,
                                             self.workers, self.threshold)
            gamma[key] = item
        return HologramSet(gamma)

    def fit(self, X, y=None):
        self.reference_phase_ = calibrate_reference(self.to_hologram_set(X),
                                                    self.support_threshold)
        return self

    def transform(self, X):
        check_is_fitted(self)
        raw = combine_phases(self.to_hologram_set(X), self.support_threshold)
        return subtract_reference(raw, self.reference_phase_)
