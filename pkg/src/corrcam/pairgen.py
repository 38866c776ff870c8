"""Monte Carlo photon-pair sources and an EMCCD-style frame renderer.

Random streams are derived from one integer seed with
``SeedSequence(seed, spawn_key=...)``:

* ``(0,)`` pair positions, ``(3,)`` pair-to-frame assignment;
* ``(1, m)`` detection, gain and dark events of frame ``m``;
* ``(2, m)`` readout noise of frame ``m``.

Frames therefore depend only on ``(seed, frame index)``, never on how the
work is split between workers.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .frames import EventFrames, FrameStack
from .validation import (check_count, check_nonnegative, check_positive,
                         check_probability)

NOISE_SHARE = 0.1


def _rng(seed, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass
class CameraModel:
    """Detection model of an electron-multiplying camera.

    ``dark_rate=None`` picks the rate that makes noise ~10% of all events
    for the pair flux being rendered. ``gain_model`` is ``"exponential"``
    (stochastic multiplication register) or ``"deterministic"``.
    """

    quantum_efficiency: float = 0.7
    dark_rate: float = None
    readout_sigma: float = 30.0
    gain: float = 1000.0
    gain_model: str = "exponential"
    threshold: float = None

    def __post_init__(self):
        self.quantum_efficiency = check_probability(self.quantum_efficiency, "quantum_efficiency")
        if self.dark_rate is not None:
            self.dark_rate = check_nonnegative(self.dark_rate, "dark_rate")
        self.readout_sigma = check_nonnegative(self.readout_sigma, "readout_sigma")
        self.gain = check_positive(self.gain, "gain")
        if self.gain_model not in ("exponential", "deterministic"):
            raise ValueError(f"unknown gain_model {self.gain_model!r}")
        if self.threshold is not None:
            self.threshold = float(self.threshold)

    def resolved_dark_rate(self, photons_per_frame, n_pixels):
        """Dark rate per pixel; ``photons_per_frame`` counts photons reaching the sensor."""
        if self.dark_rate is not None:
            return self.dark_rate
        detected = photons_per_frame * self.quantum_efficiency
        return NOISE_SHARE / (1 - NOISE_SHARE) * detected / n_pixels


@dataclass
class PairSourceConfig:
    """Photon-pair source.

    ``mean_pairs_per_frame`` counts emitted pairs; pairs leaving the sensor
    are lost. In interference mode it is the flux of the reference arm
    alone. ``instrumental_phase`` is an extra phase on the object arm and
    ``reference_support`` an optional boolean mask on the object grid where
    the reference field lives (default: the whole grid). With
    ``keep_singles`` a photon whose twin misses the sensor is still
    detected, as an uncorrelated single.
    """

    mean_pairs_per_frame: float = 4.0
    minus_sigma: float = 1.5
    mode: str = "amplitude"
    theta: float = 0.0
    reference_amplitude: float = 1.0
    instrumental_phase: float = 0.0
    reference_support: np.ndarray = None
    keep_singles: bool = True

    def __post_init__(self):
        self.mean_pairs_per_frame = check_positive(self.mean_pairs_per_frame, "mean_pairs_per_frame")
        self.minus_sigma = check_positive(self.minus_sigma, "minus_sigma")
        if self.mode not in ("amplitude", "interference"):
            raise ValueError(f"mode must be 'amplitude' or 'interference', got {self.mode!r}")
        self.theta = float(self.theta)
        if not 0 <= self.theta < 2 * np.pi:
            raise ValueError("theta must lie in [0, 2*pi)")
        self.reference_amplitude = check_nonnegative(self.reference_amplitude, "reference_amplitude")
        self.instrumental_phase = float(self.instrumental_phase)
        if self.reference_support is not None:
            self.reference_support = np.asarray(self.reference_support, dtype=bool)


@dataclass
class PairSample:
    """Pair positions in sensor pixel units (origin at sensor centre).

    ``r1``/``r2`` hold pairs with both photons on the sensor; ``singles``
    holds the on-sensor photon of discarded pairs (empty unless requested).
    """

    r1: np.ndarray
    r2: np.ndarray
    sensor_shape: tuple
    n_emitted: int
    n_discarded: int
    singles: np.ndarray = None

    def __post_init__(self):
        if self.singles is None:
            self.singles = np.zeros((0, 2))

    def __len__(self):
        return len(self.r1)

    @property
    def r_plus(self):
        return (self.r1 + self.r2) / 2

    @property
    def r_minus(self):
        return (self.r1 - self.r2) / 2

    def _flat(self, r):
        nx, ny = self.sensor_shape
        i = np.floor(r[:, 0] + nx / 2).astype(np.int64)
        j = np.floor(r[:, 1] + ny / 2).astype(np.int64)
        return i * ny + j

    def pixel_indices(self):
        """Flat pixel index of each paired photon, shape ``(n, 2)``."""
        return np.stack([self._flat(self.r1), self._flat(self.r2)], axis=1)

    def single_indices(self):
        return self._flat(self.singles)


def _sample_object_plane(weights, obj, rng, n):
    """Draw ``n`` object-plane positions (meters) from piecewise-constant weights."""
    flat = weights.ravel()
    cdf = np.cumsum(flat)
    idx = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    idx = np.minimum(idx, flat.size - 1)
    a, b = np.unravel_index(idx, weights.shape)
    jitter = rng.random((n, 2)) - 0.5
    u = np.empty((n, 2))
    u[:, 0] = obj.axis(0)[a] + jitter[:, 0] * obj.pixel_size
    u[:, 1] = obj.axis(1)[b] + jitter[:, 1] * obj.pixel_size
    return u


BLOCK = 1 << 20


def _draw_pairs(weights, obj, to_sensor, source, sensor_shape, rng, n_emitted):
    """Sample in blocks so only on-sensor photons are ever held in memory."""
    half = np.array(sensor_shape) / 2
    r1s, r2s, singles = [], [], []
    for start in range(0, n_emitted, BLOCK):
        n = min(BLOCK, n_emitted - start)
        r_plus = to_sensor(_sample_object_plane(weights, obj, rng, n))
        r_minus = rng.normal(0.0, source.minus_sigma, size=r_plus.shape)
        r1, r2 = r_plus + r_minus, r_plus - r_minus
        on1 = np.all((r1 >= -half) & (r1 < half), axis=1)
        on2 = np.all((r2 >= -half) & (r2 < half), axis=1)
        both = on1 & on2
        r1s.append(r1[both])
        r2s.append(r2[both])
        if source.keep_singles:
            singles.extend([r1[on1 & ~on2], r2[on2 & ~on1]])
    empty = np.zeros((0, 2))
    r1 = np.concatenate(r1s) if r1s else empty
    r2 = np.concatenate(r2s) if r2s else empty
    return PairSample(r1, r2, tuple(sensor_shape), n_emitted, int(n_emitted - len(r1)),
                      np.concatenate(singles) if singles else empty)


def sample_pairs(obj, config, source, seed, n):
    """Draw ``n`` emitted pairs whose sum coordinate follows ``|t(-(f/f') r+)|**2``.

    The object intensity is treated as piecewise constant over its pixels.
    The difference coordinate is an isotropic Gaussian of width
    ``source.minus_sigma`` sensor pixels. Pairs with a photon off the
    sensor are dropped and counted in ``n_discarded``; their on-sensor
    photon is kept in ``singles`` when ``source.keep_singles`` is set.
    """
    if source.mode != "amplitude":
        raise ValueError("sample_pairs needs an amplitude-mode source")
    if obj.amplitude.ndim != 2:
        raise ValueError("pair sampling needs a 2-D object")
    if obj.is_degenerate():
        raise ValueError("object transmission is identically zero")
    n = check_count(n, "n")
    scale = -config.magnification / config.pixel_pitch
    return _draw_pairs(obj.amplitude ** 2, obj, lambda u: scale * u, source,
                       config.sensor_shape, _rng(seed, 0), n)


def interference_density(obj, source):
    """``|t exp(i beta) + a exp(2i theta)|**2`` per object pixel, and the
    reference-only mass used to scale the emitted flux."""
    support = source.reference_support
    if support is None:
        support = np.ones(obj.shape, dtype=bool)
    elif support.shape != obj.shape:
        raise ValueError("reference_support must match the object grid")
    ref = source.reference_amplitude * np.exp(2j * source.theta) * support
    field = obj.transmission * np.exp(1j * source.instrumental_phase) + ref
    return np.abs(field) ** 2, source.reference_amplitude ** 2 * support.sum()


def sample_interference_pairs(obj, config, source, seed, n):
    """Pairs from the object arm interfering with a phase-shifted reference.

    ``n`` is the number of pairs the reference arm alone would emit; the
    emitted count is scaled by the total interfered intensity, so the
    number of pairs in a region follows ``|t + a exp(2i theta)|**2``.
    The object grid maps onto the sum coordinate without inversion or
    magnification.
    """
    if source.mode != "interference":
        raise ValueError("sample_interference_pairs needs an interference-mode source")
    if obj.amplitude.ndim != 2:
        raise ValueError("pair sampling needs a 2-D object")
    n = check_count(n, "n")
    density, ref_mass = interference_density(obj, source)
    mass = density.sum()
    if not mass > 1e-12 * max(ref_mass, 1.0):
        raise ValueError("interference pattern is identically zero")
    if ref_mass > 0:
        n_emit = int(round(n * mass / ref_mass))
    else:
        # no reference arm: n counts object-arm pairs
        n_emit = n
    return _draw_pairs(density, obj, lambda u: u / config.pixel_pitch, source,
                       config.sensor_shape, _rng(seed, 0), n_emit)


class SimulatedFrames(EventFrames):
    """Event frames with Gaussian readout noise and thresholding applied on access."""

    def __init__(self, ptr, pixels, values, sensor_shape, readout_sigma=0.0,
                 threshold=None, seed=0):
        super().__init__(ptr, pixels, values, sensor_shape)
        self.readout_sigma = readout_sigma
        self.threshold = threshold
        self.seed = seed

    def _dense(self, start, stop):
        out = super()._dense(start, stop)
        if self.readout_sigma > 0:
            for k in range(stop - start):
                out[k] += _rng(self.seed, 2, start + k).normal(
                    0.0, self.readout_sigma, self.sensor_shape)
        if self.threshold is not None:
            out = (out > self.threshold).astype(float)
        return out


def _render_block(frames, frame_ptr, photon_pix, camera, dark_rate, n_pixels, seed):
    pix_out, val_out, counts = [], [], []
    qe, gain = camera.quantum_efficiency, camera.gain
    exponential = camera.gain_model == "exponential"
    dark_mean = dark_rate * n_pixels
    for m in frames:
        rng = _rng(seed, 1, m)
        photons = photon_pix[frame_ptr[m]:frame_ptr[m + 1]]
        photons = photons[rng.random(photons.size) < qe]
        n_dark = rng.poisson(dark_mean) if dark_mean > 0 else 0
        if n_dark:
            photons = np.concatenate([photons, rng.integers(0, n_pixels, n_dark)])
        if exponential:
            values = rng.exponential(gain, photons.size)
        else:
            values = np.full(photons.size, gain)
        pix_out.append(photons)
        val_out.append(values)
        counts.append(photons.size)
    return pix_out, val_out, counts


def render_frames(pairs, camera, n_frames, seed, workers=1):
    """Spread pairs over ``n_frames`` frames and render the camera.

    Every pair (and every single) falls in a uniformly random frame, so a Poisson total splits
    into independent Poisson counts per frame. Each photon survives with
    probability ``quantum_efficiency`` and deposits an analog signal with
    mean ``gain``; dark events (Poisson, ``dark_rate`` per pixel) follow
    the same gain law. Readout noise and thresholding are applied lazily
    when frames are read.

    Returns
    -------
    FrameStack
        Backed by :class:`SimulatedFrames`; it never holds dense frames.
    """
    n_frames = check_count(n_frames, "n_frames")
    if n_frames < 2:
        raise ValueError("at least 2 frames are needed for correlation estimates")
    shape = pairs.sensor_shape
    n_pixels = shape[0] * shape[1]
    rng = _rng(seed, 3)
    pair_frame = rng.integers(0, n_frames, len(pairs))
    single_frame = rng.integers(0, n_frames, len(pairs.singles))
    frame_of = np.concatenate([np.repeat(pair_frame, 2), single_frame])
    pixels = np.concatenate([pairs.pixel_indices().ravel(), pairs.single_indices()])
    order = np.argsort(frame_of, kind="stable")
    frame_ptr = np.concatenate([[0], np.cumsum(np.bincount(frame_of, minlength=n_frames))])
    photon_pix = pixels[order]
    dark_rate = camera.resolved_dark_rate(len(pixels) / n_frames, n_pixels)

    workers = max(1, int(workers or 1))
    blocks = np.array_split(np.arange(n_frames), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(
            lambda blk: _render_block(blk, frame_ptr, photon_pix, camera, dark_rate, n_pixels, seed),
            blocks))
    pix = [p for part in parts for p in part[0]]
    val = [v for part in parts for v in part[1]]
    counts = np.array([c for part in parts for c in part[2]], dtype=np.int64)
    ptr = np.concatenate([[0], np.cumsum(counts)])
    frames = SimulatedFrames(
        ptr,
        np.concatenate(pix) if pix else np.zeros(0, np.int64),
        np.concatenate(val) if val else np.zeros(0),
        shape, camera.readout_sigma, camera.threshold, seed)
    meta = {f"camera.{k}": v for k, v in asdict(camera).items()}
    meta["camera.dark_rate"] = dark_rate
    meta.update(seed=seed, n_pairs=len(pairs), n_singles=len(pairs.singles),
                n_discarded=pairs.n_discarded)
    return FrameStack(frames, meta)


def simulate_stack(obj, config, source, camera, n_frames, seed, workers=1):
    """Draw a Poisson number of pairs for ``n_frames`` frames and render them."""
    n_frames = check_count(n_frames, "n_frames", minimum=2)
    total = int(_rng(seed, 4).poisson(source.mean_pairs_per_frame * n_frames))
    if source.mode == "amplitude":
        pairs = sample_pairs(obj, config, source, seed, total)
    else:
        pairs = sample_interference_pairs(obj, config, source, seed, total)
    stack = render_frames(pairs, camera, n_frames, seed, workers=workers)
    src = {k: v for k, v in asdict(source).items() if k != "reference_support"}
    stack.metadata.update({f"source.{k}": v for k, v in src.items()})
    return stack
