"""End-to-end workflows assembled from a :class:`RunConfig`."""

from dataclasses import dataclass

import numpy as np

from .analysis import compute_snr, fit_double_gaussian, fit_snr_scaling, fit_width_scaling
from .config import RunConfig
from .estimator import CorrelationImageEstimator
from .exceptions import ConfigError
from .holography import (CANONICAL_PHASES, HologramSet, PhaseShiftingHolography,
                         combine_phases, phase_sweep_curve)
from .objects import load_object, make_object
from .optics import ObjectSpec, OpticalConfig
from .pairgen import CameraModel, PairSourceConfig, simulate_stack


def derive_seed(seed, *tags):
    """Independent integer seed for a sub-run, e.g. one phase step of a set."""
    return int(np.random.SeedSequence(seed, spawn_key=tags).generate_state(1)[0])


def build_object(cfg):
    kind = cfg["object.kind"]
    n = cfg["object.size"]
    px = cfg["object.pixel_size"]
    if kind == "file":
        if cfg["object.amplitude_path"] is None:
            raise ConfigError("object.kind = file needs object.amplitude_path")
        return load_object(cfg["object.amplitude_path"], cfg["object.phase_path"], pixel_size=px)
    params = {
        "cat": {"n": n},
        "l_shape": {"n": n},
        "disc": {"n": n, "radius": cfg["object.radius"]},
        "grating": {"n": n, "period": cfg["object.period"]},
        "gaussian": {"n": n, "sigma": cfg["object.sigma"]},
        "point": {"n": n},
        "two_level_phase": {"n": n, "radius": cfg["object.radius"], "step": cfg["object.step"]},
    }
    if kind not in params:
        raise ConfigError(f"unknown object.kind {kind!r}")
    try:
        return make_object(kind, px, **params[kind])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_optics(cfg):
    o = cfg.section("optics")
    try:
        return OpticalConfig(lambda_pump=o["lambda_pump"], f=o["f"], f_prime=o["f_prime"],
                             pixel_pitch=o["pixel_pitch"],
                             sensor_shape=(o["sensor_x"], o["sensor_y"]),
                             d=o["d"], d_prime=o["d_prime"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_source(cfg, obj=None, theta=None, reference_only=False):
    s = cfg.section("source")
    support = None
    if s["reference_support"] == "object":
        if obj is None:
            raise ConfigError("source.reference_support = object needs the object grid")
        support = obj.amplitude > 0
    elif s["reference_support"] != "all":
        raise ConfigError("source.reference_support must be 'all' or 'object'")
    try:
        return PairSourceConfig(
            mean_pairs_per_frame=s["mean_pairs_per_frame"], minus_sigma=s["minus_sigma"],
            mode=s["mode"], theta=s["theta"] if theta is None else theta,
            reference_amplitude=s["reference_amplitude"],
            instrumental_phase=s["instrumental_phase"], reference_support=support,
            keep_singles=s["keep_singles"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_camera(cfg):
    c = cfg.section("camera")
    try:
        return CameraModel(**c)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def simulate(cfg, obj=None, optics=None, theta=None, seed=None, workers=None):
    """Simulate one stack as configured; ``theta``/``seed`` override the config."""
    obj = build_object(cfg) if obj is None else obj
    optics = build_optics(cfg) if optics is None else optics
    source = build_source(cfg, obj, theta)
    return simulate_stack(obj, optics, source, build_camera(cfg), cfg["run.frames"],
                          cfg["run.seed"] if seed is None else seed,
                          workers=cfg["run.workers"] if workers is None else workers)


def reconstructor(cfg, workers=None):
    return CorrelationImageEstimator(
        engine=cfg["reconstruct.engine"], exclude_diagonal=cfg["reconstruct.exclude_diagonal"],
        chunk_size=cfg["reconstruct.chunk_size"],
        workers=cfg["run.workers"] if workers is None else workers,
        threshold=cfg["reconstruct.threshold"])


def reference_object(obj):
    """The no-object configuration: same aperture, flat phase."""
    return ObjectSpec(obj.amplitude, None, obj.pixel_size)


@dataclass
class HolographyResult:
    phase: object
    object_raw: object
    reference: object
    object_set: HologramSet
    reference_set: HologramSet


def run_holography(cfg, workers=None):
    """Simulate object and reference four-step sets and retrieve the phase."""
    if cfg["source.mode"] != "interference":
        raise ConfigError("holography needs source.mode = interference")
    obj = build_object(cfg)
    optics = build_optics(cfg)
    est = reconstructor(cfg, workers)
    sets = {}
    for tag, target in ((0, obj), (1, reference_object(obj))):
        images = {}
        for step, theta in enumerate(CANONICAL_PHASES):
            stack = simulate(cfg, target, optics, theta, derive_seed(cfg["run.seed"], tag, step),
                             workers)
            images[theta] = est.fit(stack).correlation_image_
        sets[tag] = HologramSet(images, {"run.seed": cfg["run.seed"], "set": tag})
    holo = PhaseShiftingHolography(cfg["holography.support_threshold"]).fit(sets[1])
    raw = combine_phases(sets[0], cfg["holography.support_threshold"])
    return HolographyResult(holo.transform(sets[0]), raw, holo.reference_phase_, sets[0], sets[1])


def run_phase_sweep(cfg, n_points=None, probe=None, workers=None):
    """Simulate ``n_points`` equally spaced phase shifts over ``[0, 2 pi)``."""
    n_points = cfg["holography.sweep_points"] if n_points is None else n_points
    obj = build_object(cfg)
    optics = build_optics(cfg)
    est = reconstructor(cfg, workers)
    images = {}
    for step in range(n_points):
        theta = 2 * np.pi * step / n_points
        stack = simulate(cfg, obj, optics, theta, derive_seed(cfg["run.seed"], 2, step), workers)
        images[theta] = est.fit(stack).correlation_image_
    return phase_sweep_curve(images, probe)


@dataclass
class ScalingRun:
    focal_lengths: tuple
    widths: list
    snrs: list
    fits: list
    width_fit: object
    snr_fit: object

    def width_points(self):
        return list(zip(self.focal_lengths, self.widths))

    def snr_points(self):
        return list(zip(self.focal_lengths, self.snrs))


def run_scaling(cfg, focal_lengths=None, workers=None):
    """Simulate one acquisition per focal length (mm) and fit both laws.

    The reported width is the geometric mean of the two fitted axes, in
    sensor pixels of the sum coordinate.
    """
    focal_lengths = tuple(cfg["analysis.focal_lengths"] if focal_lengths is None else focal_lengths)
    obj = build_object(cfg)
    est = reconstructor(cfg, workers)
    widths, snrs, fits = [], [], []
    for f_mm in focal_lengths:
        optics = build_optics(cfg.replace(optics__f=f_mm * 1e-3))
        stack = simulate(cfg, obj, optics, seed=derive_seed(cfg["run.seed"], 3, int(round(f_mm * 1e3))),
                         workers=workers)
        image = est.fit(stack).correlation_image_
        fit = fit_double_gaussian(image)
        fits.append(fit)
        widths.append(float(np.sqrt(fit.widths[0] * fit.widths[1])))
        snrs.append(compute_snr(image, fit))
    return ScalingRun(focal_lengths, widths, snrs, fits,
                      fit_width_scaling(list(zip(focal_lengths, widths))),
                      fit_snr_scaling(list(zip(focal_lengths, snrs))))


def theoretical_width_coefficient(cfg):
    """``a`` of ``width = a / f`` for a Gaussian object, in pixel * mm."""
    if cfg["object.kind"] != "gaussian":
        raise ConfigError("the width law needs object.kind = gaussian")
    sigma = cfg["object.sigma"] * cfg["object.pixel_size"]
    return cfg["optics.f_prime"] * 1e3 * sigma / cfg["optics.pixel_pitch"]


__all__ = ["RunConfig", "derive_seed", "build_object", "build_optics", "build_source",
           "build_camera", "simulate", "reconstructor", "run_holography", "run_phase_sweep",
           "run_scaling", "theoretical_width_coefficient", "reference_object"]
