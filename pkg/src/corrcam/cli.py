"""Command-line front end: ``corrcam {simulate,reconstruct,holography,analyze}``.

Exit codes: 0 success, 2 configuration or input error, 3 capacity,
4 numerical non-convergence, 5 I/O or file-format error.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import compute_snr, fit_double_gaussian, fit_snr_scaling, fit_width_scaling
from .config import RunConfig
from .estimator import load_correlation_image, save_correlation_image
from .exceptions import ConfigError, CorrcamError
from .frames import FrameStack, read_stack, write_stack
from .holography import HologramSet, PhaseShiftingHolography, combine_phases, fit_sinusoid
from .io import (read_csv_matrix, read_points_csv, to_uint8_preview, write_csv_matrix,
                 write_key_values, write_pgm, write_points_csv)
from .pipeline import (reconstructor, run_holography, run_phase_sweep, run_scaling, simulate,
                       theoretical_width_coefficient)

log = logging.getLogger("corrcam")

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4, 5


def _load_config(args):
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig({})
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["run__seed"] = args.seed
    workers = _workers(args)
    if workers is not None:
        overrides["run__workers"] = workers
    if getattr(args, "engine", None):
        overrides["reconstruct__engine"] = args.engine
    if getattr(args, "threshold", None) is not None:
        overrides["reconstruct__threshold"] = args.threshold
    if getattr(args, "keep_diagonal", False):
        overrides["reconstruct__exclude_diagonal"] = False
    if getattr(args, "frames", None) is not None:
        overrides["run__frames"] = args.frames
    return cfg.replace(**overrides) if overrides else cfg


def _workers(args):
    if getattr(args, "workers", None) is not None:
        return args.workers
    env = os.environ.get("CORRCAM_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"CORRCAM_WORKERS must be an integer, got {env!r}") from None
    return None


def _out_dir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out, command, cfg):
    write_key_values(out / "manifest.txt", {
        "command": command, "config_sha256": cfg.digest(), "seed": cfg["run.seed"],
        "version": __version__,
    })
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")


def _parse_profile(spec, shape):
    """``rows:A:B`` or ``cols:A:B`` (inclusive bin indices)."""
    try:
        kind, a, b = spec.split(":")
        a, b = int(a), int(b)
    except ValueError:
        raise ConfigError(f"--profile expects rows:A:B or cols:A:B, got {spec!r}") from None
    if kind not in ("rows", "cols"):
        raise ConfigError(f"--profile band must be 'rows' or 'cols', got {kind!r}")
    axis = 0 if kind == "rows" else 1
    if not 0 <= a <= b < shape[axis]:
        raise ConfigError(f"--profile band {a}..{b} outside 0..{shape[axis] - 1}")
    return axis, a, b


def cmd_simulate(args):
    cfg = _load_config(args)
    out = _out_dir(args)
    theta = args.theta
    stack = simulate(cfg, theta=theta)
    stack.metadata["config_sha256"] = cfg.digest()
    path = out / args.output
    write_stack(path, stack, dtype=cfg["run.dtype"])
    _write_manifest(out, "simulate", cfg)
    sys.stdout.write(cfg.to_text())
    log.info("wrote %s (%d frames)", path, stack.n_frames)
    return EXIT_OK


def _reconstruct(stack, cfg):
    est = reconstructor(cfg).fit(stack)
    return est.correlation_image_, est.intensity_image_


def _save_reconstruction(out, image, intensity, profile=None):
    save_correlation_image(out / "correlation.ccf", image)
    write_pgm(out / "correlation.pgm", to_uint8_preview(image.values))
    write_stack(out / "intensity.ccf", FrameStack(intensity[None], {"kind": "intensity_image",
                                                                    "frame_count": image.frame_count}),
                dtype="f64")
    write_pgm(out / "intensity.pgm", to_uint8_preview(intensity))
    if profile is not None:
        axis, a, b = _parse_profile(profile, image.values.shape)
        coords = image.coordinates()[1 - axis]
        write_csv_matrix(out / "profile.csv", np.vstack([coords, image.band_profile(a, b, axis)]))


def cmd_reconstruct(args):
    cfg = _load_config(args)
    out = _out_dir(args)
    stack = read_stack(args.stack)
    image, intensity = _reconstruct(stack, cfg)
    _save_reconstruction(out, image, intensity, args.profile)
    _write_manifest(out, "reconstruct", cfg)
    log.info("reconstructed %s from %d frames", args.stack, image.frame_count)
    return EXIT_OK


def _set_from_stacks(paths, cfg):
    images = {}
    est = reconstructor(cfg)
    for path in paths:
        stack = read_stack(path)
        if "source.theta" not in stack.metadata:
            raise ConfigError(f"{path}: stack has no source.theta phase key")
        theta = float(stack.metadata["source.theta"])
        images[theta] = est.fit(stack).correlation_image_
    try:
        return HologramSet(images)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None


def _save_phase(out, name, phase_map):
    phase_map.save(str(out / name))


def cmd_holography(args):
    cfg = _load_config(args)
    out = _out_dir(args)
    if args.sweep:
        curve = run_phase_sweep(cfg, args.sweep_points)
        fit = fit_sinusoid(*zip(*curve))
        write_points_csv(out / "sweep.csv", curve, header=("theta", "gamma"))
        write_key_values(out / "sweep_fit.txt", {"offset": fit.offset, "amplitude": fit.amplitude,
                                                 "phase": fit.phase, "r_squared": fit.r_squared,
                                                 "period": fit.period})
    elif args.object:
        if not args.reference:
            raise ConfigError("--object needs --reference stacks as well")
        thr = cfg["holography.support_threshold"]
        obj_set = _set_from_stacks(args.object, cfg)
        ref_set = _set_from_stacks(args.reference, cfg)
        holo = PhaseShiftingHolography(thr).fit(ref_set)
        _save_phase(out, "object_phase", combine_phases(obj_set, thr))
        _save_phase(out, "reference_phase", holo.reference_phase_)
        _save_phase(out, "phase", holo.transform(obj_set))
    else:
        result = run_holography(cfg)
        _save_phase(out, "object_phase", result.object_raw)
        _save_phase(out, "reference_phase", result.reference)
        _save_phase(out, "phase", result.phase)
    _write_manifest(out, "holography", cfg)
    return EXIT_OK


def _load_image(path):
    if str(path).endswith(".ccf"):
        return load_correlation_image(path)
    return read_csv_matrix(path)


def cmd_analyze(args):
    out = _out_dir(args)
    if args.mode in ("width", "snr"):
        if not args.inputs:
            raise ConfigError(f"--mode {args.mode} needs at least one image")
        for path in args.inputs:
            image = _load_image(path)
            fit = fit_double_gaussian(image)
            report = fit.as_dict()
            if args.mode == "snr":
                report["snr"] = compute_snr(image, fit)
            write_key_values(out / f"{Path(path).stem}_{args.mode}.txt", report)
        return EXIT_OK
    if args.widths or args.snr:
        if args.widths:
            write_key_values(out / "width_scaling.txt",
                             vars(fit_width_scaling(read_points_csv(args.widths))))
        if args.snr:
            write_key_values(out / "snr_scaling.txt",
                             vars(fit_snr_scaling(read_points_csv(args.snr))))
        return EXIT_OK
    cfg = _load_config(args)
    run = run_scaling(cfg)
    write_points_csv(out / "widths.csv", run.width_points(), header=("f_mm", "width_px"))
    write_points_csv(out / "snr.csv", run.snr_points(), header=("f_mm", "snr"))
    report = {f"width.{k}": v for k, v in vars(run.width_fit).items()}
    report.update({f"snr.{k}": v for k, v in vars(run.snr_fit).items()})
    if cfg["object.kind"] == "gaussian":
        report["width.theoretical_coefficient"] = theoretical_width_coefficient(cfg)
    write_key_values(out / "scaling.txt", report)
    _write_manifest(out, "analyze", cfg)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="corrcam", description=(
        "Simulate photon-pair camera frames and recover images hidden in their correlations."))
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, engine=False):
        p.add_argument("--config", help="key = value run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int, help="worker threads (env CORRCAM_WORKERS)")
        p.add_argument("--out-dir", default=".")
        if engine:
            p.add_argument("--engine", choices=("direct", "fft"))
            p.add_argument("--threshold", type=float, help="binarize frames above this level")
            p.add_argument("--keep-diagonal", action="store_true",
                           help="keep same-pixel products in the projection")

    p = sub.add_parser("simulate", help="simulate a frame stack")
    common(p)
    p.add_argument("--frames", type=int)
    p.add_argument("--theta", type=float, help="phase shift for interference mode")
    p.add_argument("--output", default="stack.ccf")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="intensity and correlation images of a stack")
    common(p, engine=True)
    p.add_argument("stack")
    p.add_argument("--profile", help="band profile CSV: rows:A:B or cols:A:B")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("holography", help="four-step phase retrieval")
    common(p, engine=True)
    p.add_argument("--object", nargs=4, metavar="STACK", help="object stacks, one per phase")
    p.add_argument("--reference", nargs=4, metavar="STACK", help="reference stacks")
    p.add_argument("--sweep", action="store_true", help="simulate a phase sweep instead")
    p.add_argument("--sweep-points", type=int)
    p.set_defaults(func=cmd_holography)

    p = sub.add_parser("analyze", help="spot fits and focal-length scaling laws")
    common(p, engine=True)
    p.add_argument("--mode", choices=("width", "snr", "scaling"), required=True)
    p.add_argument("inputs", nargs="*", help="correlation images (.ccf) or CSV matrices")
    p.add_argument("--widths", help="CSV of (f_mm, width) points")
    p.add_argument("--snr", help="CSV of (f_mm, snr) points")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CorrcamError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except (ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except MemoryError as exc:
        log.error("out of memory: %s", exc)
        return EXIT_CAPACITY
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
