"""Run configuration: a flat ``section.key = value`` text format.

Every key has a type and a default; unknown keys are rejected with the
line they appear on. ``RunConfig.to_text()`` writes all effective values,
defaults included, and parses back to an equal config.
"""

import hashlib
from dataclasses import dataclass
from importlib import resources

from .exceptions import ConfigError
from .io import format_value, parse_key_values


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _optional(parse, *aliases):
    def inner(text):
        return None if text.lower() in ("none",) + aliases else parse(text)
    return inner


def _float_list(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


SCHEMA = {
    "object.kind": (str, "cat"),
    "object.size": (_int, 64),
    "object.pixel_size": (float, 40e-6),
    "object.sigma": (float, 10.0),
    "object.period": (_int, 8),
    "object.radius": (float, 0.8),
    "object.step": (float, 1.2),
    "object.amplitude_path": (_optional(str), None),
    "object.phase_path": (_optional(str), None),
    "optics.lambda_pump": (float, 405e-9),
    "optics.f": (float, 0.1),
    "optics.f_prime": (float, 0.0117),
    "optics.pixel_pitch": (float, 16e-6),
    "optics.sensor_x": (_int, 64),
    "optics.sensor_y": (_int, 64),
    "optics.d": (_optional(float), None),
    "optics.d_prime": (_optional(float), None),
    "source.mean_pairs_per_frame": (float, 4.0),
    "source.minus_sigma": (float, 1.5),
    "source.mode": (str, "amplitude"),
    "source.theta": (float, 0.0),
    "source.reference_amplitude": (float, 1.0),
    "source.instrumental_phase": (float, 0.0),
    "source.reference_support": (str, "all"),
    "source.keep_singles": (_bool, True),
    "camera.quantum_efficiency": (float, 0.7),
    "camera.dark_rate": (_optional(float, "auto"), None),
    "camera.readout_sigma": (float, 30.0),
    "camera.gain": (float, 1000.0),
    "camera.gain_model": (str, "exponential"),
    "camera.threshold": (_optional(float), None),
    "run.frames": (_int, 100000),
    "run.seed": (_int, 0),
    "run.workers": (_int, 1),
    "run.dtype": (str, "f32"),
    "reconstruct.engine": (str, "fft"),
    "reconstruct.exclude_diagonal": (_bool, True),
    "reconstruct.threshold": (_optional(float), None),
    "reconstruct.chunk_size": (_int, 64),
    "holography.support_threshold": (float, 0.1),
    "holography.sweep_points": (_int, 10),
    "analysis.focal_lengths": (_float_list, (50.0, 75.0, 100.0, 150.0, 200.0)),
}


@dataclass
class RunConfig:
    """Validated mapping of every known key to its effective value."""

    values: dict

    def __post_init__(self):
        unknown = set(self.values) - set(SCHEMA)
        if unknown:
            raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
        self.values = {k: self.values.get(k, default) for k, (_, default) in SCHEMA.items()}

    @classmethod
    def from_text(cls, text):
        raw = parse_key_values(text)
        lines = _key_lines(text)
        values = {}
        for key, value in raw.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}", line=lines.get(key))
            try:
                values[key] = SCHEMA[key][0](value)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}", line=lines.get(key)) from None
        return cls(values)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except UnicodeDecodeError as exc:
            raise ConfigError(f"{path}: not UTF-8 text ({exc.reason})") from None
        try:
            return cls.from_text(text)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    @classmethod
    def sample(cls, name):
        """Load one of the configs shipped in ``corrcam/data``."""
        text = resources.files("corrcam").joinpath("data", f"{name}.conf").read_text("utf-8")
        return cls.from_text(text)

    def __getitem__(self, key):
        return self.values[key]

    def replace(self, **changes):
        """Copy with ``section__key=value`` overrides (``__`` stands for ``.``)."""
        values = dict(self.values)
        for name, value in changes.items():
            key = name.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
            values[key] = value
        return RunConfig(values)

    def section(self, name):
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def to_text(self):
        return "".join(f"{k} = {format_value(v)}\n" for k, v in self.values.items())

    def digest(self):
        """SHA-256 of the canonical text, leaving out ``run.workers``, which
        never changes results."""
        text = "".join(line for line in self.to_text().splitlines(keepends=True)
                       if not line.startswith("run.workers ="))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _key_lines(text):
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(" #", 1)[0].strip()
        if "=" in line and not line.startswith("#"):
            lines.setdefault(line.split("=", 1)[0].strip(), lineno)
    return lines
