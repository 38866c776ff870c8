"""Procedural test objects on square grids.

Every builder returns arrays indexed ``[x, y]``; wrap them in
:class:`~corrcam.optics.ObjectSpec` together with a pixel size, or use
:func:`make_object`.
"""

import os

import numpy as np

from .exceptions import FormatError
from .io import (read_csv_matrix, read_key_values, read_pgm, write_csv_matrix,
                 write_key_values, write_pgm)
from .optics import ObjectSpec


def _grid(n):
    c = (np.arange(n) - (n - 1) / 2) / (n / 2)
    return np.meshgrid(c, c, indexing="ij")


def _triangle(x, y, a, b, c):
    def side(p, q):
        return (x - q[0]) * (p[1] - q[1]) - (p[0] - q[0]) * (y - q[1])
    d1, d2, d3 = side(a, b), side(b, c), side(c, a)
    neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
    pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
    return ~(neg & pos)


def cat_mask(n=64):
    """Binary cat head: round face, two pointed ears, eye holes.

    Axis 0 runs top to bottom, so the ears sit at small row index.
    """
    x, y = _grid(n)
    face = (x - 0.15) ** 2 / 0.55 ** 2 + y ** 2 / 0.62 ** 2 <= 1
    left = _triangle(x, y, (-0.85, -0.55), (-0.1, -0.6), (-0.25, -0.1))
    right = _triangle(x, y, (-0.85, 0.55), (-0.1, 0.6), (-0.25, 0.1))
    eyes = ((x + 0.02) ** 2 + (np.abs(y) - 0.24) ** 2) <= 0.1 ** 2
    nose = _triangle(x, y, (0.18, -0.08), (0.18, 0.08), (0.3, 0.0))
    return (face | left | right) & ~eyes & ~nose


def l_shape(n=32, arm=0.35, thickness=0.25):
    """Asymmetric L: a vertical bar plus a foot towards +y."""
    x, y = _grid(n)
    bar = (np.abs(x) <= 0.8) & (y >= -0.6) & (y <= -0.6 + 2 * thickness)
    foot = (x >= 0.8 - 2 * thickness) & (x <= 0.8) & (y >= -0.6) & (y <= -0.6 + 2 * arm + 0.8)
    return bar | foot


def grating(n=64, period=8, axis=1, duty=0.5):
    """Binary bar grating with ``period`` samples along ``axis``."""
    idx = np.arange(n)
    bars = (idx % period) < duty * period
    out = np.zeros((n, n), dtype=bool)
    if axis == 0:
        out[bars, :] = True
    else:
        out[:, bars] = True
    return out


def gaussian_amplitude(n=64, sigma=10.0, center=(0.0, 0.0)):
    """Amplitude whose intensity is ``exp(-r**2 / sigma**2)`` (sigma in samples)."""
    i = np.arange(n) - (n - 1) / 2
    x, y = np.meshgrid(i - center[0], i - center[1], indexing="ij")
    return np.exp(-(x ** 2 + y ** 2) / (2 * sigma ** 2))


def point(n=33, offset=(0, 0)):
    """Single unit sample; ``n`` odd keeps it on the optical axis."""
    out = np.zeros((n, n))
    out[(n - 1) // 2 + offset[0], (n - 1) // 2 + offset[1]] = 1.0
    return out


def disc(n=32, radius=0.8):
    x, y = _grid(n)
    return x ** 2 + y ** 2 <= radius ** 2


def two_level_phase(n=32, radius=0.8, step=1.2):
    """Unit-amplitude disc whose right half carries phase ``step``.

    Returns
    -------
    amplitude, phase : ndarray
    """
    x, y = _grid(n)
    support = x ** 2 + y ** 2 <= radius ** 2
    phase = np.where(support & (y > 0), step, 0.0)
    return support.astype(float), phase


BUILDERS = {
    "cat": cat_mask,
    "l_shape": l_shape,
    "grating": grating,
    "gaussian": gaussian_amplitude,
    "point": point,
    "disc": disc,
}


def make_object(kind, pixel_size, **params):
    """Build an :class:`ObjectSpec` by name.

    ``kind`` is one of ``BUILDERS`` or ``"two_level_phase"``.
    """
    if kind == "two_level_phase":
        amp, phase = two_level_phase(**params)
        return ObjectSpec(amp, phase, pixel_size)
    if kind not in BUILDERS:
        raise ValueError(f"unknown object kind {kind!r}; choose from "
                         f"{', '.join(sorted(BUILDERS) + ['two_level_phase'])}")
    return ObjectSpec(np.asarray(BUILDERS[kind](**params), dtype=float), None, pixel_size)


def save_object(stem, obj, optics=None):
    """Write ``<stem>.pgm`` (16-bit amplitude), ``<stem>.csv`` (phase) and a
    ``<stem>.txt`` sidecar with the pixel size, amplitude scale and, if
    given, the optical constants."""
    scale = float(obj.amplitude.max())
    write_pgm(f"{stem}.pgm", np.round(obj.amplitude / scale * 65535).astype(np.int64), 65535)
    write_csv_matrix(f"{stem}.csv", obj.phase)
    side = {"pixel_size": obj.pixel_size, "amplitude_scale": scale}
    if optics is not None:
        side.update({
            "optics.lambda_pump": optics.lambda_pump, "optics.f": optics.f,
            "optics.f_prime": optics.f_prime, "optics.pixel_pitch": optics.pixel_pitch,
            "optics.sensor_x": optics.sensor_shape[0], "optics.sensor_y": optics.sensor_shape[1],
        })
    write_key_values(f"{stem}.txt", side)


def load_object(amplitude_path, phase_path=None, sidecar_path=None, pixel_size=None):
    """Read an object written by :func:`save_object` (or any P5 PGM + CSV).

    The sidecar defaults to the PGM path with a ``.txt`` suffix when it
    exists; its ``pixel_size`` wins over the argument.
    """
    raw, maxval = read_pgm(amplitude_path)
    if sidecar_path is None:
        guess = os.path.splitext(amplitude_path)[0] + ".txt"
        sidecar_path = guess if os.path.exists(guess) else None
    scale = 1.0
    if sidecar_path is not None:
        side = read_key_values(sidecar_path)
        try:
            pixel_size = float(side.get("pixel_size", pixel_size))
            scale = float(side.get("amplitude_scale", 1.0))
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{sidecar_path}: bad sidecar value ({exc})") from None
    if pixel_size is None:
        raise FormatError(f"{amplitude_path}: no pixel size given and no sidecar found")
    phase = None
    if phase_path is not None:
        phase = read_csv_matrix(phase_path)
        if phase.shape != raw.shape:
            raise FormatError(f"{phase_path}: phase shape {phase.shape} != amplitude {raw.shape}")
        phase = np.nan_to_num(phase)
    return ObjectSpec(raw / maxval * scale, phase, pixel_size)
