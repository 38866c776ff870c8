"""Input validation helpers used across estimators."""

import numbers

import numpy as np


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a finite positive number, got {value!r}")
    return float(value)


def check_nonnegative(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
    return float(value)


def check_probability(value, name):
    value = check_nonnegative(value, name)
    if value > 1:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def check_count(value, name, minimum=0):
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_image(image, name="image", ndim=2):
    """Return ``image`` as a finite float64 array of the given rank."""
    arr = np.asarray(image, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_frames(frames, min_frames=1):
    """Validate a frame source without materializing it.

    Anything with ``shape == (M, Nx, Ny)``, ``len()`` and slicing that
    returns arrays is accepted: ndarrays, memmaps, lazily rendered stacks
    and :class:`~corrcam.frames.FrameStack` objects.
    """
    source = getattr(frames, "frames", frames)
    if not hasattr(source, "shape") or not hasattr(source, "__getitem__"):
        source = np.asarray(source)
    shape = tuple(source.shape)
    if len(shape) != 3:
        raise ValueError(f"frames must have shape (M, Nx, Ny), got {shape}")
    if shape[0] < min_frames:
        if shape[0] == 0:
            raise ValueError("empty frame stack")
        raise ValueError(f"at least {min_frames} frames required, got {shape[0]}")
    if shape[1] < 1 or shape[2] < 1:
        raise ValueError(f"degenerate sensor shape {shape[1:]}")
    return source
