"""Intensity, second-order correlation and sum-coordinate projection estimators.

For frames ``I_m``, ``m = 1..M``::

    G2(a, b) = 1/M     sum_m   I_m(a) I_m(b)
             - 1/(M-1) sum_m<M I_m(a) I_{m+1}(b)

    Gamma(k, l) = sum_{i, j} G2(k - i, l - j, i, j)

Bin ``(k, l)`` of ``Gamma`` collects every pixel pair whose indices add
up to ``(k, l)``; out-of-sensor terms are zero, so ``Gamma`` lives on a
``(2Nx - 1) x (2Ny - 1)`` grid. Both terms are linear convolutions, which
the FFT engine accumulates in the frequency domain while streaming frames.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import CapacityError
from .frames import FrameStack, read_stack, write_stack
from .validation import check_count, check_frames

DEFAULT_MEMORY_BUDGET = 512 * 2 ** 20


@dataclass
class CorrelationImage:
    """Sum-coordinate projection on the doubled sensor grid."""

    values: np.ndarray
    frame_count: int
    normalization: str = "raw"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or any(n % 2 == 0 for n in self.values.shape):
            raise ValueError("correlation images have odd (2N - 1) dimensions")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("correlation image contains non-finite values")
        if self.normalization not in ("raw", "unit-peak"):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    @property
    def sensor_shape(self):
        return tuple((n + 1) // 2 for n in self.values.shape)

    @property
    def center_bin(self):
        return tuple(n - 1 for n in self.sensor_shape)

    def coordinates(self):
        """r+ of every bin along each axis, in sensor pixels."""
        return tuple((np.arange(2 * n - 1) - (n - 1)) / 2 for n in self.sensor_shape)

    def unit_peak(self):
        peak = self.values.max()
        values = self.values / peak if peak > 0 else self.values.copy()
        return replace(self, values=values, normalization="unit-peak")

    def band_profile(self, start, stop, axis=0):
        """Mean over bins ``start..stop`` (inclusive) along ``axis``."""
        n = self.values.shape[axis]
        if not 0 <= start <= stop < n:
            raise ValueError(f"band {start}..{stop} outside 0..{n - 1}")
        band = np.take(self.values, np.arange(start, stop + 1), axis=axis)
        return band.mean(axis=axis)


@dataclass
class G2Volume:
    """``G2`` restricted to a rectangular region of interest.

    ``values[i, j, k, l]`` couples roi pixel ``(i, j)`` (first frame of the
    accidental term) with roi pixel ``(k, l)``.
    """

    values: np.ndarray
    roi: tuple


def _as_stack(frames):
    return frames if isinstance(frames, FrameStack) else FrameStack(check_frames(frames))


def _load(stack, start, stop, threshold):
    block = stack.chunk(start, stop)
    if threshold is not None:
        block = (block > threshold).astype(float)
    return block


def intensity_image(frames, threshold=None, chunk_size=1024):
    """Mean frame ``I(i, j) = 1/M sum_m I_m(i, j)``."""
    stack = _as_stack(frames)
    check_frames(stack, min_frames=1)
    total = np.zeros(stack.sensor_shape)
    for start in range(0, stack.n_frames, chunk_size):
        total += _load(stack, start, min(start + chunk_size, stack.n_frames), threshold).sum(axis=0)
    return total / stack.n_frames


def _check_budget(n_values, budget, what):
    need = n_values * 8
    if need > budget:
        raise CapacityError(
            f"{what} needs {need / 2 ** 20:.1f} MiB, above the {budget / 2 ** 20:.1f} MiB budget")


def _g2_matrix(stack, rows, cols, threshold, chunk_size):
    """Flattened G2 over the pixels ``rows x cols`` of the sensor."""
    m = stack.n_frames
    same = None
    acc = None
    for start in range(0, m, chunk_size):
        stop = min(start + chunk_size, m)
        block = _load(stack, start, min(stop + 1, m), threshold)[:, rows][:, :, cols]
        x = block.reshape(block.shape[0], -1)
        n_same = stop - start
        s = x[:n_same].T @ x[:n_same]
        a = x[:-1].T @ x[1:] if x.shape[0] > 1 else np.zeros_like(s)
        same = s if same is None else same + s
        acc = a if acc is None else acc + a
    return same / m - acc / (m - 1)


def g2_volume(frames, roi=None, threshold=None, memory_budget=DEFAULT_MEMORY_BUDGET,
              chunk_size=256):
    """Second-order correlation with accidental subtraction over a region.

    Parameters
    ----------
    frames : FrameStack or array_like, shape (M, Nx, Ny)
    roi : ((i0, i1), (j0, j1)), optional
        Half-open pixel bounds; defaults to the full sensor.

    Returns
    -------
    G2Volume
    """
    stack = _as_stack(frames)
    check_frames(stack, min_frames=2)
    nx, ny = stack.sensor_shape
    if roi is None:
        roi = ((0, nx), (0, ny))
    (i0, i1), (j0, j1) = roi
    if not (0 <= i0 < i1 <= nx and 0 <= j0 < j1 <= ny):
        raise ValueError(f"roi {roi} outside the {nx}x{ny} sensor")
    p = (i1 - i0) * (j1 - j0)
    _check_budget(2 * p * p, memory_budget, "G2 volume")
    g2 = _g2_matrix(stack, slice(i0, i1), slice(j0, j1), threshold, chunk_size)
    shape = (i1 - i0, j1 - j0)
    return G2Volume(g2.reshape(shape + shape), ((i0, i1), (j0, j1)))


def correlation_image_direct(frames, exclude_diagonal=False, threshold=None,
                             memory_budget=DEFAULT_MEMORY_BUDGET):
    """Reference evaluation: build the full G2 and sum it pixel pair by pixel pair.

    ``exclude_diagonal`` drops the ``G2(p, p)`` terms, i.e. products of a
    pixel with itself, which carry shot-noise variance rather than pairs.
    """
    stack = _as_stack(frames)
    check_frames(stack, min_frames=2)
    nx, ny = stack.sensor_shape
    g2 = g2_volume(stack, threshold=threshold, memory_budget=memory_budget).values
    g2 = g2.reshape(nx * ny, nx * ny)
    if exclude_diagonal:
        np.fill_diagonal(g2, 0.0)
    gamma = np.zeros((2 * nx - 1, 2 * ny - 1))
    for b in range(nx * ny):
        i, j = divmod(b, ny)
        # G2(a, b) over all first pixels a lands in bins a + b
        gamma[i:i + nx, j:j + ny] += g2[:, b].reshape(nx, ny)
    return CorrelationImage(gamma, stack.n_frames,
                            metadata={"engine": "direct", "exclude_diagonal": exclude_diagonal})


class _TreeSum:
    """Pairwise summation in arrival order; result depends only on the sequence."""

    def __init__(self):
        self._stack = []

    def add(self, item):
        level = 0
        while self._stack and self._stack[-1][0] == level:
            _, left = self._stack.pop()
            item = tuple(l + r for l, r in zip(left, item))
            level += 1
        self._stack.append((level, item))

    def total(self):
        if not self._stack:
            return None
        result = self._stack[-1][1]
        for _, left in reversed(self._stack[:-1]):
            result = tuple(l + r for l, r in zip(left, result))
        return result


def _fft_shape(sensor_shape):
    return tuple(sfft.next_fast_len(2 * n - 1, real=True) for n in sensor_shape)


def _chunk_spectra(block, pad):
    """Spectra of zero-padded frames, laid out ``(frame, v, u)``.

    Only rows that carry signal are row-transformed, which matters for
    sparse photon-counting frames.
    """
    c, nx, ny = block.shape
    px, py = pad
    nv = py // 2 + 1
    rows = np.nonzero(block.any(axis=2))
    half = np.zeros((c, nv, px), dtype=complex)
    if rows[0].size:
        half[rows[0], :, rows[1]] = sfft.rfft(block[rows], n=py, axis=-1)
    return sfft.fft(half, axis=-1, overwrite_x=True)


def _chunk_terms(stack, start, stop, pad, threshold):
    m = stack.n_frames
    block = _load(stack, start, min(stop + 1, m), threshold)
    n_same = stop - start
    spectra = _chunk_spectra(block, pad)
    same = np.zeros(spectra.shape[1:], dtype=complex)
    acc = np.zeros_like(same)
    tmp = np.empty_like(same)
    for k in range(n_same):
        same += np.multiply(spectra[k], spectra[k], out=tmp)
        if k + 1 < block.shape[0]:
            acc += np.multiply(spectra[k], spectra[k + 1], out=tmp)
    x = block[:n_same]
    diag_same = np.einsum("mij,mij->ij", x, x)
    diag_acc = np.einsum("mij,mij->ij", block[:-1][:n_same], block[1:][:n_same]) \
        if block.shape[0] > 1 else np.zeros_like(diag_same)
    return same, acc, x.sum(axis=0), diag_same, diag_acc


def _stream_terms(stack, chunk_size, workers, threshold):
    pad = _fft_shape(stack.sensor_shape)
    m = stack.n_frames
    bounds = [(s, min(s + chunk_size, m)) for s in range(0, m, chunk_size)]
    tree = _TreeSum()
    if workers <= 1:
        for start, stop in bounds:
            tree.add(_chunk_terms(stack, start, stop, pad, threshold))
        return tree.total(), pad
    window = 2 * workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending = []
        for start, stop in bounds:
            pending.append(pool.submit(_chunk_terms, stack, start, stop, pad, threshold))
            if len(pending) >= window:
                tree.add(pending.pop(0).result())
        for fut in pending:
            tree.add(fut.result())
    return tree.total(), pad


def correlation_terms_fft(frames, chunk_size=64, workers=1, threshold=None):
    """Streamed frame sums needed by the FFT engine.

    Returns a dict with the same-frame and consecutive-frame convolution
    sums, the intensity sum and the per-pixel diagonal products, all
    unnormalized, plus ``n_frames``.
    """
    stack = _as_stack(frames)
    check_frames(stack, min_frames=2)
    chunk_size = check_count(chunk_size, "chunk_size", minimum=1)
    (same, acc, total, diag_same, diag_acc), pad = _stream_terms(
        stack, chunk_size, max(1, int(workers or 1)), threshold)
    nx, ny = stack.sensor_shape
    crop = (slice(0, 2 * nx - 1), slice(0, 2 * ny - 1))
    conv_same = sfft.irfft2(same.T, s=pad)[crop]
    conv_acc = sfft.irfft2(acc.T, s=pad)[crop]
    return {"same": conv_same, "accidental": conv_acc, "intensity_sum": total,
            "diag_same": diag_same, "diag_accidental": diag_acc, "n_frames": stack.n_frames}


def _combine(terms, exclude_diagonal):
    m = terms["n_frames"]
    gamma = terms["same"] / m - terms["accidental"] / (m - 1)
    if exclude_diagonal:
        gamma[::2, ::2] -= terms["diag_same"] / m - terms["diag_accidental"] / (m - 1)
    return gamma


def correlation_image_fft(frames, exclude_diagonal=False, chunk_size=64, workers=1,
                          threshold=None):
    """Fast path: zero-padded FFT convolutions accumulated while streaming.

    Frames are processed in fixed chunks of ``chunk_size``; partial sums are
    reduced pairwise in chunk order, so the output is bit-identical for any
    ``workers``. Memory stays O(chunk x sensor).
    """
    terms = correlation_terms_fft(frames, chunk_size, workers, threshold)
    return CorrelationImage(_combine(terms, exclude_diagonal), terms["n_frames"],
                            metadata={"engine": "fft", "exclude_diagonal": exclude_diagonal})


def save_correlation_image(path, image):
    """Store as a one-frame f64 container (metadata keeps the frame count)."""
    meta = {"kind": "correlation_image", "frame_count": image.frame_count,
            "normalization": image.normalization}
    meta.update({k: v for k, v in image.metadata.items() if k not in meta})
    write_stack(path, FrameStack(image.values[None], meta), dtype="f64")


def load_correlation_image(path):
    stack = read_stack(path, mmap=False)
    meta = dict(stack.metadata)
    count = int(meta.pop("frame_count", 0))
    norm = meta.pop("normalization", "raw")
    return CorrelationImage(stack.to_array()[0], count, norm, meta)


class CorrelationImageEstimator(TransformerMixin, BaseEstimator):
    """Correlation-image reconstruction with a scikit-learn interface.

    ``fit`` consumes a frame stack and stores ``correlation_image_``,
    ``intensity_image_`` and ``n_frames_``; ``transform`` returns the
    correlation-image values of a stack.

    Parameters
    ----------
    engine : {"fft", "direct"}
    exclude_diagonal : bool
        Remove same-pixel products from the projection.
    chunk_size : int
        Frames per streamed chunk (fft engine). Fixes the summation order.
    workers : int
        Threads for the fft engine; does not change the result.
    threshold : float, optional
        Binarize frames (``value > threshold``) before estimation.
    """

    def __init__(self, engine="fft", exclude_diagonal=False, chunk_size=64, workers=1,
                 threshold=None, memory_budget=DEFAULT_MEMORY_BUDGET):
        self.engine = engine
        self.exclude_diagonal = exclude_diagonal
        self.chunk_size = chunk_size
        self.workers = workers
        self.threshold = threshold
        self.memory_budget = memory_budget

    def _estimate(self, X):
        if self.engine == "fft":
            terms = correlation_terms_fft(X, self.chunk_size, self.workers, self.threshold)
            image = CorrelationImage(_combine(terms, self.exclude_diagonal), terms["n_frames"],
                                     metadata={"engine": "fft",
                                               "exclude_diagonal": self.exclude_diagonal})
            return image, terms["intensity_sum"] / terms["n_frames"]
        if self.engine == "direct":
            image = correlation_image_direct(X, self.exclude_diagonal, self.threshold,
                                             self.memory_budget)
            return image, intensity_image(X, self.threshold)
        raise ValueError(f"engine must be 'fft' or 'direct', got {self.engine!r}")

    def fit(self, X, y=None):
        self.correlation_image_, self.intensity_image_ = self._estimate(X)
        self.n_frames_ = self.correlation_image_.frame_count
        self.sensor_shape_ = self.correlation_image_.sensor_shape
        return self

    def transform(self, X):
        check_is_fitted(self)
        image, _ = self._estimate(X)
        return image.values

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).correlation_image_.values
