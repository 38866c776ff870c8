"""Frame stacks and their on-disk container.

Container layout (all integers little-endian)::

    16 bytes  magic b"CORRCAMFRAMES\\0\\0\\0"
    5 x u32   version, M, Nx, Ny, dtype code (0=u16, 1=f32, 2=f64)
    payload   M frames of Nx x Ny values, row-major, frame-major
    u32       byte length L of the metadata block
    L bytes   UTF-8 ``key = value`` lines
"""

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .exceptions import FormatError
from .io import format_key_values, parse_key_values

MAGIC = b"CORRCAMFRAMES\0\0\0"
VERSION = 1
HEADER = struct.Struct("<5I")
HEADER_SIZE = len(MAGIC) + HEADER.size
DTYPE_CODES = {0: np.dtype("<u2"), 1: np.dtype("<f4"), 2: np.dtype("<f8")}
DTYPE_NAMES = {"u16": 0, "f32": 1, "f64": 2}


class EventFrames:
    """Sparse frames stored as per-frame lists of (pixel, value) events.

    Behaves like a read-only ``(M, Nx, Ny)`` float64 array for slicing.
    Events landing on the same pixel add up.
    """

    dtype = np.dtype(float)

    def __init__(self, ptr, pixels, values, sensor_shape):
        self.ptr = np.asarray(ptr, dtype=np.int64)
        self.pixels = np.asarray(pixels, dtype=np.int64)
        self.values = np.asarray(values, dtype=float)
        self.sensor_shape = tuple(int(n) for n in sensor_shape)
        if self.ptr.ndim != 1 or self.ptr.size < 1 or self.ptr[0] != 0:
            raise ValueError("ptr must start at 0")
        if self.ptr[-1] != self.pixels.size or self.pixels.size != self.values.size:
            raise ValueError("event arrays are inconsistent")

    @property
    def shape(self):
        return (self.ptr.size - 1,) + self.sensor_shape

    @property
    def ndim(self):
        return 3

    def __len__(self):
        return self.ptr.size - 1

    def _dense(self, start, stop):
        nx, ny = self.sensor_shape
        npix = nx * ny
        lo, hi = self.ptr[start], self.ptr[stop]
        frame_of = np.repeat(np.arange(stop - start), np.diff(self.ptr[start:stop + 1]))
        flat = np.bincount(frame_of * npix + self.pixels[lo:hi],
                           weights=self.values[lo:hi], minlength=(stop - start) * npix)
        return flat.reshape(stop - start, nx, ny)

    def __getitem__(self, key):
        m = len(self)
        if isinstance(key, (int, np.integer)):
            if key < 0:
                key += m
            if not 0 <= key < m:
                raise IndexError("frame index out of range")
            return self._dense(int(key), int(key) + 1)[0]
        if isinstance(key, slice):
            start, stop, step = key.indices(m)
            if step != 1:
                return self._dense(0, m)[key]
            return self._dense(start, max(start, stop))
        raise TypeError("EventFrames supports integer and slice indexing only")

    def __array__(self, dtype=None, copy=None):
        out = self._dense(0, len(self))
        return out if dtype is None else out.astype(dtype)


@dataclass
class FrameStack:
    """A sequence of ``M`` sensor frames plus free-form metadata.

    ``frames`` is anything shaped ``(M, Nx, Ny)`` that slices into arrays:
    an ndarray, a memmap of a container file, or a lazily rendered source.
    """

    frames: object
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not hasattr(self.frames, "shape") or not hasattr(self.frames, "__getitem__"):
            self.frames = np.asarray(self.frames)
        if len(self.frames.shape) != 3:
            raise ValueError(f"frames must be (M, Nx, Ny), got {self.frames.shape}")

    @property
    def n_frames(self):
        return int(self.frames.shape[0])

    @property
    def sensor_shape(self):
        return tuple(int(n) for n in self.frames.shape[1:])

    def __len__(self):
        return self.n_frames

    def chunk(self, start, stop):
        """Frames ``[start, stop)`` as a float64 array."""
        return np.asarray(self.frames[start:stop], dtype=float)

    def iter_chunks(self, chunk_size=256):
        for start in range(0, self.n_frames, chunk_size):
            yield start, self.chunk(start, min(start + chunk_size, self.n_frames))

    def to_array(self):
        return self.chunk(0, self.n_frames)


def _encode_metadata(metadata):
    return format_key_values(metadata).encode("utf-8")


def write_stack(path, stack, dtype="f32", chunk_size=1024):
    """Stream ``stack`` into a container file.

    ``u16`` payloads are rounded and clipped to ``[0, 65535]``.
    """
    if dtype not in DTYPE_NAMES:
        raise ValueError(f"dtype must be one of {sorted(DTYPE_NAMES)}")
    code = DTYPE_NAMES[dtype]
    np_dtype = DTYPE_CODES[code]
    if not isinstance(stack, FrameStack):
        stack = FrameStack(stack)
    m = stack.n_frames
    nx, ny = stack.sensor_shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(HEADER.pack(VERSION, m, nx, ny, code))
        for _, block in stack.iter_chunks(chunk_size):
            if code == 0:
                block = np.clip(np.rint(block), 0, 65535)
            fh.write(np.ascontiguousarray(block, dtype=np_dtype).tobytes())
        meta = _encode_metadata(stack.metadata)
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)


def read_stack(path, mmap=True):
    """Open a container file. Payload is memory-mapped unless ``mmap=False``."""
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        head = fh.read(HEADER_SIZE)
        if len(head) < HEADER_SIZE or head[:len(MAGIC)] != MAGIC:
            raise FormatError(f"{path}: bad magic, not a frame container")
        version, m, nx, ny, code = HEADER.unpack(head[len(MAGIC):])
        if version != VERSION:
            raise FormatError(f"{path}: unsupported container version {version}")
        if code not in DTYPE_CODES:
            raise FormatError(f"{path}: unknown dtype code {code}")
        np_dtype = DTYPE_CODES[code]
        payload = m * nx * ny * np_dtype.itemsize
        meta_at = HEADER_SIZE + payload
        if size < meta_at + 4:
            raise FormatError(f"{path}: file shorter than its declared dimensions")
        fh.seek(meta_at)
        (meta_len,) = struct.unpack("<I", fh.read(4))
        if size != meta_at + 4 + meta_len:
            raise FormatError(f"{path}: size mismatch ({size} bytes, expected {meta_at + 4 + meta_len})")
        try:
            metadata = parse_key_values(fh.read(meta_len).decode("utf-8"))
        except (UnicodeDecodeError, ValueError) as exc:
            raise FormatError(f"{path}: corrupt metadata block") from exc
        if mmap and payload:
            frames = np.memmap(path, dtype=np_dtype, mode="r", offset=HEADER_SIZE,
                               shape=(m, nx, ny))
        else:
            fh.seek(HEADER_SIZE)
            frames = np.frombuffer(fh.read(payload), dtype=np_dtype).reshape(m, nx, ny)
    return FrameStack(frames, metadata)


def payload_dtype_name(stack):
    dtype = np.dtype(getattr(stack.frames, "dtype", float))
    for code, dt in DTYPE_CODES.items():
        if dt == dtype.newbyteorder("<"):
            return {v: k for k, v in DTYPE_NAMES.items()}[code]
    return None
