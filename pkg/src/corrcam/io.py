"""Small text and image formats: ``key = value`` configs, PGM and CSV."""

import math

import numpy as np

from .exceptions import ConfigError, FormatError


def parse_key_values(text):
    """Parse ``key = value`` lines into an ordered dict of strings.

    Blank lines and lines starting with ``#`` are skipped. Everything after
    a ``#`` preceded by whitespace is a comment.

    Raises
    ------
    ConfigError
        On a line without ``=``, an empty key or a repeated key. The error
        carries the 1-based line number.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(" #", 1)[0].strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=lineno)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        out[key] = value
    return out


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def format_key_values(mapping):
    """Inverse of :func:`parse_key_values` for flat mappings."""
    return "".join(f"{k} = {format_value(v)}\n" for k, v in mapping.items())


def read_key_values(path):
    with open(path, encoding="utf-8") as fh:
        return parse_key_values(fh.read())


def write_key_values(path, mapping):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_key_values(mapping))


# -- PGM ---------------------------------------------------------------------

def write_pgm(path, image, maxval=255):
    """Write a binary (P5) PGM.

    ``image`` must already hold integers in ``[0, maxval]``. 16-bit files
    (``maxval > 255``) are big-endian as the format requires.
    """
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    if image.size and (image.min() < 0 or image.max() > maxval):
        raise ValueError("pixel values outside [0, maxval]")
    dtype = ">u2" if maxval > 255 else "u1"
    rows, cols = image.shape
    header = f"P5\n{cols} {rows}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(image, dtype=dtype).tobytes())


def _pgm_tokens(data, count):
    """Return ``count`` header tokens and the offset of the raster."""
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and chr(data[pos]).isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not chr(data[pos]).isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos].decode("ascii"))
    # exactly one whitespace byte separates header and raster
    return tokens, pos + 1


def read_pgm(path):
    """Read a P5 PGM. Returns ``(image, maxval)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _pgm_tokens(data, 4)
    if tokens[0] != "P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        cols, rows, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: bad PGM header") from exc
    dtype = ">u2" if maxval > 255 else "u1"
    nbytes = rows * cols * np.dtype(dtype).itemsize
    raster = data[offset:offset + nbytes]
    if len(raster) != nbytes:
        raise FormatError(f"{path}: PGM raster truncated")
    return np.frombuffer(raster, dtype=dtype).reshape(rows, cols).astype(np.int64), maxval


def to_uint8_preview(values):
    """Linear map of a real image onto ``[0, 255]`` (constant images -> 0)."""
    values = np.asarray(values, dtype=float)
    lo, hi = np.nanmin(values), np.nanmax(values)
    if not np.isfinite(lo) or hi <= lo:
        return np.zeros(values.shape, dtype=np.uint8)
    scaled = np.rint((values - lo) / (hi - lo) * 255.0)
    return np.nan_to_num(scaled, nan=0.0).astype(np.uint8)


# -- CSV ---------------------------------------------------------------------

def write_csv_matrix(path, matrix, fmt="%.17g"):
    """Row-major decimal CSV, ``,`` separated, ``\\n`` rows. NaN -> ``nan``."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in matrix:
            fh.write(",".join("nan" if math.isnan(v) else fmt % v for v in row))
            fh.write("\n")


def read_csv_matrix(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric CSV field") from exc
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    if len({len(r) for r in rows}) != 1:
        raise FormatError(f"{path}: ragged CSV rows")
    return np.array(rows, dtype=float)


def read_points_csv(path):
    """Read two-column ``x,y`` points, tolerating one header line."""
    pts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split(",")
            try:
                x, y = (float(v) for v in fields)
            except ValueError as exc:
                if lineno == 1 and not pts:
                    continue
                raise FormatError(f"{path}:{lineno}: expected two numeric fields") from exc
            pts.append((x, y))
    if not pts:
        raise FormatError(f"{path}: no points")
    return pts


def write_points_csv(path, points, header=("x", "y")):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in points:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
