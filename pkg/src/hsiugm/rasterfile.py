"""Header + raw raster format shared by cubes, feature stacks, probability
fields, and segmentations.

The header is a UTF-8 text file of ``key=value`` lines with at least
``height``, ``width``, ``bands``, ``dtype`` (``f32`` or ``i32``),
``interleave=bsq``, and ``data=<raw file relative to the header>``.
The raw file holds little-endian samples in band-sequential order
(band 0 plane row-major, then band 1, ...).
"""

import os

import numpy as np


class FormatError(ValueError):
    """Malformed or inconsistent file contents."""


class DataError(ValueError):
    """Structurally valid file with invalid data values."""


_DTYPES = {"f32": np.dtype("<f4"), "i32": np.dtype("<i4")}


def read_header(path):
    fields = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            fields[key.strip()] = value.strip()
    return fields


def write_header(path, fields):
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in fields.items():
            fh.write(f"{key}={value}\n")


def load_raster(header_path):
    """Read a raster, returning ``(values, header_fields)``.

    ``values`` has shape H x W x B with the header's dtype widened to
    float64 (f32) or int64 (i32).
    """
    fields = read_header(header_path)
    for key in ("height", "width", "bands", "dtype", "interleave", "data"):
        if key not in fields:
            raise FormatError(f"{header_path}: missing header key {key!r}")
    if fields["interleave"] != "bsq":
        raise FormatError(f"{header_path}: unsupported interleave {fields['interleave']!r}")
    if fields["dtype"] not in _DTYPES:
        raise FormatError(f"{header_path}: unsupported dtype {fields['dtype']!r}")
    try:
        h, w, b = int(fields["height"]), int(fields["width"]), int(fields["bands"])
    except ValueError as exc:
        raise FormatError(f"{header_path}: non-integer dimensions") from exc
    if h < 1 or w < 1 or b < 1:
        raise FormatError(f"{header_path}: dimensions must be positive, got {h}x{w}x{b}")
    dtype = _DTYPES[fields["dtype"]]
    raw_path = os.path.join(os.path.dirname(os.path.abspath(header_path)), fields["data"])
    expected = h * w * b * dtype.itemsize
    actual = os.path.getsize(raw_path)
    if actual != expected:
        raise FormatError(
            f"{raw_path}: size mismatch, header declares {expected} bytes, file has {actual}"
        )
    flat = np.fromfile(raw_path, dtype=dtype)
    values = flat.reshape(b, h, w).transpose(1, 2, 0)
    if dtype == _DTYPES["f32"]:
        values = values.astype(np.float64)
    else:
        values = values.astype(np.int64)
    return values, fields


def save_raster(header_path, values, extra_fields=None, dtype="f32"):
    """Write an H x W x B array in the header + raw convention.

    The raw file is written next to the header, named after its stem.
    """
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[:, :, None]
    h, w, b = values.shape
    stem = os.path.splitext(os.path.basename(header_path))[0]
    raw_name = stem + ".raw"
    raw_path = os.path.join(os.path.dirname(os.path.abspath(header_path)), raw_name)
    fields = {
        "height": h,
        "width": w,
        "bands": b,
        "dtype": dtype,
        "interleave": "bsq",
        "data": raw_name,
    }
    if extra_fields:
        fields.update(extra_fields)
    write_header(header_path, fields)
    values.transpose(2, 0, 1).astype(_DTYPES[dtype]).tofile(raw_path)


def save_pgm(path, labels):
    """Write an integer label image as binary PGM (P5, 8- or 16-bit)."""
    labels = np.asarray(labels)
    if labels.min() < 0:
        raise FormatError("PGM labels must be nonnegative")
    maxval = int(labels.max())
    if maxval > 65535:
        raise FormatError("PGM labels must fit in 16 bits")
    depth = 255 if maxval <= 255 else 65535
    h, w = labels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{depth}\n".encode("ascii"))
        if depth == 255:
            fh.write(labels.astype(np.uint8).tobytes())
        else:
            fh.write(labels.astype(">u2").tobytes())


def load_pgm(path):
    """Read a binary PGM (P5) into an int64 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise FormatError(f"{path}: not a binary PGM file")
    # header tokens: magic, width, height, maxval; comments allowed
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, depth = int(tokens[0]), int(tokens[1]), int(tokens[2])
    if depth <= 255:
        arr = np.frombuffer(data, dtype=np.uint8, count=h * w, offset=pos)
    elif depth <= 65535:
        arr = np.frombuffer(data, dtype=">u2", count=h * w, offset=pos)
    else:
        raise FormatError(f"{path}: unsupported maxval {depth}")
    return arr.reshape(h, w).astype(np.int64)
