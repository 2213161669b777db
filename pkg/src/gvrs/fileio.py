"""File formats: GRR1 rasters, density/histogram/ground-truth CSVs, configs.

Every writer goes through ``atomic_write`` so a failed run never leaves a
partial file behind.
"""

from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from collections import defaultdict

import numpy as np

from . import _kernels
from . import pl_density as pld
from .errors import InvalidInputError
from .mixture import SurfaceState

MAGIC = b"GRR1"
VERSION = 1
HEADER = struct.Struct("<4sBBHII")
DTYPE_FLOAT32 = 1
DTYPE_UINT8 = 2
_DTYPES = {DTYPE_FLOAT32: np.dtype("<f4"), DTYPE_UINT8: np.dtype("u1")}

DENSITY_HEADER = ["class", "knot_x", "density"]
HISTOGRAM_HEADER = ["class", "bin_left", "bin_right", "count"]
GT_HEADER = ["row", "col", "grip", "state"]

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64_reference(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK64
    return h


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a digest (not a security hash)."""
    if len(data) < 256:
        return fnv1a64_reference(data)
    return int(_kernels.fnv1a64(np.frombuffer(data, dtype=np.uint8)))


def file_digest(path) -> str:
    with open(path, "rb") as f:
        return f"{fnv1a64(f.read()):016x}"


def atomic_write(path, data: bytes) -> None:
    """Write to a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode("utf-8")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# -- GRR1 rasters -------------------------------------------------------------------

def encode_raster(arr) -> bytes:
    a = np.asarray(arr)
    if a.ndim == 2:
        a = a[..., None]
    if a.ndim != 3:
        raise InvalidInputError("raster must be (H, W) or (H, W, C)")
    if a.dtype == np.uint8:
        code = DTYPE_UINT8
    else:
        code = DTYPE_FLOAT32
    h, w, c = a.shape
    payload = np.ascontiguousarray(a, dtype=_DTYPES[code]).tobytes()
    return HEADER.pack(MAGIC, VERSION, code, c, h, w) + payload


def decode_raster(data: bytes) -> np.ndarray:
    """Parse a GRR1 byte string into an (H, W, C) array."""
    if len(data) < HEADER.size:
        raise InvalidInputError("truncated raster header")
    magic, version, code, c, h, w = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise InvalidInputError("bad raster magic")
    if version != VERSION:
        raise InvalidInputError(f"unsupported raster version {version}")
    if code not in _DTYPES:
        raise InvalidInputError(f"unknown raster dtype code {code}")
    dt = _DTYPES[code]
    need = h * w * c * dt.itemsize
    if len(data) - HEADER.size != need:
        raise InvalidInputError(
            f"raster payload is {len(data) - HEADER.size} bytes, expected {need}")
    arr = np.frombuffer(data, dtype=dt, offset=HEADER.size).reshape(h, w, c)
    return arr.astype(dt.newbyteorder("="))


def write_raster(path, arr) -> None:
    atomic_write(path, encode_raster(arr))


def read_raster(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_raster(f.read())


# -- CSV tables ---------------------------------------------------------------------

def _read_rows(path, header):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        first = next(reader, None)
        if first is None or [h.strip() for h in first] != header:
            raise InvalidInputError(f"{path}: expected header {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InvalidInputError(f"{path}:{lineno}: expected {len(header)} fields")
            rows.append((lineno, [c.strip() for c in row]))
    return rows


def _float(path, lineno, s):
    try:
        v = float(s)
    except ValueError:
        raise InvalidInputError(f"{path}:{lineno}: not a number: {s!r}") from None
    if not np.isfinite(v):
        raise InvalidInputError(f"{path}:{lineno}: non-finite value")
    return v


def write_densities(path, densities) -> None:
    rows = []
    for d in sorted(densities, key=lambda d: d.name):
        for x, y in zip(d.knots, d.densities):
            rows.append([d.name, _fmt(x), _fmt(y)])
    atomic_write(path, _csv_bytes(DENSITY_HEADER, rows))


def read_densities(path, auto_normalize: bool = False) -> list:
    groups = defaultdict(list)
    for lineno, (name, x, y) in _read_rows(path, DENSITY_HEADER):
        groups[name].append((_float(path, lineno, x), _float(path, lineno, y)))
    if not groups:
        raise InvalidInputError(f"{path}: no densities")
    out = []
    for name in sorted(groups):
        pts = sorted(groups[name])
        out.append(pld.build(name, [p[0] for p in pts], [p[1] for p in pts],
                             auto_normalize=auto_normalize))
    return out


def write_histograms(path, histograms) -> None:
    rows = []
    for h in sorted(histograms, key=lambda h: h.name):
        for a, b, c in zip(h.edges[:-1], h.edges[1:], h.counts):
            rows.append([h.name, _fmt(a), _fmt(b), _fmt(c)])
    atomic_write(path, _csv_bytes(HISTOGRAM_HEADER, rows))


def read_histograms(path) -> list:
    groups = defaultdict(list)
    for lineno, (name, a, b, c) in _read_rows(path, HISTOGRAM_HEADER):
        groups[name].append((_float(path, lineno, a), _float(path, lineno, b),
                             _float(path, lineno, c)))
    if not groups:
        raise InvalidInputError(f"{path}: no histograms")
    out = []
    for name in sorted(groups):
        bins = sorted(groups[name])
        left = np.array([b[0] for b in bins])
        right = np.array([b[1] for b in bins])
        if np.any(right <= left) or np.any(np.abs(left[1:] - right[:-1]) > 1e-12):
            raise InvalidInputError(f"{path}: bins of class {name!r} must be contiguous")
        edges = np.append(left, right[-1])
        out.append(pld.GripHistogram(name, edges, np.array([b[2] for b in bins])))
    return out


def write_ground_truth(path, sample) -> None:
    rows = [[int(r), int(c), _fmt(g), SurfaceState(int(s)).label]
            for r, c, g, s in zip(sample.rows, sample.cols, sample.grips, sample.states)]
    atomic_write(path, _csv_bytes(GT_HEADER, rows))


def read_ground_truth(path):
    """Returns (rows, cols, grips, states) arrays."""
    rows, cols, grips, states = [], [], [], []
    for lineno, (r, c, g, s) in _read_rows(path, GT_HEADER):
        try:
            rows.append(int(r))
            cols.append(int(c))
        except ValueError:
            raise InvalidInputError(f"{path}:{lineno}: pixel coordinates must be integers") from None
        grips.append(_float(path, lineno, g))
        states.append(int(SurfaceState.parse(s)))
    return (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
            np.array(grips), np.array(states, dtype=np.int64))


def write_text(path, text: str) -> None:
    atomic_write(path, text.encode("utf-8"))


# -- key = value configs --------------------------------------------------------------

def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise InvalidInputError(f"config line {lineno}: empty key")
        if key in out:
            raise InvalidInputError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path) -> dict:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())
