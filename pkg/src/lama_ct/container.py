"""Self-describing binary container for arrays, plus PGM and CSV exports.

Layout (all integers unsigned little-endian)::

    b"LAMA"            magic
    u16                format version (1)
    u32                entry count
    per entry:
        u32 + bytes    UTF-8 name, length prefixed
        u32            rank
        u32 * rank     dims
        f64 * prod     payload, little-endian IEEE-754, row-major

A rank-0 entry is a scalar with an 8-byte payload. Entries keep their
file order on load.
"""

from __future__ import annotations

import csv
import math
import os
import struct

import numpy as np

from .errors import LamaError
from .regnet import ConvLayer, RegularizerNet

__all__ = [
    "MAGIC",
    "VERSION",
    "ContainerError",
    "BadMagic",
    "VersionMismatch",
    "Truncated",
    "DuplicateName",
    "save",
    "load",
    "dumps",
    "loads",
    "save_net",
    "load_net",
    "net_entries",
    "net_from_entries",
    "export_pgm",
    "read_pgm",
    "export_csv_trace",
    "TRACE_COLUMNS",
]

MAGIC = b"LAMA"
VERSION = 1
_LE_F64 = np.dtype("<f8")


class ContainerError(LamaError, ValueError):
    """Base class for malformed or unwritable containers."""


class BadMagic(ContainerError):
    pass


class VersionMismatch(ContainerError):
    pass


class Truncated(ContainerError):
    pass


class DuplicateName(ContainerError):
    pass


def _entry_items(entries):
    items = list(entries.items()) if isinstance(entries, dict) else list(entries)
    seen = set()
    for name, _ in items:
        if not isinstance(name, str):
            raise TypeError(f"entry names must be str, got {type(name).__name__}")
        if name in seen:
            raise DuplicateName(f"duplicate entry name {name!r}")
        seen.add(name)
    return items


def dumps(entries) -> bytes:
    """Serialize ``{name: array}`` (or a sequence of pairs) to bytes."""
    items = _entry_items(entries)
    parts = [MAGIC, struct.pack("<HI", VERSION, len(items))]
    for name, value in items:
        arr = np.asarray(value, dtype=np.float64)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_LE_F64).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise Truncated(f"file ends inside {what} (needs {n} bytes at offset {self.pos})")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def loads(data: bytes) -> dict[str, np.ndarray]:
    r = _Reader(data)
    if len(data) < 4 or bytes(data[:4]) != MAGIC:
        raise BadMagic(f"not a LAMA container (magic {bytes(data[:4])!r})")
    r.pos = 4
    (version,) = struct.unpack("<H", r.take(2, "version"))
    if version != VERSION:
        raise VersionMismatch(f"container version {version}, this reader handles {VERSION}")
    count = r.u32("entry count")
    out: dict[str, np.ndarray] = {}
    for i in range(count):
        name_len = r.u32(f"entry {i} name length")
        try:
            name = bytes(r.take(name_len, f"entry {i} name")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ContainerError(f"entry {i} name is not valid UTF-8") from exc
        if name in out:
            raise DuplicateName(f"duplicate entry name {name!r}")
        rank = r.u32(f"entry {name!r} rank")
        dims = tuple(r.u32(f"entry {name!r} dims") for _ in range(rank))
        size = math.prod(dims)
        payload = r.take(8 * size, f"entry {name!r} payload")
        out[name] = np.frombuffer(payload, dtype=_LE_F64).astype(np.float64).reshape(dims)
    if r.pos != len(data):
        raise ContainerError(f"{len(data) - r.pos} trailing bytes after the last entry")
    return out


def save(path, entries) -> None:
    data = dumps(entries)
    with open(path, "wb") as fh:
        fh.write(data)


def load(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return loads(fh.read())


# -- network weights ---------------------------------------------------------


def net_entries(net: RegularizerNet, prefix: str = "") -> dict[str, np.ndarray]:
    """Entries ``{prefix}layer{i}`` (``(out, in, k, k)``) and scalar ``{prefix}knee``."""
    out = {f"{prefix}layer{i}": layer.kernels for i, layer in enumerate(net.layers)}
    out[f"{prefix}knee"] = np.float64(net.activation_knee)
    return out


def net_from_entries(entries, prefix: str = "", name: str = "loaded") -> RegularizerNet:
    layers = []
    while f"{prefix}layer{len(layers)}" in entries:
        layers.append(ConvLayer(entries[f"{prefix}layer{len(layers)}"]))
    if not layers:
        raise ContainerError(f"no '{prefix}layer0' entry; not a weight file")
    knee = entries.get(f"{prefix}knee")
    kwargs = {} if knee is None else {"activation_knee": float(knee)}
    return RegularizerNet(tuple(layers), name=name, **kwargs)


def save_net(path, net: RegularizerNet) -> None:
    save(path, net_entries(net))


def load_net(path) -> RegularizerNet:
    return net_from_entries(load(path), name=os.path.basename(str(path)))


# -- human-viewable exports --------------------------------------------------


def export_pgm(img, path, data_range: float | None = None, vmin: float | None = None) -> None:
    """16-bit binary PGM of ``[vmin, vmin + data_range]`` mapped linearly to ``[0, 65535]``.

    ``vmin`` defaults to the image minimum and ``data_range`` to its span
    (1 for a constant image). Values outside the window are clamped.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("export_pgm expects a 2-D image")
    if not np.all(np.isfinite(img)):
        raise ValueError("image has non-finite values")
    lo = float(img.min()) if vmin is None else float(vmin)
    if data_range is None:
        data_range = float(img.max()) - lo or 1.0
    if not data_range > 0:
        raise ValueError("data_range must be positive")
    q = np.rint(np.clip((img - lo) / data_range, 0.0, 1.0) * 65535.0).astype(">u2")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(q.tobytes())


def read_pgm(path) -> np.ndarray:
    """Raw integer pixels of a PGM written by :func:`export_pgm`."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(data[pos + 1 :], dtype=dtype).reshape(h, w).astype(np.int64)


TRACE_COLUMNS = (
    "k",
    "branch",
    "backtracks",
    "eps",
    "phi_prev",
    "phi",
    "grad_norm_prev",
    "grad_norm",
    "eps_reduced",
    "dx",
    "dz",
    "step_x",
    "step_z",
)


def export_csv_trace(trace, path) -> None:
    """One header row, then one row per iteration record in ``TRACE_COLUMNS`` order.

    Floats are written with ``repr`` so a re-parse gives back the exact
    doubles; booleans as ``0``/``1``.
    """

    def cell(v):
        if isinstance(v, bool):
            return str(int(v))
        if isinstance(v, float):
            return repr(v)
        return str(v)

    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(TRACE_COLUMNS)
        for rec in trace:
            out.writerow([cell(getattr(rec, c)) for c in TRACE_COLUMNS])

