"""Binary snapshots of wave functions and kernels, plus JSON trajectory manifests."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import FRAMES, Grid, MarginalKernel, WaveFunction

MAGIC = b"MFLD"
VERSION = 1
HEADER = struct.Struct("<4sIBBBBIdB")
KIND_WF, KIND_KERNEL = 0, 1
DTYPES = {0: np.dtype("<c8"), 1: np.dtype("<c16")}


class SnapshotError(ValueError):
    pass


def write_snapshot(path, obj, dtype=np.complex128) -> Path:
    grid = obj.grid
    if not grid.isotropic:
        raise SnapshotError("snapshot header stores a single L; grid is anisotropic")
    code = {np.dtype(np.complex64): 0, np.dtype(np.complex128): 1}.get(np.dtype(dtype))
    if code is None:
        raise SnapshotError(f"unsupported scalar type {dtype}")
    if isinstance(obj, WaveFunction):
        kind, count = KIND_WF, obj.N
    elif isinstance(obj, MarginalKernel):
        kind, count = KIND_KERNEL, obj.k
    else:
        raise TypeError(f"cannot snapshot {type(obj).__name__}")
    head = HEADER.pack(MAGIC, VERSION, kind, grid.d, count, FRAMES.index(obj.frame),
                       grid.n, grid.L[0], code)
    payload = np.ascontiguousarray(obj.data, dtype=DTYPES[code]).tobytes(order="C")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(payload)
    return path


def read_snapshot(path, expect_kind: int | None = None, expect_count: int | None = None,
                  time: float = 0.0):
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise SnapshotError("truncated header")
    magic, version, kind, d, count, frame, n, L, code = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported version {version}")
    if kind not in (KIND_WF, KIND_KERNEL) or frame >= len(FRAMES) or code not in DTYPES:
        raise SnapshotError("corrupt header")
    if d not in (1, 2, 3) or n == 0 or n & (n - 1):
        raise SnapshotError("corrupt header: grid")
    if expect_kind is not None and kind != expect_kind:
        raise SnapshotError(f"expected kind {expect_kind}, file has {kind}")
    if expect_count is not None and count != expect_count:
        raise SnapshotError(f"expected order {expect_count}, file has {count}")
    exponent = d * count * (2 if kind == KIND_KERNEL else 1)
    dt = DTYPES[code]
    need = n**exponent * dt.itemsize
    body = raw[HEADER.size:]
    if len(body) != need:
        raise SnapshotError(f"payload has {len(body)} bytes, expected {need}")
    data = np.frombuffer(body, dtype=dt).reshape((n,) * exponent)
    grid = Grid(d, n, (L,) * d)
    cls = WaveFunction if kind == KIND_WF else MarginalKernel
    obj = cls(grid, count, data.astype(np.complex128), FRAMES[frame], time)
    return obj


def read_raw(path) -> np.ndarray:
    """Payload as stored (c64 or c128), for bit-level comparisons."""
    raw = Path(path).read_bytes()
    *_, code = HEADER.unpack_from(raw)
    return np.frombuffer(raw[HEADER.size:], dtype=DTYPES[code])


def write_manifest(path, entries) -> Path:
    """entries: iterable of (snapshot path, time)."""
    items = [{"path": str(p), "time": float(t)} for p, t in entries]
    path = Path(path)
    path.write_text(json.dumps({"version": 1, "snapshots": items}, indent=2))
    return path


def read_manifest(path) -> list[tuple[Path, float]]:
    doc = json.loads(Path(path).read_text())
    base = Path(path).parent
    out = []
    for item in doc["snapshots"]:
        p = Path(item["path"])
        out.append((p if p.is_absolute() else base / p, float(item["time"])))
    return out
