"""Training data: state, gradient and time-derivative snapshots, plus the
on-disk formats (GPOI binary matrices and CSV tables).

GPOI layout (little-endian)::

    offset  size  field
    0       4     magic  b"GPOI"
    4       4     version (uint32, currently 1)
    8       8     rows    (uint64)
    16      8     cols    (uint64)
    24      8*rows*cols   float64 payload, column-major
"""

from __future__ import annotations

import csv
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, InsufficientDataError, StructureError
from .integrators import PicardConfig, TimeGrid, integrate

__all__ = [
    "SnapshotSet",
    "collect_snapshots",
    "snapshots_from_trajectory",
    "derivative_snapshots",
    "concat_parametric",
    "projected_gradient_snapshots",
    "write_matrix",
    "read_matrix",
    "write_csv",
    "read_csv",
    "atomic_write_bytes",
    "write_json",
]

MAGIC = b"GPOI"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


@dataclass
class SnapshotSet:
    """Snapshot matrices sharing one column layout.

    ``offsets[i]`` is the first column belonging to ``params[i]``; each block
    starts at ``times[0]`` of its own trajectory.
    """

    Y: np.ndarray
    F: np.ndarray
    Ydot: np.ndarray
    times: np.ndarray
    params: list = field(default_factory=list)
    model: str = ""
    offsets: list = field(default_factory=lambda: [0])

    def __post_init__(self):
        if not (self.Y.shape == self.F.shape == self.Ydot.shape):
            raise StructureError(
                f"snapshot matrices disagree: Y {self.Y.shape}, F {self.F.shape}, Ydot {self.Ydot.shape}"
            )

    @property
    def width(self) -> int:
        return self.Y.shape[1]

    def blocks(self) -> list[slice]:
        edges = list(self.offsets) + [self.width]
        return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]

    def split(self) -> list["SnapshotSet"]:
        """Inverse of :func:`concat_parametric`."""
        out = []
        for i, sl in enumerate(self.blocks()):
            out.append(SnapshotSet(
                self.Y[:, sl], self.F[:, sl], self.Ydot[:, sl], self.times,
                [self.params[i]] if i < len(self.params) else [], self.model, [0],
            ))
        return out


def derivative_snapshots(Y, dt: float) -> np.ndarray:
    """Second-order finite differences in time, one-sided at both ends."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] < 3:
        raise InsufficientDataError(
            f"time-derivative stencil needs at least 3 snapshot columns, got shape {Y.shape}"
        )
    out = np.empty_like(Y)
    h2 = 2.0 * dt
    out[:, 0] = (-3.0 * Y[:, 0] + 4.0 * Y[:, 1] - Y[:, 2]) / h2
    out[:, 1:-1] = (Y[:, 2:] - Y[:, :-2]) / h2
    out[:, -1] = (Y[:, -3] - 4.0 * Y[:, -2] + 3.0 * Y[:, -1]) / h2
    return out


def snapshots_from_trajectory(spec, states: np.ndarray, grid: TimeGrid, stride: int = 1) -> SnapshotSet:
    """Build a snapshot set from an already integrated trajectory.

    The derivative stencil is applied on the full trajectory before the
    columns are subsampled with ``stride``.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    Y_full = np.asarray(states, dtype=float)
    if Y_full.shape[1] >= 3:
        Ydot = derivative_snapshots(Y_full, grid.dt)
    else:
        # the stencil is undefined for fewer than three states
        Ydot = np.full_like(Y_full, np.nan)
    cols = slice(None, None, stride)
    Y = Y_full[:, cols]
    F = spec.gradient(Y)
    return SnapshotSet(Y, F, Ydot[:, cols], grid.times[cols], [spec.mu], spec.name, [0])


def collect_snapshots(spec, grid: TimeGrid, cfg: PicardConfig = PicardConfig(), stride: int = 1) -> SnapshotSet:
    """Integrate ``spec`` from its initial state and gather Y, F and Ydot."""
    traj = integrate(spec, spec.y0, grid, cfg)
    return snapshots_from_trajectory(spec, traj.states, grid, stride)


def projected_gradient_snapshots(spec, Y, Phi) -> np.ndarray:
    """Gradients evaluated on the projected states ``Phi Phi^T y``."""
    Phi = np.asarray(Phi, dtype=float)
    return spec.gradient(Phi @ (Phi.T @ np.asarray(Y, dtype=float)))


def concat_parametric(sets: Sequence[SnapshotSet]) -> SnapshotSet:
    """Column-wise concatenation of per-parameter snapshot sets."""
    sets = list(sets)
    if not sets:
        raise InsufficientDataError("no snapshot sets to concatenate")
    rows, model = sets[0].Y.shape[0], sets[0].model
    for s in sets[1:]:
        if s.Y.shape[0] != rows:
            raise StructureError(f"row mismatch: {s.Y.shape[0]} vs {rows}")
        if s.model != model:
            raise StructureError(f"model mismatch: {s.model!r} vs {model!r}")
    offsets, params, width = [], [], 0
    for s in sets:
        for off in s.offsets:
            offsets.append(width + off)
        params.extend(s.params)
        width += s.width
    return SnapshotSet(
        np.hstack([s.Y for s in sets]),
        np.hstack([s.F for s in sets]),
        np.hstack([s.Ydot for s in sets]),
        sets[0].times, params, model, offsets,
    )


# --- persistence ------------------------------------------------------------

def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_matrix(path, M) -> None:
    """Write a matrix (vectors are stored as one column) in GPOI format."""
    M = np.asarray(M, dtype="<f8")
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise StructureError(f"can only store 1D/2D arrays, got ndim={M.ndim}")
    header = _HEADER.pack(MAGIC, VERSION, M.shape[0], M.shape[1])
    atomic_write_bytes(path, header + M.tobytes(order="F"))


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    try:
        size = path.stat().st_size
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if len(head) < _HEADER.size:
                raise FormatError(f"{path}: header: file has {len(head)} bytes, need {_HEADER.size}")
            magic, version, rows, cols = _HEADER.unpack(head)
            if magic != MAGIC:
                raise FormatError(f"{path}: magic: expected {MAGIC!r}, found {magic!r}")
            if version != VERSION:
                raise FormatError(f"{path}: version: unsupported version {version}")
            expected = rows * cols * 8  # python ints, no overflow
            available = size - _HEADER.size
            if expected != available:
                raise FormatError(
                    f"{path}: payload: header declares {rows}x{cols} ({expected} bytes) "
                    f"but {available} bytes follow"
                )
            payload = fh.read(expected)
    except OSError as exc:
        from .errors import ArtifactIOError

        raise ArtifactIOError(f"{path}: {exc}") from exc
    return np.frombuffer(payload, dtype="<f8").reshape((rows, cols), order="F").astype(float)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with '.' decimals and 17 significant digits (round-trips float64)."""
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    atomic_write_bytes(path, buf.getvalue().encode())


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path, obj) -> None:
    atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())
