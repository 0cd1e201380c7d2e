"""Error measures for reduced models and the per-dimension error report.

All squared errors share the scaling ``T * dA / N`` and sum over the columns
``j = 1..N`` (the shared initial column ``j = 0`` is excluded).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import derivative_snapshots, write_csv
from .errors import InvalidDimensionError

__all__ = [
    "approx_error",
    "projection_error",
    "optimization_error",
    "grad_projection_error",
    "data_error_surrogate",
    "energy_series",
    "ErrorRow",
    "ErrorReport",
    "REPORT_COLUMNS",
]

REPORT_COLUMNS = ("r", "E", "E_proj", "E_opt", "E_proj_gradH", "certificate", "fom_seconds", "rom_seconds")


def _cols(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[1] < 2:
        raise InvalidDimensionError(f"need a matrix with at least 2 columns (t^0 and t^1..t^N), got {M.shape}")
    return M


def _scaled_sum(diff: np.ndarray, T: float, dA: float) -> float:
    N = diff.shape[1] - 1
    return float(T * dA / N * np.sum(diff[:, 1:] ** 2))


def approx_error(Y, Y_hat, T: float, dA: float) -> float:
    """Squared ROM error between a full trajectory and the lifted ROM trajectory."""
    Y, Y_hat = _cols(Y), _cols(Y_hat)
    if Y.shape != Y_hat.shape:
        raise InvalidDimensionError(f"trajectory shapes differ: {Y.shape} vs {Y_hat.shape}")
    return _scaled_sum(Y - Y_hat, T, dA)


def projection_error(Y, Phi, T: float, dA: float) -> float:
    """Squared error of the orthogonal projection ``Phi Phi^T`` of the states."""
    Y = _cols(Y)
    Phi = np.asarray(Phi, dtype=float)
    if Phi.shape[0] != Y.shape[0]:
        raise InvalidDimensionError(f"basis has {Phi.shape[0]} rows, states have {Y.shape[0]}")
    return _scaled_sum(Y - Phi @ (Phi.T @ Y), T, dA)


def optimization_error(Ydot, F, Phi, D_r, T: float, dA: float) -> float:
    """Squared misfit ``Phi^T Ydot - D_r Phi^T F`` of the learned operator."""
    Ydot, F = _cols(Ydot), _cols(F)
    Phi = np.asarray(Phi, dtype=float)
    if Ydot.shape != F.shape or Phi.shape[0] != F.shape[0] or np.shape(D_r) != (Phi.shape[1],) * 2:
        raise InvalidDimensionError(
            f"incompatible shapes: Ydot {Ydot.shape}, F {F.shape}, Phi {Phi.shape}, D_r {np.shape(D_r)}"
        )
    return _scaled_sum(Phi.T @ Ydot - D_r @ (Phi.T @ F), T, dA)


def grad_projection_error(F, Phi, T: float, dA: float) -> float:
    """Projection error of the gradient snapshots onto the basis."""
    return projection_error(F, Phi, T, dA)


def data_error_surrogate(Y, dt: float, T: float, dA: float) -> float:
    """Richardson estimate of the squared time-derivative stencil error.

    For a second-order stencil ``e(2 dt) ~ 4 e(dt)``, so
    ``(D_{2dt} - D_{dt}) / 3`` estimates the error at step ``dt`` on the even
    columns.
    """
    Y = _cols(Y)
    if Y.shape[1] < 5:
        return float("nan")
    fine = derivative_snapshots(Y, dt)[:, ::2]
    coarse = derivative_snapshots(Y[:, ::2], 2.0 * dt)
    return _scaled_sum((coarse - fine) / 3.0, T, dA)


def energy_series(model, states) -> np.ndarray:
    """Energy of ``model`` at every stored state (columns of ``states``)."""
    return np.atleast_1d(model.energy(np.asarray(states, dtype=float)))


@dataclass
class ErrorRow:
    r: int
    E: float
    E_proj: float
    E_opt: float
    E_proj_gradH: float = float("nan")
    certificate: float = float("nan")
    fom_seconds: float = float("nan")
    rom_seconds: float = float("nan")

    def as_tuple(self):
        return tuple(getattr(self, c) for c in REPORT_COLUMNS)


@dataclass
class ErrorReport:
    """Error measures keyed by reduced dimension, with their scaling constants."""

    T: float
    N: int
    dA: float
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, row: ErrorRow) -> None:
        for v in (row.E, row.E_proj, row.E_opt):
            if v < 0:
                raise ValueError(f"error measures must be nonnegative, got {v}")
        self.rows.append(row)
        self.rows.sort(key=lambda x: x.r)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        write_csv(path, REPORT_COLUMNS, (row.as_tuple() for row in self.rows))
