"""Energy-preserving/dissipating time steppers for gradient systems.

A *system* here is any object exposing

* ``D`` -- structure matrix,
* ``K`` -- symmetric linear part of the gradient,
* ``is_linear`` -- whether a polynomial remainder is present,
* ``nonlinear_average(a, b)`` -- exact segment average of that remainder,

which is satisfied by :class:`~gpopinf.fom.FomSpec` and
:class:`~gpopinf.rom.RomSpec`.

The average vector field (AVF) step solves

    y1 = y0 + dt D [K (y0 + y1)/2 + Nbar(y0, y1)].

The linear part is kept implicit inside every Picard sweep (the step matrix
``I - dt/2 D K`` is LU-factored once per run); only ``Nbar`` is lagged. With
stiff diffusion/dispersion a fully explicit Picard sweep does not contract.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidDimensionError, NumericalError

__all__ = [
    "TimeGrid",
    "PicardConfig",
    "Trajectory",
    "StepMatrix",
    "implicit_midpoint_linear",
    "avf_step",
    "integrate",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0, t0 + dt, ..., t0 + steps*dt``."""

    t0: float = 0.0
    dt: float = 1e-3
    steps: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.steps < 0 or int(self.steps) != self.steps:
            raise ValueError(f"step count must be a non-negative integer, got {self.steps}")

    @classmethod
    def until(cls, final_time: float, dt: float, t0: float = 0.0) -> "TimeGrid":
        steps = int(round((final_time - t0) / dt))
        if not np.isclose(t0 + steps * dt, final_time, rtol=1e-9, atol=1e-12):
            raise ValueError(f"final time {final_time} is not a multiple of dt={dt}")
        return cls(t0, dt, steps)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)

    @property
    def final_time(self) -> float:
        return self.t0 + self.dt * self.steps


@dataclass(frozen=True)
class PicardConfig:
    tol: float = 1e-12
    max_iter: int = 100

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("Picard tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("Picard max_iter must be >= 1")


@dataclass
class Trajectory:
    """States stored column-wise, one column per grid time."""

    states: np.ndarray
    grid: TimeGrid
    wall_seconds: float
    picard_iterations: np.ndarray
    method: str

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


class StepMatrix:
    """LU factorization of ``I - dt/2 D K`` together with ``J = D K``."""

    def __init__(self, D, K, dt: float):
        D = np.asarray(D, dtype=float)
        K = np.asarray(K, dtype=float)
        if D.shape != K.shape or D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise InvalidDimensionError(f"D {D.shape} and K {K.shape} must be equal square shapes")
        self.dt = dt
        self.D = D
        self.J = D @ K
        M = np.eye(D.shape[0]) - 0.5 * dt * self.J
        self.lu = sla.lu_factor(M, check_finite=True)
        diag = np.abs(np.diag(self.lu[0]))
        if diag.min(initial=np.inf) <= np.finfo(float).eps * max(diag.max(initial=0.0), 1.0):
            cond = np.linalg.cond(M)
            raise NumericalError(f"midpoint step matrix is singular (condition estimate {cond:.3e})")

    def explicit_half(self, y: np.ndarray) -> np.ndarray:
        return y + 0.5 * self.dt * (self.J @ y)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self.lu, b, check_finite=False)


def implicit_midpoint_linear(D, K, y0, grid: TimeGrid) -> np.ndarray:
    """Midpoint rule for ``y' = D K y``; returns an ``(n, steps+1)`` array."""
    y = np.asarray(y0, dtype=float).copy()
    step = StepMatrix(D, K, grid.dt)
    if y.shape != (step.D.shape[0],):
        raise InvalidDimensionError(f"initial state length {y.shape} does not match {step.D.shape}")
    out = np.empty((y.size, grid.steps + 1))
    out[:, 0] = y
    for k in range(grid.steps):
        y = step.solve(step.explicit_half(y))
        out[:, k + 1] = y
    return out


def _avf(system, step: StepMatrix, y: np.ndarray, cfg: PicardConfig) -> tuple[np.ndarray, int]:
    base = step.explicit_half(y)
    if system.is_linear:
        return step.solve(base), 1
    dt = step.dt
    guess = y
    diff = np.inf
    for it in range(1, cfg.max_iter + 1):
        nbar = system.nonlinear_average(y, guess)
        new = step.solve(base + dt * (step.D @ nbar))
        diff = np.abs(new - guess).max()
        guess = new
        if not np.isfinite(diff):
            break
        if diff <= cfg.tol * max(1.0, np.abs(new).max()):
            return new, it
    raise NumericalError(
        f"Picard iteration did not converge in {cfg.max_iter} sweeps "
        f"(last successive-iterate difference {diff:.3e}, tol {cfg.tol:g})"
    )


def avf_step(system, y, dt: float, cfg: PicardConfig = PicardConfig(), step: StepMatrix | None = None):
    """One AVF step from ``y``; pass a prebuilt :class:`StepMatrix` to reuse its LU."""
    if step is None:
        step = StepMatrix(system.D, system.K, dt)
    y_new, _ = _avf(system, step, np.asarray(y, dtype=float), cfg)
    return y_new


def integrate(system, y0, grid: TimeGrid, cfg: PicardConfig = PicardConfig()) -> Trajectory:
    """March ``system`` over ``grid``.

    Linear systems use the implicit midpoint rule, which coincides with AVF
    for a linear gradient; polynomial systems use AVF with Picard sweeps.
    """
    y = np.asarray(y0, dtype=float).copy()
    if y.shape != (system.D.shape[0],):
        raise InvalidDimensionError(f"initial state length {y.size} does not match system size {system.D.shape[0]}")
    start = time.perf_counter()
    out = np.empty((y.size, grid.steps + 1))
    out[:, 0] = y
    iters = np.zeros(grid.steps, dtype=int)
    if grid.steps:
        step = StepMatrix(system.D, system.K, grid.dt)
        for k in range(grid.steps):
            y, iters[k] = _avf(system, step, y, cfg)
            out[:, k + 1] = y
    method = "midpoint" if system.is_linear else "avf"
    return Trajectory(out, grid, time.perf_counter() - start, iters, method)
