"""Reduced gradient systems ``y_r' = D_r Phi^T grad H(Phi y_r)``.

Two flavors share one representation: the data-driven model with an inferred
``D_r`` and the intrusive Galerkin model with ``D_r = Phi^T D Phi``. The
polynomial part of the gradient is evaluated by lifting to the full space and
projecting back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, UnsupportedError
from .integrators import PicardConfig, TimeGrid, Trajectory, integrate
from .opinf import InferredOperator
from .pod import ReducedBasis

__all__ = ["RomSpec", "RomTrajectory", "assemble_gp_rom", "assemble_spg_rom", "simulate_rom"]


@dataclass(eq=False)
class RomSpec:
    basis: ReducedBasis
    D: np.ndarray
    fom: object
    kind: str
    y0: np.ndarray
    operator: InferredOperator | None = None

    def __post_init__(self):
        Phi = self.basis.Phi
        self.K = Phi.T @ self.fom.K @ Phi

    @property
    def r(self) -> int:
        return self.D.shape[0]

    @property
    def is_linear(self) -> bool:
        return self.fom.is_linear

    @property
    def Phi(self) -> np.ndarray:
        return self.basis.Phi

    def lift(self, yr):
        return self.Phi @ yr

    def nonlinear_average(self, a, b):
        return self.Phi.T @ self.fom.nonlinear_average(self.Phi @ a, self.Phi @ b)

    def gradient(self, yr):
        return self.Phi.T @ self.fom.gradient(self.Phi @ yr)

    def energy(self, yr):
        """``H(Phi y_r)`` on the full-order energy scale; columns are states."""
        yr = np.asarray(yr, dtype=float)
        if self.is_linear:
            return self.fom.dA * 0.5 * np.einsum("i...,i...->...", yr, self.K @ yr)
        if yr.ndim == 1:
            return self.fom.energy(self.Phi @ yr)
        chunk = 512
        return np.concatenate([
            np.atleast_1d(self.fom.energy(self.Phi @ yr[:, k:k + chunk]))
            for k in range(0, yr.shape[1], chunk)
        ])

    def rhs(self, yr):
        return self.D @ self.gradient(yr)


def _check(basis: ReducedBasis, fom, D):
    if basis.n != fom.n:
        raise InvalidDimensionError(f"basis has {basis.n} rows, model has dimension {fom.n}")
    if D.shape != (basis.r, basis.r):
        raise InvalidDimensionError(f"reduced operator has shape {D.shape}, basis has r={basis.r}")


def assemble_gp_rom(basis: ReducedBasis, op: InferredOperator, fom) -> RomSpec:
    """Data-driven reduced model with the learned operator, started at ``Phi^T y0``."""
    D = np.asarray(op.D_r, dtype=float)
    _check(basis, fom, D)
    return RomSpec(basis, D, fom, "gp_opinf", basis.Phi.T @ fom.y0, op)


def assemble_spg_rom(basis: ReducedBasis, fom) -> RomSpec:
    """Intrusive Galerkin model ``D_r = Phi^T D Phi``."""
    D_full = getattr(fom, "D", None)
    if D_full is None:
        raise UnsupportedError("the full-order model does not expose its structure matrix D")
    Phi = basis.Phi
    D = Phi.T @ D_full @ Phi
    _check(basis, fom, D)
    return RomSpec(basis, D, fom, "sp_g", Phi.T @ fom.y0)


@dataclass
class RomTrajectory:
    reduced: Trajectory
    energy: np.ndarray
    rom: RomSpec

    @property
    def states(self) -> np.ndarray:
        return self.reduced.states

    @property
    def times(self) -> np.ndarray:
        return self.reduced.times

    def lifted(self) -> np.ndarray:
        return self.rom.Phi @ self.reduced.states


def simulate_rom(rom: RomSpec, grid: TimeGrid, cfg: PicardConfig = PicardConfig(), y0=None) -> RomTrajectory:
    """Integrate the reduced model and record its energy at every step."""
    start = rom.y0 if y0 is None else np.asarray(y0, dtype=float)
    traj = integrate(rom, start, grid, cfg)
    return RomTrajectory(traj, np.atleast_1d(rom.energy(traj.states)), rom)
