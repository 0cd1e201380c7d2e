"""Proper orthogonal decomposition bases and data projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidDimensionError, StructureError

__all__ = [
    "ReducedBasis",
    "pod_basis",
    "pod_basis_block2",
    "basis_from_modes",
    "project_set",
    "ProjectedData",
    "left_singular",
]


def _fix_signs(U: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column positive."""
    if U.size == 0:
        return U
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def left_singular(Y) -> tuple[np.ndarray, np.ndarray]:
    """Thin SVD left factor (sign-normalized) and singular values of ``Y``."""
    Y = np.asarray(Y, dtype=float)
    try:
        U, s, _ = np.linalg.svd(Y, full_matrices=False)
    except np.linalg.LinAlgError:
        U, s, _ = sla.svd(Y, full_matrices=False, lapack_driver="gesvd")
    return _fix_signs(U), s


@dataclass(frozen=True, eq=False)
class ReducedBasis:
    """Orthonormal reduced basis.

    ``blocks`` is ``None`` for a monolithic basis, or ``(r1, r2)`` when the
    basis is ``diag(Phi_u, Phi_v)`` acting on stacked ``[u; v]`` states. For a
    block basis ``singular_values`` holds the ``u`` values followed by the
    ``v`` values, each descending, and ``modes`` keeps every computed
    singular vector so that the basis can be truncated without a new SVD.
    """

    Phi: np.ndarray
    singular_values: np.ndarray
    blocks: tuple | None = None
    modes: tuple = ()

    @property
    def r(self) -> int:
        return self.Phi.shape[1]

    @property
    def n(self) -> int:
        return self.Phi.shape[0]

    def lift(self, yr) -> np.ndarray:
        return self.Phi @ yr

    def project(self, y) -> np.ndarray:
        return self.Phi.T @ y

    def truncate(self, r1: int, r2: int | None = None) -> "ReducedBasis":
        """Leading sub-basis; nested bases share their leading columns."""
        if self.blocks is None:
            U, s = self.modes
            return _mono(U, s, r1)
        Uu, su, Uv, sv = self.modes
        return _block(Uu, su, Uv, sv, r1, r1 if r2 is None else r2)


def _rank_tol(U, s) -> float:
    return s[0] * max(U.shape) * np.finfo(float).eps if s.size else 0.0


def _mono(U, s, r) -> ReducedBasis:
    if not 1 <= r <= U.shape[1]:
        raise InvalidDimensionError(f"requested r={r}, but only {U.shape[1]} singular vectors are available")
    tol = _rank_tol(U, s)
    if s[r - 1] <= tol:
        raise InvalidDimensionError(
            f"snapshot rank is below the requested r={r} (numerical rank {int(np.count_nonzero(s > tol))})"
        )
    return ReducedBasis(U[:, :r].copy(), s.copy(), None, (U, s))


def basis_from_modes(modes: tuple, r1: int, r2: int | None = None) -> ReducedBasis:
    """Rebuild a basis from stored singular vectors.

    ``modes`` is ``(U, s)`` for a monolithic basis or ``(U_u, s_u, U_v, s_v)``
    for a block basis, as kept in :attr:`ReducedBasis.modes`.
    """
    modes = tuple(np.asarray(m, dtype=float) for m in modes)
    if len(modes) == 2:
        return _mono(modes[0], modes[1].ravel(), r1)
    if len(modes) == 4:
        Uu, su, Uv, sv = modes
        return _block(Uu, su.ravel(), Uv, sv.ravel(), r1, r1 if r2 is None else r2)
    raise InvalidDimensionError(f"expected 2 or 4 mode arrays, got {len(modes)}")


def pod_basis(Y, r: int) -> ReducedBasis:
    """Leading ``r`` left singular vectors of the snapshot matrix ``Y``."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise InvalidDimensionError("snapshot matrix must be two-dimensional")
    if not 1 <= r <= min(Y.shape):
        raise InvalidDimensionError(f"r={r} out of range [1, {min(Y.shape)}] for snapshots of shape {Y.shape}")
    U, s = left_singular(Y)
    return _mono(U, s, r)


def _block(Uu, su, Uv, sv, r1, r2) -> ReducedBasis:
    for name, U, s, rr in (("u", Uu, su, r1), ("v", Uv, sv, r2)):
        if not 1 <= rr <= U.shape[1]:
            raise InvalidDimensionError(f"block {name}: requested r={rr}, only {U.shape[1]} modes available")
        rank_tol = _rank_tol(U, s)
        if s.size == 0 or s[rr - 1] <= rank_tol:
            raise InvalidDimensionError(
                f"block {name}: snapshot rank is below the requested r={rr} "
                f"(numerical rank {int(np.count_nonzero(s > rank_tol))})"
            )
    nu, nv = Uu.shape[0], Uv.shape[0]
    Phi = np.zeros((nu + nv, r1 + r2))
    Phi[:nu, :r1] = Uu[:, :r1]
    Phi[nu:, r1:] = Uv[:, :r2]
    return ReducedBasis(Phi, np.concatenate([su, sv]), (r1, r2), (Uu, su, Uv, sv))


def pod_basis_block2(U, V, r1: int, r2: int | None = None) -> ReducedBasis:
    """Block-diagonal basis ``diag(Phi_u, Phi_v)`` from component snapshots."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.shape[0] != V.shape[0]:
        raise InvalidDimensionError(f"U has {U.shape[0]} rows, V has {V.shape[0]}")
    r2 = r1 if r2 is None else r2
    Uu, su = left_singular(U)
    Uv, sv = left_singular(V)
    return _block(Uu, su, Uv, sv, r1, r2)


@dataclass(frozen=True)
class ProjectedData:
    Yr: np.ndarray
    Fr: np.ndarray
    Ydot_r: np.ndarray


def project_set(basis: ReducedBasis, snapshots) -> ProjectedData:
    """Project state, gradient and derivative snapshots onto ``basis``."""
    Phi = basis.Phi if isinstance(basis, ReducedBasis) else np.asarray(basis, dtype=float)
    if snapshots.Y.shape[0] != Phi.shape[0]:
        raise StructureError(
            f"basis has {Phi.shape[0]} rows but snapshots have {snapshots.Y.shape[0]}"
        )
    return ProjectedData(Phi.T @ snapshots.Y, Phi.T @ snapshots.F, Phi.T @ snapshots.Ydot)
