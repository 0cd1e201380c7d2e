"""Dense linear-algebra kernels: periodic stencils, symmetric eigensolver,
spectral Lyapunov solver and structure diagnostics.

Matrices are plain two-dimensional ``float64`` numpy arrays.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DeflationWarning, InvalidDimensionError, NumericalError, StructureError

__all__ = [
    "SymEigDecomposition",
    "LyapunovSolution",
    "periodic_laplacian",
    "periodic_central_diff",
    "sym_eig",
    "solve_sym_lyapunov",
    "skew_defect",
    "antisymmetrize",
]


def _check_n(n: int) -> int:
    if int(n) != n or n < 3:
        raise InvalidDimensionError(f"periodic stencil needs n >= 3, got {n}")
    return int(n)


def _as_square(M, name="matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidDimensionError(f"{name} must be square, got shape {M.shape}")
    return M


def periodic_laplacian(n: int) -> np.ndarray:
    """Second-difference matrix with periodic wrap (-2 diagonal, 1 off-diagonal
    and in the two corners)."""
    n = _check_n(n)
    L = -2.0 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)
    L[0, -1] = L[-1, 0] = 1.0
    return L


def periodic_central_diff(n: int) -> np.ndarray:
    """Skew central-difference matrix with periodic wrap.

    ``+1`` on the super-diagonal, ``-1`` on the sub-diagonal, ``-1`` at the
    top-right corner and ``+1`` at the bottom-left corner. No ``1/(2 dx)``
    scaling is applied.
    """
    n = _check_n(n)
    S = np.eye(n, k=1) - np.eye(n, k=-1)
    S[0, -1] = -1.0
    S[-1, 0] = 1.0
    return S


@dataclass(frozen=True)
class SymEigDecomposition:
    """Eigenvalues in ascending order with orthonormal eigenvectors as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def _check_symmetric(M: np.ndarray, rtol: float, name: str) -> None:
    scale = max(np.abs(M).max(initial=0.0), np.finfo(float).tiny)
    asym = np.abs(M - M.T).max(initial=0.0)
    if asym > rtol * scale:
        raise StructureError(
            f"{name} is not symmetric: max|M - M^T| = {asym:.3e} exceeds {rtol:g} relative"
        )


def sym_eig(M, rtol: float = 1e-12) -> SymEigDecomposition:
    """Eigendecomposition of a real symmetric matrix.

    Backed by LAPACK ``syevd`` through :func:`numpy.linalg.eigh`. The input must
    be symmetric to within ``rtol`` relative to its largest entry; only the
    lower triangle is referenced afterwards.
    """
    M = _as_square(M)
    if not np.all(np.isfinite(M)):
        raise StructureError("matrix has non-finite entries")
    _check_symmetric(M, rtol, "matrix")
    try:
        w, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"symmetric eigensolver did not converge for a {M.shape[0]}x{M.shape[0]} matrix "
            f"(LAPACK syevd iteration limit exceeded): {exc}"
        ) from exc
    return SymEigDecomposition(w, V)


@dataclass(frozen=True)
class LyapunovSolution:
    """Solution ``X`` of ``G X + X G = Q`` with diagnostics.

    Attributes
    ----------
    X : ndarray
        The solution.
    residual : float
        Relative residual ``||G X + X G - Q||_F / ||Q||_F`` (absolute when
        ``Q = 0``).
    deflated : int
        Number of index pairs ``(i, j)`` whose eigenvalue sum fell below the
        singularity threshold and were set to zero.
    threshold : float
        The singularity threshold that was applied.
    """

    X: np.ndarray
    residual: float
    deflated: int
    threshold: float


def solve_sym_lyapunov(G, Q, tau_sing: float | None = None, rtol: float = 1e-12) -> LyapunovSolution:
    r"""Solve ``G X + X G = Q`` for symmetric ``G`` by diagonalization.

    With ``G = V diag(lam) V^T`` and ``Qt = V^T Q V`` the solution in the
    eigenbasis is ``Xt_ij = Qt_ij / (lam_i + lam_j)``. Pairs with
    ``|lam_i + lam_j| <= tau_sing`` are deflated (set to zero) and counted; a
    :class:`~gpopinf.errors.DeflationWarning` is emitted whenever that happens.

    Parameters
    ----------
    G : (r, r) array_like
        Symmetric coefficient, typically ``F_r F_r^T`` (PSD up to rounding).
    Q : (r, r) array_like
        Right-hand side. Any square matrix is accepted; skew-symmetric ``Q``
        gives a skew-symmetric ``X`` up to rounding.
    tau_sing : float, optional
        Singularity threshold. Defaults to ``1e-14 * max|lam|``.
    """
    G = _as_square(G, "G")
    Q = _as_square(Q, "Q")
    if G.shape != Q.shape:
        raise InvalidDimensionError(f"G has shape {G.shape} but Q has shape {Q.shape}")
    eig = sym_eig(G, rtol=rtol)
    lam, V = eig.eigenvalues, eig.eigenvectors
    if tau_sing is None:
        tau_sing = 1e-14 * np.abs(lam).max(initial=0.0)
    denom = lam[:, None] + lam[None, :]
    keep = np.abs(denom) > tau_sing
    Qt = V.T @ Q @ V
    Xt = np.zeros_like(Qt)
    Xt[keep] = Qt[keep] / denom[keep]
    X = V @ Xt @ V.T
    deflated = int(keep.size - np.count_nonzero(keep))
    if deflated:
        warnings.warn(
            f"Lyapunov solve deflated {deflated} of {keep.size} eigenvalue pairs "
            f"(|lam_i + lam_j| <= {tau_sing:.3e})",
            DeflationWarning,
            stacklevel=2,
        )
    qnorm = np.linalg.norm(Q)
    res = np.linalg.norm(G @ X + X @ G - Q)
    residual = float(res / qnorm) if qnorm > 0 else float(res)
    return LyapunovSolution(X, residual, deflated, float(tau_sing))


def skew_defect(M) -> float:
    """Largest entry of ``|M + M^T|``; zero exactly for skew-symmetric ``M``."""
    M = _as_square(M)
    return float(np.abs(M + M.T).max(initial=0.0))


def antisymmetrize(M) -> np.ndarray:
    """Skew-symmetric part ``(M - M^T) / 2``, the Frobenius-nearest skew matrix."""
    M = _as_square(M)
    return (M - M.T) / 2.0
