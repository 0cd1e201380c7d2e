"""Full-order gradient systems ``y' = D grad H(y)``.

Every built-in model has a gradient of the form

    grad H(y) = K y + q * y**2 + c * y**3        (entry-wise powers)

with ``K`` symmetric and ``q``, ``c`` coefficient vectors (or absent). The
energy is then ``H(y) = y^T K y / 2 + sum(q y^3 / 3 + c y^4 / 4)`` and the
reported discrete energy is ``H_bar = dA * H(y)`` with ``dA`` the cell size.
This polynomial form lets the time integrators average the gradient along a
segment in closed form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import InvalidDimensionError, ParameterWarning, StructureError
from .linalg import periodic_central_diff, periodic_laplacian

__all__ = [
    "FomSpec",
    "PARAMETER_RANGES",
    "wave_fom",
    "wave_profile",
    "kdv_fom",
    "allen_cahn_1d_fom",
    "allen_cahn_2d_fom",
    "generic_fom",
    "generic_fom_from_files",
    "eval_gradient",
    "eval_energy",
    "kdv_energy_unscaled",
    "build_fom",
]

Structure = Literal["conservative", "dissipative"]

PARAMETER_RANGES = {
    "wave": (5.0, 15.0),
    "kdv": (1.0, 5.0),
    "allen_cahn_1d": (0.2, 2.0),
    "allen_cahn_2d": (0.0, 0.7),
}


@dataclass(frozen=True, eq=False)
class FomSpec:
    """A full-order gradient system with polynomial gradient.

    Attributes
    ----------
    name : str
        Model identifier (``"wave"``, ``"kdv"``, ...).
    structure : {"conservative", "dissipative"}
    D : (n, n) ndarray
        Structure matrix; skew for conservative, negative semi-definite for
        dissipative systems.
    K : (n, n) ndarray
        Symmetric linear part of the gradient.
    quad, cubic : (n,) ndarray or None
        Entry-wise coefficients of the quadratic and cubic gradient terms.
    dA : float
        Cell size used to scale the energy (``dx`` or ``dx*dy``).
    mesh : tuple of float
        Spatial step(s).
    mu : float
        Parameter the initial state was generated with.
    y0 : (n,) ndarray
        Initial state.
    params : dict
        Remaining model constants, kept for provenance.
    """

    name: str
    structure: Structure
    D: np.ndarray
    K: np.ndarray
    dA: float
    mesh: tuple
    mu: float
    y0: np.ndarray
    quad: np.ndarray | None = None
    cubic: np.ndarray | None = None
    params: dict = field(default_factory=dict)
    grid: tuple = ()

    @property
    def n(self) -> int:
        return self.D.shape[0]

    @property
    def is_linear(self) -> bool:
        return self.quad is None and self.cubic is None

    def _check(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.n:
            raise InvalidDimensionError(
                f"{self.name}: state has length {y.shape[0]}, expected {self.n}"
            )
        return y

    def nonlinear(self, y: np.ndarray) -> np.ndarray:
        """Polynomial part of the gradient; accepts a vector or a column stack."""
        out = np.zeros_like(y, dtype=float)
        if self.quad is not None:
            out += _bcast(self.quad, y) * y**2
        if self.cubic is not None:
            out += _bcast(self.cubic, y) * y**3
        return out

    def nonlinear_average(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Exact average of the polynomial part over the segment from a to b."""
        out = np.zeros_like(a, dtype=float)
        if self.quad is not None:
            out += _bcast(self.quad, a) * (a * a + a * b + b * b) / 3.0
        if self.cubic is not None:
            a2, b2 = a * a, b * b
            out += _bcast(self.cubic, a) * (a2 * a + a2 * b + a * b2 + b2 * b) / 4.0
        return out

    def gradient(self, y) -> np.ndarray:
        y = self._check(y)
        return self.K @ y + self.nonlinear(y)

    def energy(self, y) -> float | np.ndarray:
        """Scaled energy ``dA * H(y)``; vectorized over columns of a 2D input."""
        y = self._check(y)
        h = 0.5 * np.einsum("i...,i...->...", y, self.K @ y)
        if self.quad is not None:
            h = h + np.sum(_bcast(self.quad, y) * y**3, axis=0) / 3.0
        if self.cubic is not None:
            h = h + np.sum(_bcast(self.cubic, y) * y**4, axis=0) / 4.0
        return self.dA * h

    def rhs(self, y) -> np.ndarray:
        return self.D @ self.gradient(y)


def _bcast(coef: np.ndarray, y: np.ndarray) -> np.ndarray:
    return coef if y.ndim == 1 else coef[:, None]


def _check_mu(model: str, mu: float, extrapolate: bool) -> None:
    lo, hi = PARAMETER_RANGES[model]
    if not (lo <= mu <= hi) and not extrapolate:
        warnings.warn(
            f"{model}: parameter mu={mu} outside [{lo}, {hi}]", ParameterWarning, stacklevel=3
        )


def _periodic_nodes(left: float, right: float, n: int) -> tuple[np.ndarray, float]:
    dx = (right - left) / n
    return left + dx * np.arange(n), dx


def wave_profile(s) -> np.ndarray:
    """Compactly supported cubic spline used for the wave initial pulse."""
    s = np.asarray(s, dtype=float)
    return np.where(
        s <= 1.0,
        1.0 - 1.5 * s**2 + 0.75 * s**3,
        np.where(s <= 2.0, 0.25 * (2.0 - s) ** 3, 0.0),
    )


def wave_fom(n: int, c: float = 0.1, mu: float = 10.0, *, extrapolate: bool = False) -> FomSpec:
    """Linear wave equation on [0, 1] as a canonical Hamiltonian system.

    The state is ``y = [u; v]`` of length ``2n`` and
    ``grad H = (-A u, v)`` with ``A = c^2/dx^2 L_n``.
    """
    if n < 3:
        raise InvalidDimensionError(f"wave: n must be >= 3, got {n}")
    if c <= 0:
        raise ValueError(f"wave: c must be positive, got {c}")
    _check_mu("wave", mu, extrapolate)
    x, dx = _periodic_nodes(0.0, 1.0, n)
    A = (c**2 / dx**2) * periodic_laplacian(n)
    I, Z = np.eye(n), np.zeros((n, n))
    D = np.block([[Z, I], [-I, Z]])
    K = np.block([[-A, Z], [Z, I]])
    u0 = wave_profile(mu * np.abs(x - 0.5))
    y0 = np.concatenate([u0, np.zeros(n)])
    return FomSpec(
        name="wave", structure="conservative", D=D, K=K, dA=dx, mesh=(dx,), mu=float(mu),
        y0=y0, params={"n": n, "c": c}, grid=(x,),
    )


def kdv_fom(
    n: int, alpha: float = -6.0, nu: float = -1.0, mu: float = np.sqrt(2.0), *,
    extrapolate: bool = False,
) -> FomSpec:
    """KdV equation on [-20, 20] in the form ``u' = A((alpha/2) u^2 + nu B u)``.

    ``A = S_n/(2 dx)`` is the skew structure matrix and ``B = L_n/dx^2``.
    """
    if n < 3:
        raise InvalidDimensionError(f"kdv: n must be >= 3, got {n}")
    _check_mu("kdv", mu, extrapolate)
    x, dx = _periodic_nodes(-20.0, 20.0, n)
    D = periodic_central_diff(n) / (2.0 * dx)
    K = (nu / dx**2) * periodic_laplacian(n)
    y0 = 1.0 / np.cosh(x / mu) ** 2
    return FomSpec(
        name="kdv", structure="conservative", D=D, K=K, dA=dx, mesh=(dx,), mu=float(mu),
        y0=y0, quad=np.full(n, alpha / 2.0), params={"n": n, "alpha": alpha, "nu": nu},
        grid=(x,),
    )


def allen_cahn_1d_fom(n: int, eps: float = 0.01, mu: float = 1.0, *, extrapolate: bool = False) -> FomSpec:
    """Allen-Cahn gradient flow on [-1, 1]: ``u' = -(-A u - u + u^3)``."""
    if n < 3:
        raise InvalidDimensionError(f"allen_cahn_1d: n must be >= 3, got {n}")
    if eps <= 0:
        raise ValueError(f"allen_cahn_1d: eps must be positive, got {eps}")
    _check_mu("allen_cahn_1d", mu, extrapolate)
    x, dx = _periodic_nodes(-1.0, 1.0, n)
    A = (eps**2 / dx**2) * periodic_laplacian(n)
    y0 = mu * x**2 * np.sin(2.0 * np.pi * x)
    return FomSpec(
        name="allen_cahn_1d", structure="dissipative", D=-np.eye(n), K=-A - np.eye(n),
        dA=dx, mesh=(dx,), mu=float(mu), y0=y0, cubic=np.ones(n),
        params={"n": n, "eps": eps}, grid=(x,),
    )


def allen_cahn_2d_initial(x, y, mu: float, eps: float, radius: float = 0.2) -> np.ndarray:
    """Two-disk ``tanh`` profile; disk centers are ``+-((0.7-mu) R, -mu R)``."""
    cx, cy = radius * (0.7 - mu), -radius * mu
    d1 = np.sqrt((x - cx) ** 2 + (y - cy) ** 2)
    d2 = np.sqrt((x + cx) ** 2 + (y + cy) ** 2)
    return np.maximum(np.tanh((radius - d1) / eps), np.tanh((radius - d2) / eps))


def allen_cahn_2d_fom(n: int, eps: float = 0.02, mu: float = 0.0, *, extrapolate: bool = False) -> FomSpec:
    """Allen-Cahn on the periodic square [-0.5, 0.5]^2 with ``n`` cells per side.

    States are vectorized with ``x`` running fastest, matching
    ``L = I (x) Dxx + Dyy (x) I``.
    """
    if n < 3:
        raise InvalidDimensionError(f"allen_cahn_2d: n must be >= 3, got {n}")
    _check_mu("allen_cahn_2d", mu, extrapolate)
    x, dx = _periodic_nodes(-0.5, 0.5, n)
    y, dy = x.copy(), dx
    Ln = periodic_laplacian(n)
    I = np.eye(n)
    L = np.kron(I, Ln / dx**2) + np.kron(Ln / dy**2, I)
    N = n * n
    X, Y = np.meshgrid(x, y)
    u0 = allen_cahn_2d_initial(X, Y, mu, eps).ravel()
    return FomSpec(
        name="allen_cahn_2d", structure="dissipative", D=-np.eye(N), K=-(eps**2) * L - np.eye(N),
        dA=dx * dy, mesh=(dx, dy), mu=float(mu), y0=u0, cubic=np.ones(N),
        params={"n": n, "eps": eps}, grid=(x, y),
    )


def _classify(D: np.ndarray, tol: float = 1e-10) -> Structure:
    scale = max(np.abs(D).max(initial=0.0), 1.0)
    if np.abs(D + D.T).max(initial=0.0) <= tol * scale:
        return "conservative"
    if np.linalg.eigvalsh((D + D.T) / 2.0).max() <= tol * scale:
        return "dissipative"
    raise StructureError("D is neither skew-symmetric nor negative semi-definite")


def generic_fom(
    D, K, y0=None, *, quad=None, cubic=None, dA: float = 1.0, mu: float = 0.0,
    name: str = "generic", structure: Structure | None = None,
) -> FomSpec:
    """Matrix-defined gradient system ``y' = D (K y + quad y^2 + cubic y^3)``."""
    D = np.asarray(D, dtype=float)
    K = np.asarray(K, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise StructureError(f"D must be square, got shape {D.shape}")
    if K.shape != D.shape:
        raise StructureError(f"K has shape {K.shape}, D has shape {D.shape}")
    if np.abs(K - K.T).max(initial=0.0) > 1e-10 * max(np.abs(K).max(initial=0.0), 1.0):
        raise StructureError("K is not symmetric to 1e-10")
    n = D.shape[0]
    y0 = np.zeros(n) if y0 is None else np.asarray(y0, dtype=float).ravel()
    if y0.shape != (n,):
        raise StructureError(f"initial state has length {y0.size}, expected {n}")

    def coef(v):
        if v is None:
            return None
        v = np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
        return v

    return FomSpec(
        name=name, structure=structure or _classify(D), D=D, K=K, dA=float(dA), mesh=(),
        mu=float(mu), y0=y0, quad=coef(quad), cubic=coef(cubic), params={},
    )


def generic_fom_from_files(
    D_path, K_path, y0_path=None, *, kind: str = "linear", dA: float = 1.0,
    structure: Structure | None = None,
) -> FomSpec:
    """Load ``D``, ``K`` (and optionally ``y0``) from GPOI matrix files.

    ``kind`` selects the gradient: ``"linear"`` for ``grad H = K y``, or
    ``"allen_cahn"`` for ``K y + y^3``.
    """
    from .data import read_matrix

    D = read_matrix(D_path)
    K = read_matrix(K_path)
    y0 = read_matrix(y0_path).ravel(order="F") if y0_path is not None else None
    if kind == "linear":
        extra = {}
    elif kind == "allen_cahn":
        extra = {"cubic": 1.0}
    else:
        raise StructureError(f"unknown gradient kind {kind!r}")
    return generic_fom(D, K, y0, dA=dA, structure=structure, name=f"generic:{Path(D_path).stem}", **extra)


def eval_gradient(spec: FomSpec, y) -> np.ndarray:
    return spec.gradient(y)


def eval_energy(spec: FomSpec, y) -> float:
    return spec.energy(y)


def kdv_energy_unscaled(spec: FomSpec, y):
    """KdV energy with the difference term left unscaled by ``1/dx^2``.

    This is the alternative reading of the discrete KdV Hamiltonian. It is
    not the energy whose gradient drives :func:`kdv_fom`, so it is only
    conserved up to the time-stepping error; :meth:`FomSpec.energy` is.
    """
    if spec.name != "kdv":
        raise StructureError(f"kdv_energy_unscaled needs a kdv model, got {spec.name}")
    y = np.asarray(y, dtype=float)
    alpha, nu = spec.params["alpha"], spec.params["nu"]
    diff = np.roll(y, -1, axis=0) - y
    return spec.dA * np.sum(alpha / 6.0 * y**3 - nu / 2.0 * diff**2, axis=0)


_BUILDERS = {
    "wave": wave_fom,
    "kdv": kdv_fom,
    "allen_cahn_1d": allen_cahn_1d_fom,
    "allen_cahn_2d": allen_cahn_2d_fom,
}


def build_fom(model: str, mu: float, **params) -> FomSpec:
    """Construct a built-in model by name."""
    try:
        builder = _BUILDERS[model]
    except KeyError:
        raise StructureError(f"unknown model {model!r}; choose from {sorted(_BUILDERS)}") from None
    return builder(mu=mu, **params)
