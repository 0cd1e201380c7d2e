"""Structure-constrained least squares for the reduced operator ``D_r``.

Given projected derivative data ``Ydot_r`` and gradient data ``F_r`` the
reduced operator minimizes ``||Ydot_r - D_r F_r||_F`` subject to

* ``D_r^T = -D_r`` for conservative systems, solved through the Lyapunov
  equation ``G D + D G = Ydot_r F_r^T - F_r Ydot_r^T`` with ``G = F_r F_r^T``
  (variants ``"V"``, ``"P"`` and ``"GP"``);
* ``D_r`` negative semi-definite for dissipative systems, solved with a
  log-barrier and descent iterations (variant ``"dissipative"``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import InvalidDimensionError, NumericalError
from .linalg import antisymmetrize, skew_defect, solve_sym_lyapunov, sym_eig

__all__ = [
    "InferredOperator",
    "BarrierConfig",
    "infer_conservative_v",
    "infer_conservative_p",
    "infer_conservative_gp",
    "infer_dissipative",
    "infer",
    "regularization_epsilon",
    "antisymmetrize",
    "lsq_objective",
    "lsq_gradient",
    "log_barrier",
    "log_barrier_gradient",
    "det_barrier",
    "det_barrier_gradient",
    "max_sym_eig",
    "VARIANTS",
]

VARIANTS = ("V", "P", "GP", "dissipative")


@dataclass
class InferredOperator:
    """A learned reduced operator with its structure certificate.

    ``certificate`` is the skew defect ``max|D + D^T|`` for the conservative
    variants and the largest eigenvalue of ``(D + D^T)/2`` for the dissipative
    one. ``residual`` is ``||Ydot_r - D_r F_r||_F``.
    """

    D_r: np.ndarray
    variant: str
    certificate: float
    residual: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def r(self) -> int:
        return self.D_r.shape[0]


def _check_data(Ydot_r, F_r):
    Ydot_r = np.asarray(Ydot_r, dtype=float)
    F_r = np.asarray(F_r, dtype=float)
    if Ydot_r.ndim != 2 or Ydot_r.shape != F_r.shape:
        raise InvalidDimensionError(f"Ydot_r {Ydot_r.shape} and F_r {F_r.shape} must share a 2D shape")
    if Ydot_r.shape[0] < 1:
        raise InvalidDimensionError("reduced dimension must be >= 1")
    return Ydot_r, F_r


def _residual(Ydot_r, F_r, D):
    return float(np.linalg.norm(Ydot_r - D @ F_r))


def _lyapunov_data(Ydot_r, F_r):
    G = F_r @ F_r.T
    Q = Ydot_r @ F_r.T - F_r @ Ydot_r.T
    return G, Q


def _solve_v(Ydot_r, F_r, shift=0.0, tau_sing=None):
    G, Q = _lyapunov_data(Ydot_r, F_r)
    min_eig = float(sym_eig(G).eigenvalues[0])
    coef = G + shift * np.eye(G.shape[0]) if shift else G
    sol = solve_sym_lyapunov(coef, Q, tau_sing=tau_sing)
    diag = {
        "min_eig_FFt": min_eig,
        "epsilon": float(shift),
        "deflated": sol.deflated,
        "tau_sing": sol.threshold,
        "lyapunov_residual": sol.residual,
    }
    return sol.X, diag


def infer_conservative_v(Ydot_r, F_r, *, tau_sing: float | None = None) -> InferredOperator:
    """Direct Lyapunov solution, returned without symmetrization."""
    Ydot_r, F_r = _check_data(Ydot_r, F_r)
    D, diag = _solve_v(Ydot_r, F_r, tau_sing=tau_sing)
    return InferredOperator(D, "V", skew_defect(D), _residual(Ydot_r, F_r, D), diag)


def regularization_epsilon(min_eig: float, alpha: float = 2.0, c0: float = 1e-13) -> float:
    """Shift for the perturbed Lyapunov equation.

    ``max(c0, alpha*|min_eig|)`` when ``min_eig <= c0``, otherwise 0.
    """
    if alpha <= 0 or c0 <= 0:
        raise ValueError("alpha and c0 must be positive")
    if min_eig <= c0:
        return max(c0, alpha * abs(min_eig))
    return 0.0


def infer_conservative_p(
    Ydot_r, F_r, alpha: float = 2.0, c0: float = 1e-13, *, tau_sing: float | None = None
) -> InferredOperator:
    """Lyapunov solution with coefficient ``F_r F_r^T + eps I``."""
    Ydot_r, F_r = _check_data(Ydot_r, F_r)
    G = F_r @ F_r.T
    eps = regularization_epsilon(float(sym_eig(G).eigenvalues[0]), alpha, c0)
    D, diag = _solve_v(Ydot_r, F_r, shift=eps, tau_sing=tau_sing)
    diag.update(alpha=alpha, c0=c0)
    return InferredOperator(D, "P", skew_defect(D), _residual(Ydot_r, F_r, D), diag)


def infer_conservative_gp(Ydot_r, F_r, *, tau_sing: float | None = None) -> InferredOperator:
    """Skew part of the direct Lyapunov solution."""
    Ydot_r, F_r = _check_data(Ydot_r, F_r)
    D_hat, diag = _solve_v(Ydot_r, F_r, tau_sing=tau_sing)
    diag["skew_defect_unsymmetrized"] = skew_defect(D_hat)
    D = antisymmetrize(D_hat)
    return InferredOperator(D, "GP", skew_defect(D), _residual(Ydot_r, F_r, D), diag)


# --- dissipative case -------------------------------------------------------

@dataclass(frozen=True)
class BarrierConfig:
    """Settings of the barrier descent.

    ``tol`` bounds ``||grad f_beta||_F`` relative to ``max(1, ||Ydot_r F_r^T||_F)``.
    With ``precondition`` the descent direction is a truncated Newton step
    computed by preconditioned conjugate gradients; this removes the
    ill-conditioning of the data term. Set it to False for plain steepest descent. An inner descent at
    fixed ``beta`` ends when the relative gradient is below ``tol`` and the
    decrement ``<grad, direction>`` is below ``decrement_tol`` times the
    objective scale. When the optimum lies on the boundary of the cone the
    barrier gradient cannot be resolved below ``beta eps ||S|| / lambda_min(S)^2``
    (``S`` the symmetric part of the iterate), so ``tol`` is relaxed to that
    rounding floor.
    """

    beta0: float = 1e-2
    sigma: float = 0.5
    backtrack: float = 0.5
    armijo: float = 1e-4
    tol: float = 1e-8
    beta_floor: float = 1e-10
    max_outer: int = 200
    max_inner: int = 500
    precondition: bool = True
    ridge: float = 1e-15
    decrement_tol: float = 1e-12

    def __post_init__(self):
        if not self.beta0 > 0:
            raise ValueError("beta0 must be positive")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if not 0 < self.armijo < 1:
            raise ValueError("sufficient-decrease constant must lie in (0, 1)")
        if not (self.tol > 0 and self.beta_floor > 0):
            raise ValueError("tol and beta_floor must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be >= 1")


def lsq_objective(D, Ydot_r, F_r) -> float:
    """``||Ydot_r - D F_r||_F^2``."""
    R = Ydot_r - D @ F_r
    return float(np.sum(R * R))


def lsq_gradient(D, Ydot_r, F_r) -> np.ndarray:
    """Gradient ``-2 (Ydot_r - D F_r) F_r^T`` of :func:`lsq_objective`."""
    return -2.0 * (Ydot_r - D @ F_r) @ F_r.T


def _sym(D):
    return 0.5 * (D + D.T)


def log_barrier(D) -> float:
    """``sum log(-lambda_i)`` over eigenvalues of the symmetric part of ``D``.

    Returns ``-inf`` unless the symmetric part is negative definite.
    """
    lam = np.linalg.eigvalsh(_sym(np.asarray(D, dtype=float)))
    if lam[-1] >= 0:
        return -np.inf
    return float(np.sum(np.log(-lam)))


def log_barrier_gradient(D) -> np.ndarray:
    """Gradient of :func:`log_barrier`: the inverse of the symmetric part."""
    S = _sym(np.asarray(D, dtype=float))
    inv = np.linalg.inv(S)
    return 0.5 * (inv + inv.T)


def det_barrier(D) -> float:
    """``log((-1)^r det D)``; agrees with :func:`log_barrier` for symmetric ``D``."""
    D = np.asarray(D, dtype=float)
    sign, logdet = np.linalg.slogdet(-D)
    return float(logdet) if sign > 0 else -np.inf


def det_barrier_gradient(D) -> np.ndarray:
    """``D^{-T}``, the gradient of :func:`det_barrier`."""
    return np.linalg.inv(np.asarray(D, dtype=float)).T


def max_sym_eig(D) -> float:
    return float(np.linalg.eigvalsh(_sym(np.asarray(D, dtype=float)))[-1])


class _BarrierProblem:
    def __init__(self, Ydot_r, F_r, cfg: BarrierConfig):
        self.Y, self.F, self.cfg = Ydot_r, F_r, cfg
        self.scale = max(1.0, float(np.linalg.norm(Ydot_r @ F_r.T)))
        self.G = F_r @ F_r.T
        lam, self.V = np.linalg.eigh(self.G)
        self.lam = np.maximum(lam, 0.0) + cfg.ridge * max(lam[-1], np.finfo(float).tiny)

    def line(self, D, f0, grad_f, step, beta):
        """``t -> f_beta(D + t step)``; the misfit is an exact quadratic in ``t``."""
        lin = float(np.sum(grad_f * step))
        quad = float(np.sum(step * (step @ self.G)))

        def phi(t):
            g = log_barrier(D + t * step)
            if not np.isfinite(g):
                return np.inf
            return f0 + t * lin + t * t * quad - beta * g

        return phi

    def gradient(self, D, beta):
        return lsq_gradient(D, self.Y, self.F) - beta * log_barrier_gradient(D)

    def _metric_solve(self, R, a):
        # solve 2 X Lam + a (X + X^T) = R in the eigenbasis of G, entry pair by entry pair
        li, lj = self.lam[:, None], self.lam[None, :]
        det = 4.0 * li * lj + 2.0 * a * (li + lj)
        return ((2.0 * li + a) * R - a * R.T) / det

    def direction(self, grad, D, beta):
        """Truncated Newton step for ``f - beta g`` at ``D``.

        The Hessian acts as ``E -> 2 E G + beta S^{-1} sym(E) S^{-1}`` with
        ``S = sym(D)``. Conjugate gradients are preconditioned by the metric
        ``2 E G + beta c sym(E)``, ``c = 1 / min|lambda(S)|^2``, which is
        solved exactly in the eigenbasis of ``G``.
        """
        if not self.cfg.precondition:
            return -grad
        r = D.shape[0]
        V = self.V
        Sinv = np.linalg.inv(_sym(D))
        a = 0.5 * beta / np.abs(np.linalg.eigvalsh(_sym(D))).min() ** 2

        def hess(v):
            E = v.reshape(r, r)
            return (2.0 * E @ self.G + beta * Sinv @ _sym(E) @ Sinv).ravel()

        def precond(v):
            R = V.T @ v.reshape(r, r) @ V
            return (V @ self._metric_solve(R, a) @ V.T).ravel()

        H = spla.LinearOperator((r * r, r * r), matvec=hess, dtype=float)
        M = spla.LinearOperator((r * r, r * r), matvec=precond, dtype=float)
        x0 = precond(-grad.ravel())
        step, _ = spla.cg(H, -grad.ravel(), x0=x0, rtol=1e-10, maxiter=4 * r, M=M)
        step = step.reshape(r, r)
        if not np.all(np.isfinite(step)) or np.sum(step * grad) >= 0:
            step = x0.reshape(r, r)
        return step


def infer_dissipative(Ydot_r, F_r, cfg: BarrierConfig = BarrierConfig(), callback=None) -> InferredOperator:
    """Negative semi-definite ``D_r`` from a decreasing-barrier descent.

    Minimizes ``f(D) - beta * g(D)`` with ``f`` the least-squares misfit and
    ``g`` :func:`log_barrier`; ``beta`` shrinks by ``cfg.sigma`` after each
    inner descent. Steps use backtracking with an Armijo test and are
    rejected whenever they leave the feasible cone. The iteration starts
    from ``-rho I`` with ``rho = max(1, ||Ydot_r||_F / ||F_r||_F)``.

    ``callback(beta, f_beta, D)``, if given, is called after every accepted
    step with the barrier objective at the new iterate.
    """
    Ydot_r, F_r = _check_data(Ydot_r, F_r)
    r = Ydot_r.shape[0]
    prob = _BarrierProblem(Ydot_r, F_r, cfg)
    fnorm = np.linalg.norm(F_r)
    rho = max(1.0, float(np.linalg.norm(Ydot_r) / fnorm) if fnorm > 0 else 1.0)
    D = -rho * np.eye(r)
    beta = cfg.beta0
    trace = []
    total_inner = 0
    gnorm = gfloor = np.inf
    converged = False
    outer = 0
    for outer in range(1, cfg.max_outer + 1):
        settled = False
        for _ in range(cfg.max_inner):
            f0 = lsq_objective(D, Ydot_r, F_r)
            fb = f0 - beta * log_barrier(D)
            grad_f = lsq_gradient(D, Ydot_r, F_r)
            grad = grad_f - beta * log_barrier_gradient(D)
            gnorm = float(np.linalg.norm(grad)) / prob.scale
            # rounding floor of beta S^{-1}: beta eps ||S|| / lambda_min(S)^2
            lam = np.abs(np.linalg.eigvalsh(_sym(D)))
            gfloor = float(10.0 * beta * np.finfo(float).eps * lam.max() / lam.min() ** 2 / prob.scale)
            step = prob.direction(grad, D, beta)
            slope = float(np.sum(grad * step))
            if slope >= 0:
                step, slope = -grad, -float(np.sum(grad * grad))
            # Newton-decrement test; resolves directions the raw gradient norm cannot see
            if gnorm <= max(cfg.tol, gfloor) and -slope <= cfg.decrement_tol * (abs(fb) + beta * r):
                settled = True
                break
            phi = prob.line(D, f0, grad_f, step, beta)
            t = 1.0
            while True:
                ft = phi(t)
                if ft <= fb + cfg.armijo * t * slope:
                    break
                t *= cfg.backtrack
                if t < 1e-30:
                    break
            if t < 1e-30 or ft > fb:
                # no admissible step: accept stagnation at rounding level only
                if -slope <= 1e-10 * max(abs(fb), 1e-300) or gnorm <= max(cfg.tol, gfloor):
                    settled = True
                    break
                raise NumericalError(
                    f"barrier descent: every trial step rejected at beta={beta:.3e} "
                    f"(outer {outer}, |grad|_rel={gnorm:.3e}, f_beta={fb:.6e}); "
                    f"trace of (beta, |grad|_rel, f_beta): {trace[-5:]}"
                )
            D = D + t * step
            total_inner += 1
            if callback is not None:
                callback(beta, ft, D)
        trace.append((beta, gnorm, fb))
        if beta <= cfg.beta_floor and settled:
            converged = True
            break
        if beta > cfg.beta_floor:
            beta = max(beta * cfg.sigma, cfg.beta_floor * (1 - 1e-12))
    if not converged:
        warnings.warn(
            f"barrier descent stopped after {outer} outer rounds with relative gradient {gnorm:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    diag = {
        "outer_iterations": outer,
        "inner_iterations": total_inner,
        "final_beta": beta,
        "gradient_norm_rel": gnorm,
        "gradient_floor_rel": gfloor,
        "converged": converged,
        "rho": rho,
        "preconditioned": cfg.precondition,
    }
    return InferredOperator(D, "dissipative", max_sym_eig(D), _residual(Ydot_r, F_r, D), diag)


def infer(variant: str, Ydot_r, F_r, *, alpha: float = 2.0, c0: float = 1e-13,
          barrier: BarrierConfig = BarrierConfig(), tau_sing: float | None = None) -> InferredOperator:
    """Dispatch on the variant name (``"V"``, ``"P"``, ``"GP"``, ``"dissipative"``)."""
    if variant == "V":
        return infer_conservative_v(Ydot_r, F_r, tau_sing=tau_sing)
    if variant == "P":
        return infer_conservative_p(Ydot_r, F_r, alpha, c0, tau_sing=tau_sing)
    if variant == "GP":
        return infer_conservative_gp(Ydot_r, F_r, tau_sing=tau_sing)
    if variant == "dissipative":
        return infer_dissipative(Ydot_r, F_r, barrier)
    raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
