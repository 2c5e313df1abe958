"""Inverse Legendre transform from phase-space to position-space one-forms.

Given velocities q^mu_i (one column per time t^i) and a direction alpha in
multi-time, momenta are recovered from

    alpha^i q^mu_i = alpha^i dH_i/dp_mu(p, q)

by Newton's method with the exact Jacobian g^{mu nu} = alpha^i d2H_i/dp dp.
The Lagrangian coefficients are then L_i = p . q_i - H_i(p, q).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .phase import HamiltonianSystem, PhasePoint

__all__ = [
    "VelocityField",
    "NewtonInfo",
    "LegendreError",
    "SingularJacobianError",
    "ConvergenceError",
    "ConvexityWarning",
    "solve_momenta",
    "lagrangian_coefficients",
    "alpha_independence_check",
    "roundtrip_check",
    "convexity_margin",
    "on_shell_velocities",
    "default_guess",
]

class LegendreError(RuntimeError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (last residual {residual:.3e})")


class SingularJacobianError(LegendreError):
    pass


class ConvergenceError(LegendreError):
    pass


class ConvexityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class VelocityField:
    """Position q (length m) and velocities qdot[mu, i] = dq^mu/dt^i."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        qdot = np.array(self.qdot, dtype=float)
        if qdot.ndim == 1:
            qdot = qdot[:, None]
        if qdot.shape[0] != q.size:
            raise ValueError(f"qdot has {qdot.shape[0]} rows for m={q.size}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qdot))):
            raise ValueError("velocity field has non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)


@dataclass(frozen=True)
class NewtonInfo:
    iterations: int
    residual: float
    history: tuple[float, ...]
    convexity_margin: float


def _check(sys: HamiltonianSystem, alpha, vf: VelocityField) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if alpha.size != sys.n:
        raise ValueError(f"alpha has length {alpha.size}, system has n={sys.n}")
    if not np.any(alpha != 0):
        raise ValueError("alpha must be non-zero")
    if vf.q.size != sys.m or vf.qdot.shape[1] != sys.n:
        raise ValueError("velocity field does not match the system dimensions")
    return alpha


def on_shell_velocities(sys: HamiltonianSystem, x: PhasePoint) -> VelocityField:
    """Velocities q^mu_i = dH_i/dp_mu at ``x``."""
    dHdp, _ = sys.gradients(x)
    return VelocityField(q=x.q, qdot=dHdp.T)


def default_guess(alpha, vf: VelocityField) -> np.ndarray:
    """Alpha-weighted average velocity.

    Normalised by sum(alpha) (or by the largest |alpha^i| when that sum
    vanishes) so that alpha = (1, 0, ...) gives q_1.
    """
    alpha = np.asarray(alpha, dtype=float)
    scale = alpha.sum()
    if abs(scale) < 1e-12:
        scale = alpha[np.argmax(np.abs(alpha))]
    return vf.qdot @ alpha / scale


def _metric(sys: HamiltonianSystem, alpha: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.tensordot(alpha, sys.hessians_pp(PhasePoint(p=p, q=q)), axes=1)


def solve_momenta(
    sys: HamiltonianSystem,
    alpha,
    vf: VelocityField,
    p_guess=None,
    tol: float = 1e-12,
    maxiter: int = 50,
    full_output: bool = False,
):
    """Solve alpha^i q_i = alpha^i dH_i/dp for the momenta p.

    Damped Newton: a step that increases the residual max-norm is halved, at
    most 20 times, which keeps the iterate on the branch picked by the guess.

    Returns
    -------
    p : ndarray
        Momenta with residual max-norm below ``tol``.
    info : NewtonInfo
        Only when ``full_output`` is true.

    Raises
    ------
    SingularJacobianError
        If the condition number of g exceeds 1e14.
    ConvergenceError
        If ``maxiter`` iterations do not reach ``tol``.
    """
    alpha = _check(sys, alpha, vf)
    q = vf.q
    target = vf.qdot @ alpha
    p = default_guess(alpha, vf) if p_guess is None else np.array(p_guess, dtype=float).reshape(-1)

    def residual(p):
        dHdp, _ = sys.gradients(PhasePoint(p=p, q=q))
        return alpha @ dHdp - target

    r = residual(p)
    rnorm = float(np.max(np.abs(r)))
    history = [rnorm]
    it = 0
    while rnorm >= tol:
        if it >= maxiter:
            raise ConvergenceError(f"Newton did not converge in {maxiter} iterations", rnorm)
        g = _metric(sys, alpha, p, q)
        if np.linalg.cond(g) > 1e14:
            raise SingularJacobianError("singular Jacobian g", rnorm)
        step = np.linalg.solve(g, r)
        lam = 1.0
        for _ in range(21):
            trial = p - lam * step
            try:
                r_trial = residual(trial)
            except ValueError:
                r_trial = None
            if r_trial is not None and np.all(np.isfinite(r_trial)):
                t_norm = float(np.max(np.abs(r_trial)))
                if t_norm <= rnorm:
                    break
            lam *= 0.5
        else:
            raise ConvergenceError("line search failed to reduce the residual", rnorm)
        p, r, rnorm = trial, r_trial, t_norm
        history.append(rnorm)
        it += 1
    if not full_output:
        return p
    margin = float(np.linalg.eigvalsh(_metric(sys, alpha, p, q))[0])
    return p, NewtonInfo(iterations=it, residual=rnorm, history=tuple(history), convexity_margin=margin)


def lagrangian_coefficients(sys: HamiltonianSystem, alpha, vf: VelocityField, p_guess=None, **kw) -> np.ndarray:
    """L_i = p . q_i - H_i(p, q) with p from :func:`solve_momenta`."""
    p = solve_momenta(sys, alpha, vf, p_guess, **kw)
    return p @ vf.qdot - sys.values(PhasePoint(p=p, q=vf.q))


def alpha_independence_check(sys: HamiltonianSystem, alpha1, alpha2, x: PhasePoint, p_guess=None) -> float:
    """|p(alpha1) - p(alpha2)| (max-norm) for on-shell velocities built at ``x``.

    Both solves start from ``p_guess`` or, by default, from the velocity
    guess of each alpha, so neither is handed the answer.
    """
    vf = on_shell_velocities(sys, x)
    p1 = solve_momenta(sys, alpha1, vf, p_guess=p_guess)
    p2 = solve_momenta(sys, alpha2, vf, p_guess=p_guess)
    return float(np.max(np.abs(p1 - p2)))


def roundtrip_check(sys: HamiltonianSystem, alpha, x: PhasePoint, h: float = 1e-5) -> tuple[float, float]:
    """Inverse transform followed by the forward transform.

    The forward momenta are the trace (1/n) sum_j dL_j/dv^mu_j, evaluated
    by central differences of :func:`lagrangian_coefficients` in each
    velocity slot.  Returns (momentum gap, Hamiltonian gap), both max-norms.
    """
    vf = on_shell_velocities(sys, x)
    n, m = sys.n, sys.m
    p_tilde = np.zeros(m)
    for mu in range(m):
        for j in range(n):
            up, down = vf.qdot.copy(), vf.qdot.copy()
            up[mu, j] += h
            down[mu, j] -= h
            # the guess keeps each solve on the branch of x
            L_up = lagrangian_coefficients(sys, alpha, VelocityField(vf.q, up), p_guess=x.p)
            L_down = lagrangian_coefficients(sys, alpha, VelocityField(vf.q, down), p_guess=x.p)
            p_tilde[mu] += (L_up[j] - L_down[j]) / (2 * h)
    p_tilde /= n
    dp = float(np.max(np.abs(p_tilde - x.p)))
    dH = float(np.max(np.abs(sys.values(PhasePoint(p=p_tilde, q=x.q)) - sys.values(x))))
    return dp, dH


def convexity_margin(sys: HamiltonianSystem, alpha, x: PhasePoint, warn: bool = True) -> float:
    """Smallest eigenvalue of g = alpha^i d2H_i/dp dp at ``x``.

    Emits :class:`ConvexityWarning` when it is not positive.
    """
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    g = _metric(sys, alpha, x.p, x.q)
    margin = float(np.linalg.eigvalsh(g)[0])
    if warn and margin <= 0:
        warnings.warn(
            f"alpha . H is not convex in p here (smallest eigenvalue {margin:.3g})",
            ConvexityWarning,
            stacklevel=2,
        )
    return margin
