"""Lie-group multi-time: algebras, charts, Maurer-Cartan coefficients.

The multi-time R^n is replaced by an n-dimensional matrix group G with a
chart tau -> g(tau).  Left-invariant one-forms are read off from
g^{-1} dg = E_j theta^j_k dtau^k; the flows become non-autonomous,

    dq/dtau^k = theta^j_k(tau) {H_j, q},   dp/dtau^k = theta^j_k(tau) {H_j, p},

and they are compatible iff {H_i, H_j} = c_ij^k H_k, i.e. H is a moment map.

Index conventions: ``c[i, j, k]`` is c_ij^k with [E_i, E_j] = c_ij^k E_k,
and ``theta[j, k]`` is theta^j_k (row = algebra index, column = coordinate).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.integrate import simpson

from . import expr as ex
from .flows import IntegrationError, MultiTimeCurve, Segment, Trajectory, rk4_segments
from .phase import HamiltonianSystem, PhasePoint, bracket_expression, involutivity_matrix

__all__ = [
    "LieAlgebraData",
    "GroupChart",
    "ChartError",
    "matrix_exp",
    "jacobi_check",
    "theta_coefficients",
    "mc_compatibility_check",
    "moment_map_check",
    "k_functions",
    "integrate_group_flow",
    "group_action",
    "cross_consistency_check",
]


class ChartError(ValueError):
    pass


# ---------------------------------------------------------------------------
# matrix exponential

_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def matrix_exp(A) -> np.ndarray:
    """exp(A) by scaling and squaring with the [13/13] Pade approximant."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix_exp needs a square matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    norm = np.linalg.norm(A, 1)
    if norm == 0.0:
        return np.eye(A.shape[0])
    s = max(0, int(math.ceil(math.log2(norm / _THETA13)))) if norm > _THETA13 else 0
    A = A / 2.0**s
    b = _PADE13
    ident = np.eye(A.shape[0])
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    if not np.all(np.isfinite(R)):
        raise OverflowError("matrix exponential overflowed")
    return R


# ---------------------------------------------------------------------------
# algebra data


def _jacobi_violation(c: np.ndarray) -> float:
    if c.size == 0:
        return 0.0
    # sum_m c_ij^m c_mk^l + cyclic(i, j, k)
    t = np.einsum("ijm,mkl->ijkl", c, c)
    total = t + np.transpose(t, (1, 2, 0, 3)) + np.transpose(t, (2, 0, 1, 3))
    return float(np.max(np.abs(total)))


@dataclass(frozen=True, eq=False)
class LieAlgebraData:
    """Structure constants and an optional faithful matrix basis.

    With ``validate`` (the default) construction checks exact antisymmetry,
    the Jacobi identity to 1e-12, and, for a matrix basis, that the basis is
    linearly independent and its commutators reproduce ``c`` to 1e-12.
    """

    c: np.ndarray
    basis_names: tuple[str, ...] = ()
    matrix_basis: np.ndarray | None = None
    validate: bool = True

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        n = c.shape[0]
        if c.shape != (n, n, n):
            raise ValueError(f"structure constants must have shape (n, n, n), got {c.shape}")
        c.flags.writeable = False
        object.__setattr__(self, "c", c)
        names = tuple(self.basis_names) or tuple(f"E{i}" for i in range(1, n + 1))
        if len(names) != n:
            raise ValueError("one basis name per generator is required")
        object.__setattr__(self, "basis_names", names)
        if self.matrix_basis is not None:
            E = np.array(self.matrix_basis, dtype=float)
            if E.ndim != 3 or E.shape[0] != n or E.shape[1] != E.shape[2]:
                raise ValueError("matrix_basis must have shape (n, d, d)")
            E.flags.writeable = False
            object.__setattr__(self, "matrix_basis", E)
        if self.validate:
            self.check()

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def d(self) -> int | None:
        return None if self.matrix_basis is None else self.matrix_basis.shape[1]

    def check(self) -> None:
        if not np.array_equal(self.c, -np.transpose(self.c, (1, 0, 2))):
            raise ValueError("structure constants are not antisymmetric")
        viol = _jacobi_violation(self.c)
        if viol > 1e-12:
            raise ValueError(f"structure constants violate the Jacobi identity by {viol:.3e}")
        if self.matrix_basis is not None:
            E = self.matrix_basis
            if np.linalg.matrix_rank(E.reshape(self.n, -1)) < self.n:
                raise ValueError("matrix basis is linearly dependent")
            err = self.bracket_mismatch()
            if err > 1e-12:
                raise ValueError(f"matrix basis commutators differ from c by {err:.3e}")

    def bracket_mismatch(self) -> float:
        """Max entrywise |[E_i, E_j] - c_ij^k E_k|."""
        E = self.matrix_basis
        comm = np.einsum("iab,jbc->ijac", E, E) - np.einsum("jab,ibc->ijac", E, E)
        return float(np.max(np.abs(comm - np.einsum("ijk,kac->ijac", self.c, E))))

    @classmethod
    def from_matrices(cls, matrices, basis_names: Sequence[str] = (), validate: bool = True) -> "LieAlgebraData":
        """Derive structure constants from a matrix basis."""
        E = np.array(matrices, dtype=float)
        n = E.shape[0]
        B = E.reshape(n, -1).T
        c = np.zeros((n, n, n))
        for i in range(n):
            for j in range(n):
                comm = (E[i] @ E[j] - E[j] @ E[i]).reshape(-1)
                coef, *_ = np.linalg.lstsq(B, comm, rcond=None)
                if np.max(np.abs(B @ coef - comm), initial=0.0) > 1e-10:
                    raise ValueError("matrix span is not closed under commutators")
                c[i, j] = coef
        # clean rounding so antisymmetry holds exactly
        c = np.where(np.abs(c) < 1e-14, 0.0, c)
        c = 0.5 * (c - np.transpose(c, (1, 0, 2)))
        return cls(c, tuple(basis_names), E, validate)

    def to_dict(self, order: Sequence[int] | None = None) -> dict:
        """File schema; indices are 1-based."""
        n = self.n
        entries = [
            [i + 1, j + 1, k + 1, float(self.c[i, j, k])]
            for i in range(n) for j in range(n) for k in range(n)
            if i < j and self.c[i, j, k] != 0.0
        ]
        data = {"n": n, "structure_constants": entries, "basis_names": list(self.basis_names)}
        if self.matrix_basis is not None:
            data["matrix_basis"] = self.matrix_basis.tolist()
        if order is not None:
            data["order"] = [int(k) + 1 for k in order]
        return data

    @classmethod
    def from_dict(cls, data: Mapping, validate: bool = True) -> "LieAlgebraData":
        n = int(data["n"])
        c = np.zeros((n, n, n))
        given = set()
        for i, j, k, value in data.get("structure_constants", []):
            i, j, k = int(i) - 1, int(j) - 1, int(k) - 1
            c[i, j, k] = float(value)
            given.add((i, j, k))
        for i, j, k in given:
            if (j, i, k) not in given:
                c[j, i, k] = -c[i, j, k]
        return cls(c, tuple(data.get("basis_names", ())), data.get("matrix_basis"), validate)


def jacobi_check(alg) -> float:
    """Largest violation of the Jacobi identity by the structure constants."""
    c = alg.c if isinstance(alg, LieAlgebraData) else np.asarray(alg, dtype=float)
    return _jacobi_violation(c)


# ---------------------------------------------------------------------------
# charts


@dataclass(frozen=True, eq=False)
class GroupChart:
    """Coordinates tau on G built from exponentials of the matrix basis.

    ``kind="product"``: g(tau) = prod_k exp(tau^{order[k]} E_{order[k]})
    (order is a 0-based permutation).  ``kind="exponential"``:
    g(tau) = exp(tau^k E_k), the canonical coordinates of the first kind.
    """

    algebra: LieAlgebraData
    order: tuple[int, ...] = ()
    kind: str = "product"

    def __post_init__(self):
        if self.algebra.matrix_basis is None:
            raise ChartError("a chart needs an algebra with a matrix basis")
        order = tuple(int(k) for k in self.order) or tuple(range(self.algebra.n))
        if sorted(order) != list(range(self.algebra.n)):
            raise ChartError(f"order {order} is not a permutation of 0..{self.algebra.n - 1}")
        if self.kind not in ("product", "exponential"):
            raise ChartError(f"unknown chart kind {self.kind!r}")
        object.__setattr__(self, "order", order)
        B = self.algebra.matrix_basis.reshape(self.algebra.n, -1).T
        object.__setattr__(self, "_basis_cols", B)
        object.__setattr__(self, "_basis_pinv", np.linalg.pinv(B))

    @property
    def n(self) -> int:
        return self.algebra.n

    def _tau(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float).reshape(-1)
        if tau.size != self.n:
            raise ValueError(f"tau has length {tau.size}, chart has dimension {self.n}")
        return tau

    def element(self, tau) -> np.ndarray:
        tau = self._tau(tau)
        E = self.algebra.matrix_basis
        if self.kind == "exponential":
            return matrix_exp(np.tensordot(tau, E, axes=1))
        g = np.eye(self.algebra.d)
        for k in self.order:
            g = g @ matrix_exp(tau[k] * E[k])
        return g

    def derivatives(self, tau) -> tuple[np.ndarray, np.ndarray]:
        """g(tau) and the exact partials dg/dtau^k, shape (n, d, d)."""
        tau = self._tau(tau)
        E = self.algebra.matrix_basis
        d, n = self.algebra.d, self.n
        if self.kind == "exponential":
            X = np.tensordot(tau, E, axes=1)
            dg = np.empty((n, d, d))
            g = None
            for k in range(n):
                # Frechet derivative of exp: upper-right block of exp([[X, E],[0, X]])
                big = np.zeros((2 * d, 2 * d))
                big[:d, :d] = X
                big[d:, d:] = X
                big[:d, d:] = E[k]
                full = matrix_exp(big)
                dg[k] = full[:d, d:]
                g = full[:d, :d]
            return g, dg
        factors = [matrix_exp(tau[k] * E[k]) for k in self.order]
        prefix = [np.eye(d)]
        for F in factors:
            prefix.append(prefix[-1] @ F)
        suffix = [np.eye(d)]
        for F in reversed(factors):
            suffix.append(F @ suffix[-1])
        suffix = suffix[::-1]
        dg = np.empty((n, d, d))
        for pos, k in enumerate(self.order):
            dg[k] = prefix[pos] @ (E[k] @ factors[pos]) @ suffix[pos + 1]
        return prefix[-1], dg

    def to_dict(self) -> dict:
        return {"order": [k + 1 for k in self.order], "kind": self.kind}


def theta_coefficients(chart: GroupChart, tau, tol: float = 1e-10) -> np.ndarray:
    """theta[j, k] with g^{-1} dg/dtau^k = E_j theta[j, k].

    Raises :class:`ChartError` if g^{-1} dg leaves the span of the basis by
    more than ``tol`` (relative) or theta is singular.
    """
    g, dg = chart.derivatives(tau)
    n = chart.n
    ginv_dg = np.linalg.solve(g[None, :, :], dg)  # (n, d, d)
    targets = ginv_dg.reshape(n, -1).T
    theta = chart._basis_pinv @ targets
    resid = np.max(np.abs(chart._basis_cols @ theta - targets), initial=0.0)
    scale = max(1.0, float(np.max(np.abs(targets), initial=0.0)))
    if resid > tol * scale:
        raise ChartError(f"g^-1 dg is not in the span of the basis (residual {resid:.3e})")
    if np.linalg.cond(theta) > 1e12:
        raise ChartError("theta matrix is singular")
    return theta


def _theta_partials(chart: GroupChart, tau, h: float) -> np.ndarray:
    """D[l, r, m] = d theta^l_r / d tau^m by central differences."""
    tau = chart._tau(tau)
    n = chart.n
    D = np.empty((n, n, n))
    for m in range(n):
        e = np.zeros(n)
        e[m] = h
        D[:, :, m] = (theta_coefficients(chart, tau + e) - theta_coefficients(chart, tau - e)) / (2 * h)
    return D


def mc_compatibility_check(chart: GroupChart, tau, h: float = 1e-6) -> float:
    """Max |d_m theta^l_r - d_r theta^l_m - c_ji^l theta^j_r theta^i_m|."""
    theta = theta_coefficients(chart, tau)
    D = _theta_partials(chart, tau, h)
    lhs = D - np.transpose(D, (0, 2, 1))
    rhs = np.einsum("jil,jr,im->lrm", chart.algebra.c, theta, theta)
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# Hamiltonian side


def moment_map_check(sys: HamiltonianSystem, alg: LieAlgebraData, x: PhasePoint) -> float:
    """Max over i, j of |{H_i, H_j}(x) - c_ij^k H_k(x)|."""
    if sys.n != alg.n:
        raise ValueError(f"system has n={sys.n}, algebra has n={alg.n}")
    brackets = involutivity_matrix(sys, x)
    expected = np.einsum("ijk,k->ij", alg.c, sys.values(x))
    return float(np.max(np.abs(brackets - expected)))


def k_functions(sys: HamiltonianSystem, chart: GroupChart, tau, x: PhasePoint) -> np.ndarray:
    """K_k = H_j(x) theta^j_k(tau)."""
    return sys.values(x) @ theta_coefficients(chart, tau)


def integrate_group_flow(
    sys: HamiltonianSystem,
    alg: LieAlgebraData,
    chart: GroupChart,
    path: MultiTimeCurve,
    x0: PhasePoint,
    N: int,
) -> Trajectory:
    """RK4 along a path in chart coordinates.

    The returned trajectory carries ``t`` = the accumulated left-invariant
    times (integrals of theta^j along the path, equal to tau for abelian
    groups) and ``extras`` with ``tau`` and ``K`` sampled along the path.
    """
    if not (sys.n == alg.n == chart.n == path.n):
        raise ValueError("system, algebra, chart and path dimensions differ")
    if N < 1:
        raise ValueError("N must be >= 1")
    m, n = sys.m, sys.n
    grad = sys._compiled_gradients
    velocities = [path.velocity(j) for j in range(path.n_segments)]
    k_seg = path.n_segments

    def tau_at(seg: int, s: float) -> np.ndarray:
        return path.nodes[seg] + (s * k_seg - seg) * (path.nodes[seg + 1] - path.nodes[seg])

    def rhs(y, seg, s):
        q, p = y[:m], y[m: 2 * m]
        Y = theta_coefficients(chart, tau_at(seg, s)) @ velocities[seg]
        flat = np.array(grad(*p.tolist(), *q.tolist()))
        dHdp = flat[: n * m].reshape(n, m)
        dHdq = flat[n * m:].reshape(n, m)
        return np.concatenate([Y @ dHdp, -(Y @ dHdq), Y])

    y0 = np.concatenate([x0.as_array(), np.zeros(n)])
    try:
        s, y, ranges = rk4_segments(rhs, y0, path.n_segments, N)
    except ChartError as exc:
        raise IntegrationError(str(exc)) from exc
    tau = np.array([path(si) for si in s])
    q, p = y[:, :m], y[:, m: 2 * m]
    K = np.array([
        sys.values(PhasePoint(p=p[k], q=q[k])) @ theta_coefficients(chart, tau[k]) for k in range(s.size)
    ])
    segments = tuple(Segment(a, b, velocities[j]) for j, (a, b) in enumerate(ranges))
    return Trajectory(s=s, t=y[:, 2 * m:], q=q, p=p, segments=segments, extras={"tau": tau, "K": K})


def group_action(sys: HamiltonianSystem, chart: GroupChart, traj: Trajectory) -> float:
    """Integral of p dq - H_j theta^j along a group-flow trajectory."""
    tau = traj.extras["tau"]
    total = 0.0
    for seg in traj.segments:
        idx = range(seg.start, seg.stop + 1)
        vals = []
        for k in idx:
            x = traj.point(k)
            Y = theta_coefficients(chart, tau[k]) @ seg.velocity
            dHdp, _ = sys.gradients(x)
            vals.append(x.p @ (Y @ dHdp) - sys.values(x) @ Y)
        total += float(simpson(np.array(vals), x=traj.s[seg.start: seg.stop + 1]))
    return total


def cross_consistency_check(
    sys: HamiltonianSystem,
    alg: LieAlgebraData,
    chart: GroupChart,
    x: PhasePoint,
    tau,
    probe: ex.Expression | str,
    h: float = 1e-6,
) -> float:
    """Commutator of tau-derivatives of ``probe`` along the group flows.

    Returns max over j, k of

        (d_j theta^l_k - d_k theta^l_j) {H_l, f}
          + theta^l_k theta^m_j ({H_m, {H_l, f}} - {H_l, {H_m, f}}),

    with symbolic brackets and finite-difference theta derivatives.  It
    vanishes when H is a moment map for the chart's group.
    """
    if not (sys.n == alg.n == chart.n):
        raise ValueError("system, algebra and chart dimensions differ")
    f = ex.parse(probe) if isinstance(probe, str) else probe
    n, b = sys.n, x.binding()
    first = [bracket_expression(H, f, sys.m) for H in sys.hamiltonians]
    B1 = np.array([ex.evaluate(e, b) for e in first])
    B2 = np.array([[ex.evaluate(bracket_expression(Hm, fl, sys.m), b) for fl in first] for Hm in sys.hamiltonians])
    theta = theta_coefficients(chart, tau)
    D = _theta_partials(chart, tau, h)  # D[l, k, j] = d_j theta^l_k
    curl = D - np.transpose(D, (0, 2, 1))  # [l, k, j]
    term1 = np.einsum("lkj,l->jk", curl, B1)
    term2 = np.einsum("lk,mj,ml->jk", theta, theta, B2 - B2.T)
    return float(np.max(np.abs(term1 + term2)))
