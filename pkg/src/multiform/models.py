"""Built-in models and the matrix-representation realisation of an algebra.

Every builder returns a :class:`ModelBundle`.  Bundles with an algebra are
checked at construction: {H_i, H_j} = c_ij^k H_k at 10 sampled points.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import expr as ex
from .liegroup import GroupChart, LieAlgebraData, moment_map_check
from .phase import HamiltonianSystem, PhasePoint

__all__ = [
    "ReferenceCheck",
    "ModelBundle",
    "harmonic_oscillator",
    "su2_oscillator",
    "toda_chain",
    "conformal_model",
    "lorentz_model",
    "matrix_rep_hamiltonians",
    "lorentz_generators",
    "lorentz_table_constants",
    "shift_pair",
    "ho_momentum",
    "ho_lagrangians",
    "toda_momentum",
    "toda_lagrangians_beta0",
    "MODELS",
    "get_model",
]

LORENTZ_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
ETA = np.diag([-1.0, 1.0, 1.0, 1.0])


@dataclass(frozen=True)
class ReferenceCheck:
    """A named closed-form relation attached to a model.

    ``func`` takes a phase point and returns a residual that should vanish
    (kind ``"identity"``), or is a closed-form formula documented in
    ``description`` (kind ``"formula"``).
    """

    name: str
    kind: str
    description: str
    func: Callable


@dataclass(frozen=True, eq=False)
class ModelBundle:
    name: str
    system: HamiltonianSystem
    algebra: LieAlgebraData | None = None
    chart: GroupChart | None = None
    reference_data: tuple[ReferenceCheck, ...] = ()
    box: tuple[np.ndarray, np.ndarray] | None = None  # (low, high) over (p, q)
    parameters: Mapping[str, float] = field(default_factory=dict)
    description: str = ""
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        m = self.system.m
        if self.box is None:
            object.__setattr__(self, "box", (np.full(2 * m, -2.0), np.full(2 * m, 2.0)))
        if self.algebra is not None:
            if self.algebra.n != self.system.n:
                raise ValueError(f"algebra has n={self.algebra.n}, system has n={self.system.n}")
            if not self.validate:
                return
            rng = np.random.default_rng(0)
            worst = max(moment_map_check(self.system, self.algebra, x) for x in self.sample_points(rng, 10))
            if worst > 1e-9:
                raise ValueError(f"{self.name}: moment map condition fails by {worst:.3e}")

    def sample_points(self, rng: np.random.Generator, count: int) -> list[PhasePoint]:
        """Uniform points in the model's sampling box (which avoids singular loci)."""
        low, high = self.box
        m = self.system.m
        pts = rng.uniform(low, high, size=(count, 2 * m))
        return [PhasePoint(p=row[:m], q=row[m:]) for row in pts]

    def structure_constants(self) -> np.ndarray:
        """c_ij^k, zero for abelian bundles."""
        if self.algebra is None:
            return np.zeros((self.system.n,) * 3)
        return self.algebra.c

    def to_dict(self) -> dict:
        data = {"name": self.name, "description": self.description, "system": self.system.to_dict()}
        data["system"]["parameters"] = dict(self.parameters)
        if self.algebra is not None:
            data["algebra"] = self.algebra.to_dict()
        if self.chart is not None:
            data["chart"] = self.chart.to_dict()
        low, high = self.box
        data["box"] = {"low": low.tolist(), "high": high.tolist()}
        return data


def _box(m: int, p=(-2.0, 2.0), q=(-2.0, 2.0)) -> tuple[np.ndarray, np.ndarray]:
    low = np.concatenate([np.full(m, p[0]), np.full(m, q[0])])
    high = np.concatenate([np.full(m, p[1]), np.full(m, q[1])])
    return low, high


# ---------------------------------------------------------------------------
# harmonic oscillator

_HO_H = "(p1^2 + q1^2)/2 + (p2^2 + q2^2)/2"
_J1 = "(p1^2 + q1^2)/2 - (p2^2 + q2^2)/2"
_J2 = "p1*q2 - p2*q1"
_J3 = "p1*p2 + q1*q2"


def _casimir(sys: HamiltonianSystem, idx: tuple[int, int, int, int]):
    def residual(x: PhasePoint) -> float:
        v = sys.values(x)
        h, j1, j2, j3 = (v[i] for i in idx)
        return j1 * j1 + j2 * j2 + j3 * j3 - h * h

    return residual


def _su2_basis() -> np.ndarray:
    """3x3 real matrices E_i = -2 L_i with (L_i)_jk = -eps_ijk."""
    eps = np.zeros((3, 3, 3))
    for (i, j, k), sgn in zip(itertools.permutations(range(3)), (1, -1, -1, 1, 1, -1)):
        eps[i, j, k] = sgn
    return 2.0 * eps


def _su2_constants() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    for (i, j, k), sgn in zip(itertools.permutations(range(3)), (1, -1, -1, 1, 1, -1)):
        eps[i, j, k] = sgn
    return -2.0 * eps


def harmonic_oscillator(variant: str = "ho") -> ModelBundle:
    """Two-dimensional isotropic oscillator.

    ``"ho"``: the commuting pair (H, J2) with J2 = p1 q2 - p2 q1.
    ``"ho-su2"``: (H, J1, J2, J3) realising R x su(2), whose bracket
    table is {J_i, J_j} = -2 eps_ijk J_k with the package's bracket sign.
    """
    if variant == "ho":
        sys = HamiltonianSystem.from_strings(2, [_HO_H, _J2], ["H", "J2"])
        return ModelBundle("ho", sys, description="2D oscillator with angular momentum")
    if variant == "ho-su2":
        sys = HamiltonianSystem.from_strings(2, [_HO_H, _J1, _J2, _J3], ["H", "J1", "J2", "J3"])
        E = np.zeros((4, 4, 4))
        E[0, 0, 0] = 1.0
        E[1:, 1:, 1:] = _su2_basis()
        c = np.zeros((4, 4, 4))
        c[1:, 1:, 1:] = _su2_constants()
        alg = LieAlgebraData(c, ("H", "J1", "J2", "J3"), E)
        ref = (ReferenceCheck("casimir", "identity", "J1^2 + J2^2 + J3^2 - H^2", _casimir(sys, (0, 1, 2, 3))),)
        return ModelBundle("ho-su2", sys, alg, GroupChart(alg), ref,
                           description="2D oscillator with its R x su(2) symmetry")
    raise ValueError(f"unknown oscillator variant {variant!r}")


def su2_oscillator() -> ModelBundle:
    """(J1, J2, J3) alone, an su(2) moment map on R^4."""
    sys = HamiltonianSystem.from_strings(2, [_J1, _J2, _J3], ["J1", "J2", "J3"])
    alg = LieAlgebraData(_su2_constants(), ("J1", "J2", "J3"), _su2_basis())
    return ModelBundle("su2", sys, alg, GroupChart(alg), description="su(2) realised by oscillator bilinears")


def ho_momentum(q, v1, v2, beta: float) -> np.ndarray:
    """Closed-form momenta p = q_1 + beta (q_2 - eps q) for the ``ho`` model."""
    q, v1, v2 = (np.asarray(a, dtype=float) for a in (q, v1, v2))
    eps_q = np.array([q[1], -q[0]])
    return v1 + beta * (v2 - eps_q)


def ho_lagrangians(q, v1, v2, beta: float) -> np.ndarray:
    """(L1, L2) of the ``ho`` model for alpha = (1, beta)."""
    q, v1, v2 = (np.asarray(a, dtype=float) for a in (q, v1, v2))
    w = v2 - np.array([q[1], -q[0]])
    L1 = 0.5 * (v1 @ v1 - beta**2 * (w @ w) - q @ q)
    L2 = (v1 + beta * w) @ w
    return np.array([L1, L2])


# ---------------------------------------------------------------------------
# Toda


def _prev(mu: int, m: int) -> int:
    return (mu - 2) % m + 1


def toda_chain(m: int = 3) -> ModelBundle:
    """Periodic Toda chain with m sites and its cubic conserved quantity.

    For m = 2 the neighbours wrap onto each other, so each exponential
    appears twice; the model is still well defined and involutive.
    """
    if m < 2:
        raise ValueError("the Toda chain needs m >= 2")
    h1, h2 = [], []
    for mu in range(1, m + 1):
        e = f"exp(q{mu} - q{_prev(mu, m)})"
        h1.append(f"p{mu}^2/2 + {e}")
        h2.append(f"p{mu}^3/3 + (p{mu} + p{_prev(mu, m)})*{e}")
    sys = HamiltonianSystem.from_strings(m, [" + ".join(h1), " + ".join(h2)], ["H1", "H2"])
    ref = (
        ReferenceCheck("momentum", "formula", "plus-branch p = 2c/(1 + sqrt(1 + 4 beta c))", toda_momentum),
        ReferenceCheck("lagrangian-beta0", "formula", "L1, L2 at beta = 0", toda_lagrangians_beta0),
    )
    return ModelBundle(f"toda-{m}", sys, reference_data=ref, parameters={"sites": m},
                       description=f"periodic Toda chain, {m} sites")


def _toda_E(q: np.ndarray) -> np.ndarray:
    return np.exp(np.roll(q, -1) - q) + np.exp(q - np.roll(q, 1))


def toda_momentum(q, v1, v2, beta: float, sign: float = 1.0) -> np.ndarray:
    """Closed-form momenta solving q_1 + beta q_2 = p + beta (p^2 + E).

    Written as 2c / (1 + sign sqrt(1 + 4 beta c)) with
    c = q_1 + beta (q_2 - E), which stays finite at beta = 0.
    """
    q, v1, v2 = (np.asarray(a, dtype=float) for a in (q, v1, v2))
    c = v1 + beta * (v2 - _toda_E(q))
    disc = 1.0 + 4.0 * beta * c
    if np.any(disc < 0):
        raise ValueError("no real momentum: negative discriminant")
    return 2.0 * c / (1.0 + sign * np.sqrt(disc))


def toda_lagrangians_beta0(q, v1, v2) -> np.ndarray:
    q, v1, v2 = (np.asarray(a, dtype=float) for a in (q, v1, v2))
    e = np.exp(q - np.roll(q, 1))
    L1 = np.sum(0.5 * v1**2 - e)
    L2 = np.sum(v1 * v2 - v1**3 / 3.0 - (v1 + np.roll(v1, 1)) * e)
    return np.array([L1, L2])


# ---------------------------------------------------------------------------
# conformal mechanics on the upper-triangular group


def conformal_model(mass: float = 1.0, a: float = 1.0) -> ModelBundle:
    """H0 = p^2/2m + a/q^2 and J = pq/2 on the group of upper-triangular matrices.

    The chart is g = exp(tau xi2) exp(t xi1) with coordinates (t, tau), so
    theta = [[1, -t], [0, 1]].  Sampling keeps q in [0.5, 2].
    """
    if mass <= 0 or a <= 0:
        raise ValueError("mass and a must be positive")
    sys = HamiltonianSystem.from_strings(1, ["p1^2/(2*M) + a/q1^2", "p1*q1/2"], ["H0", "J"], {"M": mass, "a": a})
    xi = np.array([[[0.0, 1.0], [0.0, 0.0]], [[-0.5, 0.0], [0.0, 0.5]]])
    alg = LieAlgebraData.from_matrices(xi, ("xi1", "xi2"))
    chart = GroupChart(alg, order=(1, 0))
    return ModelBundle(
        "conformal", sys, alg, chart,
        box=_box(1, q=(0.5, 2.0)),
        parameters={"mass": mass, "a": a},
        description="conformal mechanics with the time-dependent invariant J - t H0",
    )


# ---------------------------------------------------------------------------
# matrix representations and Lorentz


def matrix_rep_hamiltonians(rep, alg: LieAlgebraData, names=()) -> HamiltonianSystem:
    """H_i = -p_mu (M_i)^mu_nu q^nu for a representation of ``alg``."""
    M = np.asarray(rep, dtype=float)
    if M.ndim != 3 or M.shape[0] != alg.n or M.shape[1] != M.shape[2]:
        raise ValueError("representation must be n square matrices of equal size")
    comm = np.einsum("iab,jbc->ijac", M, M) - np.einsum("jab,ibc->ijac", M, M)
    err = float(np.max(np.abs(comm - np.einsum("ijk,kac->ijac", alg.c, M))))
    if err > 1e-12:
        raise ValueError(f"matrices do not represent the algebra (mismatch {err:.3e})")
    d = M.shape[1]
    hs = []
    for Mi in M:
        h: ex.Expression = ex.Const(0.0)
        for mu in range(d):
            for nu in range(d):
                if Mi[mu, nu] != 0.0:
                    term = ex.mul(ex.Const(-float(Mi[mu, nu])), ex.mul(ex.Var(f"p{mu + 1}"), ex.Var(f"q{nu + 1}")))
                    h = ex.add(h, term)
        hs.append(h)
    return HamiltonianSystem(d, tuple(hs), tuple(names))


def lorentz_generators() -> np.ndarray:
    """(M_ab)^mu_nu = delta_a^mu eta_bnu - delta_b^mu eta_anu, pairs (01,02,03,12,13,23)."""
    M = np.zeros((6, 4, 4))
    for i, (a, b) in enumerate(LORENTZ_PAIRS):
        M[i, a, :] += ETA[b]
        M[i, b, :] -= ETA[a]
    return M


def _pair_index(a: int, b: int) -> tuple[int, float]:
    if a == b:
        return -1, 0.0
    if a < b:
        return LORENTZ_PAIRS.index((a, b)), 1.0
    return LORENTZ_PAIRS.index((b, a)), -1.0


def lorentz_table_constants() -> np.ndarray:
    """Structure constants from the abstract bracket of the L_ab."""
    c = np.zeros((6, 6, 6))
    for i, (a, b) in enumerate(LORENTZ_PAIRS):
        for j, (g, x) in enumerate(LORENTZ_PAIRS):
            terms = ((ETA[b, g], a, x), (-ETA[a, g], b, x), (ETA[a, x], b, g), (-ETA[b, x], a, g))
            for coef, u, v in terms:
                k, sgn = _pair_index(u, v)
                if k >= 0 and coef != 0.0:
                    c[i, j, k] += coef * sgn
    return c


def lorentz_model(chart_kind: str = "exponential") -> ModelBundle:
    """Lorentz algebra acting on (q, p) through H_ab = -p M_ab q.

    The default chart uses canonical coordinates of the first kind, so the
    group element reached along a straight path from 0 to t is
    exp(t^ab M_ab).  ``chart_kind="product"`` gives ordered exponentials.
    """
    M = lorentz_generators()
    names = tuple(f"L{a}{b}" for a, b in LORENTZ_PAIRS)
    alg = LieAlgebraData.from_matrices(M, names)
    sys = matrix_rep_hamiltonians(M, alg, tuple(f"H{a}{b}" for a, b in LORENTZ_PAIRS))
    return ModelBundle("lorentz", sys, alg, GroupChart(alg, kind=chart_kind),
                       description="Lorentz group acting on Minkowski phase space")


def shift_pair() -> ModelBundle:
    """H1 = p1, H2 = q1: {H1, H2} = 1, a non-involutive control."""
    sys = HamiltonianSystem.from_strings(1, ["p1", "q1"], ["H1", "H2"])
    return ModelBundle("shift-pair", sys, description="translations that commute on points but not as a pair of Hamiltonians")


# ---------------------------------------------------------------------------
# registry

MODELS: dict[str, Callable[..., ModelBundle]] = {
    "ho": lambda: harmonic_oscillator("ho"),
    "ho-su2": lambda: harmonic_oscillator("ho-su2"),
    "su2": su2_oscillator,
    "toda": toda_chain,
    "conformal": conformal_model,
    "lorentz": lorentz_model,
    "shift-pair": shift_pair,
}


def get_model(name: str, **kwargs) -> ModelBundle:
    try:
        builder = MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {', '.join(MODELS)}") from None
    return builder(**kwargs)
