"""Phase-space points, Hamiltonian systems and the canonical Poisson bracket.

Bracket convention, used everywhere in the package::

    {F, G} = sum_mu  dF/dp_mu dG/dq^mu - dG/dp_mu dF/dq^mu

so that {p1, q1} = 1 and Hamilton's equations read df/dt = {H, f}.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .expr import Expression

__all__ = [
    "PhasePoint",
    "TangentData",
    "HamiltonianSystem",
    "phase_variables",
    "poisson_bracket",
    "bracket_expression",
    "involutivity_matrix",
    "one_form_eval",
    "omega_rank_check",
]


def phase_variables(m: int) -> tuple[list[str], list[str]]:
    return [f"p{i}" for i in range(1, m + 1)], [f"q{i}" for i in range(1, m + 1)]


@dataclass(frozen=True)
class PhasePoint:
    """Canonical coordinates (p_mu, q^mu) of a point of phase space."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(-1)
        q = np.array(self.q, dtype=float).reshape(-1)
        if p.shape != q.shape or p.size < 1:
            raise ValueError(f"p and q must have equal length >= 1, got {p.size} and {q.size}")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ValueError("phase point has non-finite entries")
        p.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def m(self) -> int:
        return self.p.size

    def binding(self) -> dict[str, float]:
        b = {f"p{i + 1}": float(v) for i, v in enumerate(self.p)}
        b.update({f"q{i + 1}": float(v) for i, v in enumerate(self.q)})
        return b

    def as_array(self) -> np.ndarray:
        """State vector ordered (q, p)."""
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_array(cls, y) -> "PhasePoint":
        y = np.asarray(y, dtype=float)
        m = y.size // 2
        return cls(p=y[m:], q=y[:m])


@dataclass(frozen=True)
class TangentData:
    """Components of a tangent vector to M x R^n along a curve."""

    dp: np.ndarray
    dq: np.ndarray
    dt: np.ndarray

    def __post_init__(self):
        for name in ("dp", "dq", "dt"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).reshape(-1))
        if self.dp.shape != self.dq.shape:
            raise ValueError("dp and dq must have the same length")

    def __add__(self, other: "TangentData") -> "TangentData":
        return TangentData(self.dp + other.dp, self.dq + other.dq, self.dt + other.dt)


@dataclass(frozen=True, eq=False)
class HamiltonianSystem:
    """n Hamiltonians on a 2m-dimensional phase space.

    Gradients are differentiated once at construction and compiled into a
    single callable; see :meth:`gradients`.
    """

    m: int
    hamiltonians: tuple[Expression, ...]
    names: tuple[str, ...] = ()
    _dHdp: tuple[tuple[Expression, ...], ...] = field(init=False, repr=False)
    _dHdq: tuple[tuple[Expression, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        hs = tuple(ex.parse(h) if isinstance(h, str) else h for h in self.hamiltonians)
        if self.m < 1:
            raise ValueError("m must be positive")
        if not hs:
            raise ValueError("at least one Hamiltonian is required")
        names = tuple(self.names) or tuple(f"H{i}" for i in range(1, len(hs) + 1))
        if len(names) != len(hs):
            raise ValueError(f"{len(names)} names for {len(hs)} Hamiltonians")
        allowed = set(self.variables)
        for name, h in zip(names, hs):
            extra = ex.free_variables(h) - allowed
            if extra:
                raise ValueError(f"{name} uses undeclared variables {sorted(extra)}")
        object.__setattr__(self, "hamiltonians", hs)
        object.__setattr__(self, "names", names)
        ps, qs = phase_variables(self.m)
        object.__setattr__(self, "_dHdp", tuple(tuple(ex.differentiate(h, v) for v in ps) for h in hs))
        object.__setattr__(self, "_dHdq", tuple(tuple(ex.differentiate(h, v) for v in qs) for h in hs))

    @classmethod
    def from_strings(
        cls,
        m: int,
        hamiltonians: Sequence[str],
        names: Sequence[str] = (),
        parameters: Mapping[str, float] | None = None,
    ) -> "HamiltonianSystem":
        hs = [ex.parse(h) for h in hamiltonians]
        if parameters:
            hs = [ex.substitute(h, dict(parameters)) for h in hs]
        return cls(m, tuple(hs), tuple(names))

    @property
    def n(self) -> int:
        return len(self.hamiltonians)

    @property
    def variables(self) -> list[str]:
        ps, qs = phase_variables(self.m)
        return ps + qs

    def gradient_expressions(self) -> tuple[tuple[tuple[Expression, ...], ...], tuple[tuple[Expression, ...], ...]]:
        """Cached (dH_i/dp_mu, dH_i/dq^mu) expression tables, indexed [i][mu]."""
        return self._dHdp, self._dHdq

    @cached_property
    def _compiled_values(self):
        return ex.compile_expressions(self.hamiltonians, self.variables)

    @cached_property
    def _compiled_gradients(self):
        flat = [e for row in self._dHdp for e in row] + [e for row in self._dHdq for e in row]
        return ex.compile_expressions(flat, self.variables)

    @cached_property
    def _compiled_hessian_pp(self):
        ps, _ = phase_variables(self.m)
        flat = [ex.differentiate(g, v) for row in self._dHdp for g in row for v in ps]
        return ex.compile_expressions(flat, self.variables)

    def _args(self, x: PhasePoint) -> tuple[float, ...]:
        if x.m != self.m:
            raise ValueError(f"phase point has m={x.m}, system has m={self.m}")
        return (*x.p.tolist(), *x.q.tolist())

    def values(self, x: PhasePoint) -> np.ndarray:
        """H_i(x) for all i."""
        return np.array(self._compiled_values(*self._args(x)))

    def gradients(self, x: PhasePoint) -> tuple[np.ndarray, np.ndarray]:
        """Arrays dH/dp and dH/dq of shape (n, m) at ``x``."""
        flat = np.array(self._compiled_gradients(*self._args(x)))
        k = self.n * self.m
        return flat[:k].reshape(self.n, self.m), flat[k:].reshape(self.n, self.m)

    def hessians_pp(self, x: PhasePoint) -> np.ndarray:
        """d^2 H_i / dp_mu dp_nu as an array of shape (n, m, m)."""
        return np.array(self._compiled_hessian_pp(*self._args(x))).reshape(self.n, self.m, self.m)

    def vector_field(self, x: PhasePoint, weights) -> tuple[np.ndarray, np.ndarray]:
        """(dq, dp) of the Hamiltonian flow of sum_i weights_i H_i."""
        w = np.asarray(weights, dtype=float)
        dHdp, dHdq = self.gradients(x)
        return w @ dHdp, -(w @ dHdq)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "hamiltonians": [ex.to_string(h) for h in self.hamiltonians],
            "names": list(self.names),
            "parameters": {},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "HamiltonianSystem":
        sys = cls.from_strings(
            int(data["m"]), data["hamiltonians"], data.get("names", ()), data.get("parameters")
        )
        if "n" in data and int(data["n"]) != sys.n:
            raise ValueError(f"n={data['n']} but {sys.n} Hamiltonians were given")
        return sys


def _phase_dim(*exprs: Expression) -> int:
    m = 0
    for e in exprs:
        for v in ex.free_variables(e):
            if v[:1] in "pq" and v[1:].isdigit():
                m = max(m, int(v[1:]))
    return m


def bracket_expression(F: Expression, G: Expression, m: int | None = None) -> Expression:
    """Symbolic {F, G}."""
    if m is None:
        m = _phase_dim(F, G)
    result: Expression = ex.Const(0.0)
    for pv, qv in zip(*phase_variables(m)):
        term = ex.sub(
            ex.mul(ex.differentiate(F, pv), ex.differentiate(G, qv)),
            ex.mul(ex.differentiate(G, pv), ex.differentiate(F, qv)),
        )
        result = ex.add(result, term)
    return result


def poisson_bracket(F: Expression, G: Expression, x: PhasePoint) -> float:
    b = x.binding()
    total = 0.0
    for pv, qv in zip(*phase_variables(x.m)):
        total += (
            ex.evaluate(ex.differentiate(F, pv), b) * ex.evaluate(ex.differentiate(G, qv), b)
            - ex.evaluate(ex.differentiate(G, pv), b) * ex.evaluate(ex.differentiate(F, qv), b)
        )
    return total


def involutivity_matrix(sys: HamiltonianSystem, x: PhasePoint) -> np.ndarray:
    """Matrix of brackets {H_i, H_j}(x)."""
    dHdp, dHdq = sys.gradients(x)
    return dHdp @ dHdq.T - dHdq @ dHdp.T


def one_form_eval(sys: HamiltonianSystem, x: PhasePoint, v: TangentData) -> float:
    """Contract p dq - H_i dt^i with the tangent vector ``v`` at ``x``."""
    if v.dq.size != sys.m or v.dt.size != sys.n:
        raise ValueError("tangent data does not match the system dimensions")
    return float(x.p @ v.dq - sys.values(x) @ v.dt)


def omega_rank_check(pfuncs: Sequence[Expression], q0, rtol: float = 1e-10) -> int:
    """Numerical rank of the 2-form d(p_mu(q)) ^ dq^mu at ``q0``.

    Builds A[nu, mu] = dp_mu/dq^nu - dp_nu/dq^mu and counts singular values
    above ``rtol`` times the largest.
    """
    pfuncs = [ex.parse(f) if isinstance(f, str) else f for f in pfuncs]
    q0 = np.asarray(q0, dtype=float).reshape(-1)
    m = len(pfuncs)
    if q0.size != m:
        raise ValueError(f"{m} momentum functions but q0 has length {q0.size}")
    qs = [f"q{i}" for i in range(1, m + 1)]
    for f in pfuncs:
        if any(v.startswith("p") for v in ex.free_variables(f)):
            raise ValueError("momentum functions may depend on q only")
    b = dict(zip(qs, q0.tolist()))
    jac = np.array([[ex.evaluate(ex.differentiate(pfuncs[mu], qs[nu]), b) for mu in range(m)] for nu in range(m)])
    A = jac - jac.T
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))
