"""Multi-time Hamiltonian flows along piecewise-linear curves.

A curve s -> t(s), s in [0, 1], is traced through multi-time and the phase
point is transported by

    dq/ds =  (dt^i/ds) dH_i/dp,     dp/ds = -(dt^i/ds) dH_i/dq

with classical fixed-step RK4.  The action of the phase-space one-form
p dq - H_i dt^i is then integrated with composite Simpson along the samples.
For involutive systems both the endpoint and the action are independent of
the curve between fixed endpoints; :func:`closure_check` measures this.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson

from .expr import ExpressionError
from .phase import HamiltonianSystem, PhasePoint

__all__ = [
    "MultiTimeCurve",
    "Segment",
    "Trajectory",
    "IntegrationError",
    "ClosureReport",
    "integrate_curve",
    "ve3_residual",
    "action",
    "closure_check",
    "flow_commutation",
    "rk4_segments",
]


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MultiTimeCurve:
    """Piecewise-linear path through its nodes.

    Every segment gets an equal share of the parameter interval [0, 1].
    """

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        if nodes.ndim != 2 or nodes.shape[0] < 2:
            raise ValueError("a curve needs at least two nodes")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("curve nodes must be finite")
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)

    @property
    def n(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_segments(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def start(self) -> np.ndarray:
        return self.nodes[0]

    @property
    def end(self) -> np.ndarray:
        return self.nodes[-1]

    def velocity(self, segment: int) -> np.ndarray:
        """dt/ds on ``segment``."""
        return self.n_segments * (self.nodes[segment + 1] - self.nodes[segment])

    def __call__(self, s: float) -> np.ndarray:
        k = self.n_segments
        j = min(int(np.floor(s * k)), k - 1)
        frac = s * k - j
        return self.nodes[j] + frac * (self.nodes[j + 1] - self.nodes[j])

    def reversed(self) -> "MultiTimeCurve":
        return MultiTimeCurve(self.nodes[::-1])

    def then(self, other: "MultiTimeCurve") -> "MultiTimeCurve":
        if not np.array_equal(self.end, other.start):
            raise ValueError("curves do not join")
        return MultiTimeCurve(np.vstack([self.nodes, other.nodes[1:]]))

    @classmethod
    def parse(cls, text: str) -> "MultiTimeCurve":
        """Parse ``"0,0;1,0;1,1"`` style node lists."""
        rows = [r for r in text.replace(" ", "").split(";") if r]
        return cls(np.array([[float(v) for v in r.split(",")] for r in rows]))

    def format(self) -> str:
        return ";".join(",".join(f"{v:g}" for v in row) for row in self.nodes)

    @classmethod
    def straight(cls, end, start=None) -> "MultiTimeCurve":
        end = np.asarray(end, dtype=float)
        start = np.zeros_like(end) if start is None else np.asarray(start, dtype=float)
        return cls(np.vstack([start, end]))

    @classmethod
    def staircase(cls, end, axes: Sequence[int], stairs: int = 1) -> "MultiTimeCurve":
        """Move along ``axes`` in turn, ``stairs`` times, reaching ``end``.

        ``axes`` are 0-based coordinate indices; ``stairs=1`` gives an L-path.
        """
        end = np.asarray(end, dtype=float)
        nodes = [np.zeros_like(end)]
        for _ in range(stairs):
            for a in axes:
                nxt = nodes[-1].copy()
                nxt[a] += end[a] / stairs
                nodes.append(nxt)
        nodes[-1] = end.copy()
        return cls(np.array(nodes))


@dataclass(frozen=True)
class Segment:
    start: int  # sample index
    stop: int  # inclusive sample index
    velocity: np.ndarray  # dt/ds (or dtau/ds) on this segment


@dataclass(frozen=True)
class Trajectory:
    """Samples of an integrated curve.  Arrays are indexed by sample."""

    s: np.ndarray
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    segments: tuple[Segment, ...]
    extras: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return self.s.size - 1

    def point(self, k: int) -> PhasePoint:
        return PhasePoint(p=self.p[k], q=self.q[k])

    @property
    def initial(self) -> PhasePoint:
        return self.point(0)

    @property
    def final(self) -> PhasePoint:
        return self.point(-1)


def _allocate_steps(N: int, k: int) -> list[int]:
    if N < k:
        raise ValueError(f"need at least one step per segment: N={N}, segments={k}")
    base, extra = divmod(N, k)
    return [base + (1 if j < extra else 0) for j in range(k)]


def rk4_segments(
    rhs: Callable[[np.ndarray, int, float], np.ndarray],
    y0: np.ndarray,
    n_segments: int,
    N: int,
) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int]]]:
    """Classical RK4 over [0, 1] split into equal segments.

    ``rhs(y, segment, s)`` gives dy/ds.  Step boundaries always coincide with
    segment boundaries so kinks of the curve never fall inside a step.
    Returns (s, y, index ranges per segment).
    """
    counts = _allocate_steps(N, n_segments)
    s_all = np.empty(N + 1)
    y_all = np.empty((N + 1, y0.size))
    y = np.array(y0, dtype=float)
    s_all[0], y_all[0] = 0.0, y
    idx = 0
    ranges = []
    for seg, count in enumerate(counts):
        s0 = seg / n_segments
        h = (1.0 / n_segments) / count
        start = idx
        for step in range(count):
            s = s0 + step * h
            try:
                k1 = rhs(y, seg, s)
                k2 = rhs(y + 0.5 * h * k1, seg, s + 0.5 * h)
                k3 = rhs(y + 0.5 * h * k2, seg, s + 0.5 * h)
                k4 = rhs(y + h * k3, seg, s + h)
            except (ExpressionError, ArithmeticError) as exc:
                raise IntegrationError(f"evaluation failed at s={s:.6g}: {exc}") from exc
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(y)):
                raise IntegrationError(f"non-finite state at s={s + h:.6g}")
            idx += 1
            s_all[idx] = s0 + (step + 1) * h
            y_all[idx] = y
        s_all[idx] = (seg + 1) / n_segments
        ranges.append((start, idx))
    return s_all, y_all, ranges


def _flow_rhs(sys: HamiltonianSystem, velocities: Sequence[np.ndarray]):
    m, n = sys.m, sys.n
    grad = sys._compiled_gradients

    def rhs(y: np.ndarray, seg: int, s: float) -> np.ndarray:
        q, p = y[:m], y[m:]
        flat = np.array(grad(*p.tolist(), *q.tolist()))
        w = velocities[seg]
        dHdp = flat[: n * m].reshape(n, m)
        dHdq = flat[n * m:].reshape(n, m)
        return np.concatenate([w @ dHdp, -(w @ dHdq)])

    return rhs


def integrate_curve(sys: HamiltonianSystem, curve: MultiTimeCurve, x0: PhasePoint, N: int) -> Trajectory:
    """Transport ``x0`` along ``curve`` with N uniform RK4 steps in s."""
    if curve.n != sys.n:
        raise ValueError(f"curve lives in R^{curve.n} but the system has n={sys.n}")
    if N < 1:
        raise ValueError("N must be >= 1")
    if x0.m != sys.m:
        raise ValueError("initial point has the wrong dimension")
    velocities = [curve.velocity(j) for j in range(curve.n_segments)]
    s, y, ranges = rk4_segments(_flow_rhs(sys, velocities), x0.as_array(), curve.n_segments, N)
    t = np.array([curve(si) for si in s])
    segments = tuple(Segment(a, b, velocities[j]) for j, (a, b) in enumerate(ranges))
    return Trajectory(s=s, t=t, q=y[:, : sys.m], p=y[:, sys.m:], segments=segments)


def _segment_derivatives(sys: HamiltonianSystem, traj: Trajectory, seg: Segment):
    """Per-sample (dq/ds, dp/ds, dH/dp, dH/dq, H) on one segment."""
    out = []
    for k in range(seg.start, seg.stop + 1):
        x = traj.point(k)
        dHdp, dHdq = sys.gradients(x)
        dq = seg.velocity @ dHdp
        dp = -(seg.velocity @ dHdq)
        out.append((dq, dp, dHdp, dHdq, sys.values(x)))
    return out


def ve3_residual(sys: HamiltonianSystem, traj: Trajectory) -> float:
    """Largest |dq/ds . dH_i/dq + dp/ds . dH_i/dp| over samples and i.

    Uses the analytic right-hand side, so on-shell it equals a
    velocity-weighted bracket {H_j, H_i} rather than integration error.
    """
    worst = 0.0
    for seg in traj.segments:
        for dq, dp, dHdp, dHdq, _ in _segment_derivatives(sys, traj, seg):
            worst = max(worst, float(np.max(np.abs(dHdq @ dq + dHdp @ dp))))
    return worst


def action(sys: HamiltonianSystem, traj: Trajectory) -> float:
    """Integral of p dq - H_i dt^i along the trajectory (Simpson per segment)."""
    total = 0.0
    for seg in traj.segments:
        rows = _segment_derivatives(sys, traj, seg)
        p = traj.p[seg.start: seg.stop + 1]
        integrand = np.array([pk @ dq - H @ seg.velocity for pk, (dq, _, _, _, H) in zip(p, rows)])
        total += float(simpson(integrand, x=traj.s[seg.start: seg.stop + 1]))
    return total


@dataclass(frozen=True)
class ClosureReport:
    curveA: str
    curveB: str
    action_gap: float
    endpoint_gap: float
    N: int
    action_A: float = float("nan")
    action_B: float = float("nan")

    def to_record(self) -> dict:
        return {
            "curveA": self.curveA,
            "curveB": self.curveB,
            "action_gap": self.action_gap,
            "endpoint_gap": self.endpoint_gap,
            "N": self.N,
        }


def _gap(a: PhasePoint, b: PhasePoint) -> float:
    return float(np.max(np.abs(a.as_array() - b.as_array())))


def closure_check(
    sys: HamiltonianSystem,
    x0: PhasePoint,
    curveA: MultiTimeCurve,
    curveB: MultiTimeCurve,
    N: int,
) -> ClosureReport:
    """Compare action and endpoint of two curves with common endpoints.

    Gaps are max-norms; both vanish (up to RK4 error) for involutive systems.
    """
    if not (np.allclose(curveA.start, curveB.start, rtol=0, atol=1e-14)
            and np.allclose(curveA.end, curveB.end, rtol=0, atol=1e-14)):
        raise ValueError("curves must share their endpoints")
    ta = integrate_curve(sys, curveA, x0, N)
    tb = integrate_curve(sys, curveB, x0, N)
    sa, sb = action(sys, ta), action(sys, tb)
    return ClosureReport(
        curveA=curveA.format(),
        curveB=curveB.format(),
        action_gap=abs(sa - sb),
        endpoint_gap=_gap(ta.final, tb.final),
        N=N,
        action_A=sa,
        action_B=sb,
    )


def _flow_along_axis(sys: HamiltonianSystem, i: int, time: float, x: PhasePoint, N: int) -> PhasePoint:
    end = np.zeros(sys.n)
    end[i - 1] = time
    return integrate_curve(sys, MultiTimeCurve.straight(end), x, N).final


def flow_commutation(
    sys: HamiltonianSystem, i: int, j: int, a: float, b: float, x0: PhasePoint, N: int
) -> float:
    """Max-norm distance between flowing i-then-j and j-then-i.

    ``i`` and ``j`` are 1-based Hamiltonian indices.
    """
    for k in (i, j):
        if not 1 <= k <= sys.n:
            raise ValueError(f"Hamiltonian index {k} outside 1..{sys.n}")
    ij = _flow_along_axis(sys, j, b, _flow_along_axis(sys, i, a, x0, N), N)
    ji = _flow_along_axis(sys, i, a, _flow_along_axis(sys, j, b, x0, N), N)
    return _gap(ij, ji)
