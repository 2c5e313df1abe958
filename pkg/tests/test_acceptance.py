"""Acceptance suite: one verdict line per criterion in the terminal summary.

Criterion 7 carries a second, literal form of the pq invariant that only
holds on tau = 0; it is recorded as 7-literal and marked as a strict xfail.
"""
import numpy as np
import pytest

from multiform import expr as ex
from multiform.flows import MultiTimeCurve, action, closure_check, integrate_curve
from multiform.legendre import (
    VelocityField,
    alpha_independence_check,
    lagrangian_coefficients,
    on_shell_velocities,
    roundtrip_check,
    solve_momenta,
)
from multiform.liegroup import (
    integrate_group_flow,
    jacobi_check,
    matrix_exp,
    mc_compatibility_check,
    moment_map_check,
    theta_coefficients,
)
from multiform.models import (
    MODELS,
    conformal_model,
    get_model,
    harmonic_oscillator,
    ho_momentum,
    lorentz_generators,
    lorentz_model,
    shift_pair,
    su2_oscillator,
    toda_chain,
    toda_lagrangians_beta0,
    toda_momentum,
)
from multiform.phase import PhasePoint, involutivity_matrix

SEED = 42


def _slope(Ns, gaps):
    return -np.polyfit(np.log(Ns), np.log(gaps), 1)[0]


# 1 -------------------------------------------------------------------------


def test_criterion_1_involutivity(verdict):
    rng = np.random.default_rng(SEED)
    worst_toda = 0.0
    for m in (3, 4, 5):
        b = toda_chain(m)
        worst_toda = max(worst_toda, max(abs(involutivity_matrix(b.system, x)[0, 1]) for x in b.sample_points(rng, 100)))
    b = harmonic_oscillator("ho-su2")
    worst_ho = max(np.max(np.abs(involutivity_matrix(b.system, x)[0])) for x in b.sample_points(rng, 100))
    ok = verdict("1", worst_toda < 1e-9 and worst_ho < 1e-11, f"toda {worst_toda:.2e} < 1e-9, oscillator {worst_ho:.2e} < 1e-11")
    assert ok


# 2 -------------------------------------------------------------------------


def test_criterion_2_moment_map(verdict):
    rng = np.random.default_rng(SEED)
    worst = {}
    for name in ("ho-su2", "su2", "conformal", "lorentz"):
        b = get_model(name)
        worst[name] = max(moment_map_check(b.system, b.algebra, x) for x in b.sample_points(rng, 100))
    ok = verdict("2", max(worst.values()) < 1e-10, ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + " < 1e-10")
    assert ok


# 3 -------------------------------------------------------------------------


def test_criterion_3_closure(verdict):
    rng = np.random.default_rng(SEED)
    sys = toda_chain(3).system
    x0 = PhasePoint(p=rng.uniform(-1, 1, 3), q=rng.uniform(-1, 1, 3))
    A = MultiTimeCurve.staircase([1.0, 1.0], [0, 1], stairs=2)
    B = MultiTimeCurve.staircase([1.0, 1.0], [1, 0], stairs=2)
    rep = closure_check(sys, x0, A, B, 4000)
    Ns = np.array([32, 64, 128, 256, 512])
    reps = [closure_check(sys, x0, A, B, int(N)) for N in Ns]
    s_act = _slope(Ns, [r.action_gap for r in reps])
    s_end = _slope(Ns, [r.endpoint_gap for r in reps])

    # control: H1 = p1, H2 = q1 translate q and p; both orders reach
    # (q0 + 1, p0 - 1), so the closed-form endpoint gap is zero
    ctrl = shift_pair().system
    xc = PhasePoint(p=[0.3], q=[-0.7])
    L1 = MultiTimeCurve.staircase([1.0, 1.0], [0, 1])
    L2 = MultiTimeCurve.staircase([1.0, 1.0], [1, 0])
    ta, tb = integrate_curve(ctrl, L1, xc, 100), integrate_curve(ctrl, L2, xc, 100)
    closed_a = np.array([xc.q[0] + 1.0, xc.p[0] - 1.0])
    end_err = max(abs(ta.final.q[0] - closed_a[0]), abs(ta.final.p[0] - closed_a[1]),
                  abs(tb.final.q[0] - closed_a[0]), abs(tb.final.p[0] - closed_a[1]))
    ctrl_gap = abs(action(ctrl, ta) - action(ctrl, tb))

    checks = [
        rep.action_gap < 1e-6,
        rep.endpoint_gap < 1e-6,
        abs(s_act - 4) <= 0.5,
        abs(s_end - 4) <= 0.5,
        end_err < 1e-6,
        abs(ctrl_gap - 1.0) < 1e-6,
    ]
    ok = verdict(
        "3",
        all(checks),
        f"gaps {rep.action_gap:.1e}/{rep.endpoint_gap:.1e} at N=4000, slopes {s_act:.2f}/{s_end:.2f}, "
        f"control endpoint error {end_err:.1e}, control action gap {ctrl_gap:.6f}",
    )
    assert ok


# 4 -------------------------------------------------------------------------


def test_criterion_4_inverse_legendre(verdict):
    rng = np.random.default_rng(SEED)
    ho = harmonic_oscillator("ho").system
    worst_ho = 0.0
    for beta in (0.0, 0.3, 1.0):
        for _ in range(50):
            q, v1, v2 = rng.uniform(-2, 2, (3, 2))
            p = solve_momenta(ho, [1.0, beta], VelocityField(q=q, qdot=np.column_stack([v1, v2])))
            worst_ho = max(worst_ho, np.max(np.abs(p - ho_momentum(q, v1, v2, beta))))

    toda = toda_chain(3).system
    worst_toda = 0.0
    for _ in range(50):
        q = rng.uniform(-0.5, 0.5, 3)
        v1, v2 = rng.uniform(-1, 1, (2, 3))
        p = solve_momenta(toda, [1.0, 0.1], VelocityField(q=q, qdot=np.column_stack([v1, v2])))
        worst_toda = max(worst_toda, np.max(np.abs(p - toda_momentum(q, v1, v2, 0.1, +1.0))))

    worst_alpha = worst_rt = 0.0
    for sys_, box in ((ho, 2.0), (toda, 1.0)):
        for _ in range(20):
            x = PhasePoint(p=rng.uniform(-box, box, sys_.m), q=rng.uniform(-box, box, sys_.m))
            worst_alpha = max(worst_alpha, alpha_independence_check(sys_, [1.0, 0.3], [1.0, -0.2], x))
            worst_rt = max(worst_rt, roundtrip_check(sys_, [1.0, 0.1], x)[1])

    ok = verdict(
        "4",
        worst_ho < 1e-12 and worst_toda < 1e-10 and worst_alpha < 1e-10 and worst_rt < 1e-6,
        f"oscillator {worst_ho:.1e} < 1e-12, toda {worst_toda:.1e} < 1e-10, "
        f"alpha gap {worst_alpha:.1e} < 1e-10, round trip {worst_rt:.1e} < 1e-6",
    )
    assert ok


# 5 -------------------------------------------------------------------------


def test_criterion_5_toda_lagrangian(verdict):
    rng = np.random.default_rng(SEED)
    sys = toda_chain(3).system
    worst = 0.0
    for _ in range(50):
        q, v1, v2 = rng.uniform(-1, 1, (3, 3))
        L = lagrangian_coefficients(sys, [1.0, 0.0], VelocityField(q=q, qdot=np.column_stack([v1, v2])))
        ref = toda_lagrangians_beta0(q, v1, v2)
        worst = max(worst, np.max(np.abs(L - ref) / np.maximum(1.0, np.abs(ref))))
    ok = verdict("5", worst < 1e-12, f"{worst:.1e} < 1e-12")
    assert ok


# 6 -------------------------------------------------------------------------


def test_criterion_6_maurer_cartan(verdict):
    rng = np.random.default_rng(SEED)
    chart = conformal_model().chart
    worst = 0.0
    for _ in range(50):
        t, tau = rng.uniform(-2, 2, 2)
        worst = max(worst, np.max(np.abs(theta_coefficients(chart, [t, tau]) - [[1.0, -t], [0.0, 1.0]])))
    su2 = su2_oscillator().chart
    mc = max(
        max(mc_compatibility_check(chart, rng.uniform(-1, 1, 2)) for _ in range(10)),
        max(mc_compatibility_check(su2, rng.uniform(-1, 1, 3)) for _ in range(10)),
    )
    ok = verdict("6", worst < 1e-12 and mc < 1e-7, f"theta {worst:.1e} < 1e-12, MC residual {mc:.1e} < 1e-7")
    assert ok


# 7 -------------------------------------------------------------------------


def _conformal_paths():
    rng = np.random.default_rng(SEED)
    b = conformal_model(1.3, 0.7)
    out = []
    for _ in range(10):
        nodes = np.vstack([[0.0, 0.0], rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)])
        x0 = b.sample_points(rng, 1)[0]
        traj = integrate_group_flow(b.system, b.algebra, b.chart, MultiTimeCurve(nodes), x0, 400)
        tau = traj.extras["tau"]
        # H0 evaluated directly, not through the Hamiltonian machinery
        H = traj.p[:, 0] ** 2 / (2 * 1.3) + 0.7 / traj.q[:, 0] ** 2
        pq = traj.p[:, 0] * traj.q[:, 0]
        out.append((tau[:, 0], tau[:, 1], H, pq))
    return out


def test_criterion_7_conformal_invariants(verdict):
    dh = dpq = 0.0
    for t, tau, H, pq in _conformal_paths():
        c1, c2 = H[0], pq[0] / 2.0
        dh = max(dh, np.max(np.abs(H - c1 * np.exp(-tau))))
        dpq = max(dpq, np.max(np.abs(pq - 2.0 * (c2 + c1 * t * np.exp(-tau)))))
    ok = verdict("7", dh < 1e-6 and dpq < 1e-6, f"H0 drift {dh:.1e}, pq - 2(c2 + c1 t e^-tau) drift {dpq:.1e} < 1e-6")
    assert ok


@pytest.mark.xfail(strict=True, reason="pq = 2(c2 + c1 t) drops the e^-tau factor and fails once tau != 0")
def test_criterion_7_literal_pq_form(verdict):
    drift = 0.0
    for t, tau, H, pq in _conformal_paths():
        drift = max(drift, np.max(np.abs(pq - 2.0 * (pq[0] / 2.0 + H[0] * t))))
    ok = verdict("7-literal", drift < 1e-6, f"pq - 2(c2 + c1 t) drift {drift:.2f} (expected failure)")
    assert ok


# 8 -------------------------------------------------------------------------


def test_criterion_8_lorentz(verdict):
    rng = np.random.default_rng(SEED)
    b = lorentz_model()
    M = lorentz_generators()
    eta = np.diag([-1.0, 1.0, 1.0, 1.0])
    wq = wp = 0.0
    for _ in range(20):
        t = rng.normal(size=6)
        t *= rng.uniform(0.1, 1.0) / np.linalg.norm(t)
        x0 = b.sample_points(rng, 1)[0]
        traj = integrate_group_flow(b.system, b.algebra, b.chart, MultiTimeCurve.straight(t), x0, 200)
        Lam = matrix_exp(-np.tensordot(t, M, axes=1))
        wq = max(wq, np.max(np.abs(traj.final.q - Lam @ x0.q)))
        wp = max(wp, np.max(np.abs(traj.final.p - eta @ Lam @ eta @ x0.p)))
    ok = verdict("8", wq < 1e-8 and wp < 1e-8, f"q {wq:.1e}, p {wp:.1e} < 1e-8")
    assert ok


# 9 -------------------------------------------------------------------------


def test_criterion_9_calculus(verdict):
    rng = np.random.default_rng(SEED)
    h = 1e-6
    worst = 0.0
    for name in MODELS:
        b = get_model(name)
        sys = b.system
        names = list(sys.variables)
        for x in b.sample_points(rng, 20):
            env = dict(zip(names, np.concatenate([x.p, x.q])))
            for H in sys.hamiltonians:
                for v in names:
                    d = ex.evaluate(ex.differentiate(H, v), env)
                    up, dn = dict(env), dict(env)
                    up[v] += h
                    dn[v] -= h
                    fd = (ex.evaluate(H, up) - ex.evaluate(H, dn)) / (2 * h)
                    worst = max(worst, abs(d - fd) / max(1.0, abs(d)))
    jac = max(jacobi_check(get_model(n).algebra) for n in MODELS if get_model(n).algebra is not None)
    ok = verdict("9", worst < 1e-6 and jac < 1e-12, f"derivative rel error {worst:.1e} < 1e-6, Jacobi {jac:.1e} < 1e-12")
    assert ok
