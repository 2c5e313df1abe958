import math

import numpy as np
import pytest
import sympy as sp

from multiform import expr as ex
from multiform.flows import MultiTimeCurve, integrate_curve
from multiform.io import bundle_from_dict
from multiform.liegroup import LieAlgebraData, integrate_group_flow, jacobi_check, matrix_exp, moment_map_check
from multiform.models import (
    MODELS,
    conformal_model,
    get_model,
    harmonic_oscillator,
    ho_lagrangians,
    lorentz_generators,
    lorentz_model,
    lorentz_table_constants,
    matrix_rep_hamiltonians,
    su2_oscillator,
    toda_chain,
    toda_lagrangians_beta0,
)
from multiform.phase import PhasePoint, involutivity_matrix

# frozen from a 40-digit mpmath evaluation of exp(-t.M) for t below
LORENTZ_T = [0.3, -0.2, 0.1, 0.4, -0.25, 0.15]
LORENTZ_Q0 = [0.5, -1.0, 0.25, 0.75]
LORENTZ_P0 = [1.0, 0.2, -0.3, 0.6]
LORENTZ_Q = [0.7256391608183744177, -0.9905639910084728678, -0.1569379553895236360, 0.9464172703351923847]
LORENTZ_P = [1.283870295112226781, 0.8305040163573458769, -0.4091909639662653732, 0.5302346353212246932]
TODA_L_BETA0 = [-3.0742810403280923448, -1.2409876967374775597]


def _sympy_bracket(F, G, m):
    ps = sp.symbols(f"p1:{m + 1}")
    qs = sp.symbols(f"q1:{m + 1}")
    return sp.expand(sum(sp.diff(F, p) * sp.diff(G, q) - sp.diff(G, p) * sp.diff(F, q) for p, q in zip(ps, qs)))


def test_registry_builds_everything():
    for name in MODELS:
        b = get_model(name)
        if b.algebra is not None:
            assert jacobi_check(b.algebra) < 1e-12
    with pytest.raises(KeyError):
        get_model("nope")


def test_oscillator_point_values():
    b = harmonic_oscillator("ho-su2")
    x = PhasePoint(p=[1.0, 0.0], q=[0.0, 1.0])
    assert b.system.values(x).tolist() == [1.0, 0.0, 1.0, 0.0]
    assert b.reference_data[0].func(x) == 0.0


def test_casimir_and_symmetry(rng):
    b = harmonic_oscillator("ho-su2")
    for x in b.sample_points(rng, 100):
        assert abs(b.reference_data[0].func(x)) < 1e-12
        assert np.max(np.abs(involutivity_matrix(b.system, x)[0])) < 1e-11


def test_su2_table_against_sympy():
    # an independent symbolic oracle fixes the sign of the su(2) table
    p1, p2, q1, q2 = sp.symbols("p1 p2 q1 q2")
    J = [(p1**2 + q1**2) / 2 - (p2**2 + q2**2) / 2, p1 * q2 - p2 * q1, p1 * p2 + q1 * q2]
    c = su2_oscillator().algebra.c
    for i in range(3):
        for j in range(3):
            rhs = sum(sp.Float(c[i, j, k]) * J[k] for k in range(3))
            assert sp.simplify(_sympy_bracket(J[i], J[j], 2) - rhs) == 0


def test_ho_period_return():
    b = harmonic_oscillator("ho")
    x0 = PhasePoint(p=[0.3, -0.8], q=[1.1, 0.4])
    traj = integrate_curve(b.system, MultiTimeCurve.straight([2 * math.pi, 0.0]), x0, 2000)
    assert np.max(np.abs(traj.final.as_array() - x0.as_array())) < 1e-7
    # the H-flow is a simultaneous rotation in both (p, q) planes
    mid = traj.point(500)
    t = traj.t[500, 0]
    for mu in range(2):
        assert mid.q[mu] == pytest.approx(x0.q[mu] * math.cos(t) + x0.p[mu] * math.sin(t), abs=1e-10)


def test_ho_lagrangians_at_beta0():
    q, v1, v2 = np.array([0.3, -0.7]), np.array([0.5, 0.2]), np.array([-0.4, 0.9])
    L1, L2 = ho_lagrangians(q, v1, v2, 0.0)
    assert L1 == pytest.approx(0.5 * (v1 @ v1 - q @ q))
    assert L2 == pytest.approx(v1 @ (v2 - np.array([q[1], -q[0]])))


@pytest.mark.parametrize("m", [3, 4, 5])
def test_toda_symbolic_involutivity(m):
    b = toda_chain(m)
    syms = {f"p{i}": sp.Symbol(f"p{i}") for i in range(1, m + 1)}
    syms.update({f"q{i}": sp.Symbol(f"q{i}") for i in range(1, m + 1)})
    H1, H2 = (sp.sympify(ex.to_string(h).replace("^", "**"), locals=syms) for h in b.system.hamiltonians)
    assert sp.simplify(_sympy_bracket(H1, H2, m)) == 0


def test_toda_two_sites_wraps():
    b = toda_chain(2)
    x = PhasePoint(p=[0.3, -0.2], q=[0.1, 0.5])
    H1 = b.system.values(x)[0]
    assert H1 == pytest.approx(0.5 * (0.09 + 0.04) + math.exp(0.1 - 0.5) + math.exp(0.5 - 0.1))
    assert np.max(np.abs(involutivity_matrix(b.system, x))) < 1e-12
    with pytest.raises(ValueError):
        toda_chain(1)


def test_toda_beta0_lagrangian_frozen():
    L = toda_lagrangians_beta0([0.1, -0.3, 0.25], [0.5, -0.2, 0.3], [0.2, 0.4, -0.5])
    assert np.max(np.abs(L - TODA_L_BETA0)) < 1e-14


def test_conformal_bracket(rng):
    b = conformal_model(1.7, 0.4)
    for x in b.sample_points(rng, 100):
        B = involutivity_matrix(b.system, x)
        H0 = b.system.values(x)[0]
        assert abs(B[0, 1] - H0) < 1e-11 * max(1.0, abs(H0))
    with pytest.raises(ValueError):
        conformal_model(-1.0, 1.0)


def test_matrix_rep_one_dimensional():
    alg = LieAlgebraData(np.zeros((1, 1, 1)), matrix_basis=[[[1.0]]])
    sys = matrix_rep_hamiltonians([[[1.0]]], alg)
    assert ex.to_string(sys.hamiltonians[0]) == "-(p1 * q1)"
    assert involutivity_matrix(sys, PhasePoint(p=[0.4], q=[2.0])).tolist() == [[0.0]]


def test_matrix_rep_su2(rng):
    alg = su2_oscillator().algebra
    sys = matrix_rep_hamiltonians(alg.matrix_basis, alg)
    for _ in range(100):
        x = PhasePoint(p=rng.uniform(-2, 2, 3), q=rng.uniform(-2, 2, 3))
        assert moment_map_check(sys, alg, x) < 1e-12


def test_matrix_rep_mismatch():
    alg = su2_oscillator().algebra
    with pytest.raises(ValueError):
        matrix_rep_hamiltonians(-alg.matrix_basis, alg)


def test_lorentz_generators():
    M = lorentz_generators()
    assert np.array_equal(M[0] @ M[3] - M[3] @ M[0], M[1])  # [M01, M12] = M02
    assert np.max(np.abs(lorentz_model().algebra.c - lorentz_table_constants())) < 1e-12


def test_lorentz_bracket_table(rng):
    b = lorentz_model()
    c = lorentz_table_constants()
    for x in b.sample_points(rng, 100):
        B = involutivity_matrix(b.system, x)
        assert np.max(np.abs(B - np.einsum("ijk,k->ij", c, b.system.values(x)))) < 1e-10


def test_lorentz_frozen_action():
    b = lorentz_model()
    x0 = PhasePoint(p=LORENTZ_P0, q=LORENTZ_Q0)
    traj = integrate_group_flow(b.system, b.algebra, b.chart, MultiTimeCurve.straight(LORENTZ_T), x0, 200)
    assert np.max(np.abs(traj.final.q - LORENTZ_Q)) < 1e-8
    assert np.max(np.abs(traj.final.p - LORENTZ_P)) < 1e-8


def test_lorentz_boost():
    b = lorentz_model()
    M = lorentz_generators()
    x0 = PhasePoint(p=[0.2, 0.1, -0.4, 0.3], q=[1.0, 0.5, 0.0, -0.2])
    t = np.zeros(6)
    t[0] = 0.8
    traj = integrate_group_flow(b.system, b.algebra, b.chart, MultiTimeCurve.straight(t), x0, 200)
    Lam = matrix_exp(-0.8 * M[0])
    assert np.max(np.abs(traj.final.q - Lam @ x0.q)) < 1e-8
    eta = np.diag([-1.0, 1, 1, 1])
    assert np.max(np.abs(traj.final.p - eta @ Lam @ eta @ x0.p)) < 1e-8


def test_lorentz_product_chart_reaches_inverse_element(rng):
    b = lorentz_model("product")
    tau = rng.uniform(-0.5, 0.5, 6)
    x0 = b.sample_points(rng, 1)[0]
    traj = integrate_group_flow(b.system, b.algebra, b.chart, MultiTimeCurve.straight(tau), x0, 300)
    g = b.chart.element(tau)
    assert np.max(np.abs(traj.final.q - np.linalg.solve(g, x0.q))) < 1e-8


def test_definition_roundtrip(rng):
    for name in ("toda", "conformal", "ho-su2", "lorentz"):
        b = get_model(name)
        back = bundle_from_dict(b.to_dict())
        x = b.sample_points(rng, 1)[0]
        assert np.allclose(back.system.values(x), b.system.values(x), rtol=1e-15)
        if b.algebra is not None:
            assert np.array_equal(back.algebra.c, b.algebra.c)
            assert back.chart.kind == b.chart.kind and back.chart.order == b.chart.order


def test_bundle_rejects_wrong_algebra():
    from multiform.models import ModelBundle

    b = conformal_model()
    with pytest.raises(ValueError):
        ModelBundle("x", b.system, LieAlgebraData(2.0 * b.algebra.c))
