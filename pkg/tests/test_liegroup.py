import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from multiform.flows import IntegrationError, MultiTimeCurve
from multiform.liegroup import (
    ChartError,
    GroupChart,
    LieAlgebraData,
    cross_consistency_check,
    group_action,
    integrate_group_flow,
    jacobi_check,
    k_functions,
    matrix_exp,
    mc_compatibility_check,
    moment_map_check,
    theta_coefficients,
)
from multiform.models import conformal_model, su2_oscillator
from multiform.phase import HamiltonianSystem, PhasePoint

# frozen from a 40-digit mpmath evaluation
A_FIXED = np.array([[0.5, -1.2, 0.3], [2.0, 0.1, -0.7], [-0.4, 0.9, 1.5]])
EXP_A_FIXED = np.array([
    [0.2720745271861362903, -0.6334654041982880117, 1.266511526544055918],
    [1.665151175065676541, -0.4399371840413083977, -0.5844724331946356797],
    [0.7488199702153778819, 1.796108273653439937, 3.633975826017118775],
])

XI = np.array([[[0.0, 1.0], [0.0, 0.0]], [[-0.5, 0.0], [0.0, 0.5]]])


def test_matrix_exp_frozen():
    assert np.max(np.abs(matrix_exp(A_FIXED) - EXP_A_FIXED)) < 1e-14 * 10


def test_matrix_exp_basics():
    assert np.array_equal(matrix_exp(np.zeros((3, 3))), np.eye(3))
    D = np.diag([1.0, -2.0, 0.5])
    assert np.allclose(matrix_exp(D), np.diag(np.exp([1.0, -2.0, 0.5])), rtol=1e-14)
    with pytest.raises(ValueError):
        matrix_exp(np.zeros((2, 3)))


@settings(max_examples=60)
@given(arrays(float, (4, 4), elements=st.floats(-1, 1)), st.floats(0.01, 30))
def test_matrix_exp_matches_scipy(A, scale):
    A = A * scale
    ref = scipy.linalg.expm(A)
    assert np.max(np.abs(matrix_exp(A) - ref)) <= 1e-11 * max(1.0, np.max(np.abs(ref)))


@settings(max_examples=30)
@given(arrays(float, (3, 3), elements=st.floats(-2, 2)))
def test_matrix_exp_inverse(A):
    assert np.allclose(matrix_exp(A) @ matrix_exp(-A), np.eye(3), atol=1e-10)


def test_algebra_validation():
    c = np.zeros((2, 2, 2))
    c[0, 1, 0] = 1.0
    with pytest.raises(ValueError, match="antisymmetric"):
        LieAlgebraData(c)
    c[1, 0, 0] = -1.0
    alg = LieAlgebraData(c)
    assert alg.n == 2 and alg.basis_names == ("E1", "E2")
    raw = np.random.default_rng(3).normal(size=(3, 3, 3))
    bad = raw - np.transpose(raw, (1, 0, 2))
    assert jacobi_check(bad) > 1e-3
    with pytest.raises(ValueError, match="Jacobi"):
        LieAlgebraData(bad)
    with pytest.raises(ValueError):
        LieAlgebraData(c, matrix_basis=np.array([XI[0], XI[0]]))


def test_from_dict_is_one_based_and_fills_antisymmetry():
    alg = LieAlgebraData.from_dict({"n": 2, "structure_constants": [[1, 2, 1, 1.0]]})
    assert alg.c[0, 1, 0] == 1.0 and alg.c[1, 0, 0] == -1.0
    again = LieAlgebraData.from_dict(alg.to_dict())
    assert np.array_equal(again.c, alg.c)


def test_conformal_structure_constants():
    alg = LieAlgebraData.from_matrices(XI)
    assert alg.c[0, 1].tolist() == [1.0, 0.0]
    assert alg.bracket_mismatch() < 1e-15


def test_conformal_theta(rng):
    chart = GroupChart(LieAlgebraData.from_matrices(XI), order=(1, 0))
    for _ in range(50):
        t, tau = rng.uniform(-2, 2, 2)
        assert np.max(np.abs(theta_coefficients(chart, [t, tau]) - [[1.0, -t], [0.0, 1.0]])) < 1e-12
        g = chart.element([t, tau])
        expected = np.array([[np.exp(-tau / 2), t * np.exp(-tau / 2)], [0.0, np.exp(tau / 2)]])
        assert np.allclose(g, expected, rtol=1e-14, atol=1e-14)


def test_chart_derivatives_match_finite_differences(rng):
    alg = su2_oscillator().algebra
    for kind in ("product", "exponential"):
        chart = GroupChart(alg, kind=kind)
        tau = rng.uniform(-1, 1, 3)
        _, dg = chart.derivatives(tau)
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1e-6
            fd = (chart.element(tau + e) - chart.element(tau - e)) / 2e-6
            assert np.max(np.abs(dg[k] - fd)) < 1e-8


def test_abelian_theta_is_identity(rng):
    alg = LieAlgebraData.from_matrices([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    for kind in ("product", "exponential"):
        assert np.allclose(theta_coefficients(GroupChart(alg, kind=kind), rng.uniform(-1, 1, 2)), np.eye(2))


def test_mc_compatibility(rng):
    conf = conformal_model().chart
    su2 = su2_oscillator().chart
    su2_exp = GroupChart(su2.algebra, kind="exponential")
    for _ in range(5):
        assert mc_compatibility_check(conf, rng.uniform(-1, 1, 2)) < 1e-7
        assert mc_compatibility_check(su2, rng.uniform(-1, 1, 3)) < 1e-7
        assert mc_compatibility_check(su2_exp, rng.uniform(-1, 1, 3)) < 1e-7


def test_mc_detects_wrong_constants():
    chart = conformal_model().chart
    wrong = LieAlgebraData(-chart.algebra.c, matrix_basis=None)
    fake = object.__new__(GroupChart)
    object.__setattr__(fake, "algebra", wrong)
    for name in ("order", "kind", "_basis_cols", "_basis_pinv"):
        object.__setattr__(fake, name, getattr(chart, name))
    object.__setattr__(fake, "derivatives", chart.derivatives)
    assert mc_compatibility_check(fake, [0.4, 0.3]) > 0.1


def test_chart_errors():
    alg = LieAlgebraData.from_matrices(XI)
    with pytest.raises(ChartError):
        GroupChart(alg, order=(0, 0))
    with pytest.raises(ChartError):
        GroupChart(alg, kind="spline")
    with pytest.raises(ChartError):
        GroupChart(LieAlgebraData(alg.c))
    # rank-deficient theta: a one-parameter subgroup used twice
    dup = object.__new__(LieAlgebraData)
    object.__setattr__(dup, "c", np.zeros((2, 2, 2)))
    object.__setattr__(dup, "basis_names", ("a", "b"))
    object.__setattr__(dup, "matrix_basis", np.array([XI[0], 2 * XI[0]]))
    with pytest.raises(ChartError):
        theta_coefficients(GroupChart(dup), [0.1, 0.2])


def test_moment_map_and_k_functions(rng):
    b = conformal_model(1.3, 0.7)
    x = PhasePoint(p=[0.4], q=[1.1])
    assert moment_map_check(b.system, b.algebra, x) < 1e-12
    H0, J = b.system.values(x)
    assert np.allclose(k_functions(b.system, b.chart, [0.5, 0.2], x), [H0, J - 0.5 * H0], rtol=1e-14)
    scaled = LieAlgebraData(1.1 * b.algebra.c)
    assert moment_map_check(b.system, scaled, x) == pytest.approx(0.1 * H0, rel=1e-12)


def test_cross_consistency(rng):
    b = conformal_model(1.0, 0.5)
    x = PhasePoint(p=[0.3], q=[1.2])
    for probe in ("q1", "p1", "p1*q1^2"):
        assert cross_consistency_check(b.system, b.algebra, b.chart, x, [0.3, -0.2], probe) < 1e-7
    # a basis whose bracket is 1.1 xi1 no longer matches {H0, J} = H0
    alg = LieAlgebraData.from_matrices([XI[0], 1.1 * XI[1]])
    chart = GroupChart(alg, order=(1, 0))
    assert cross_consistency_check(b.system, alg, chart, x, [0.3, -0.2], "q1") > 1e-3
    ab = HamiltonianSystem.from_strings(1, ["p1^2/2", "p1"])
    alg0 = LieAlgebraData.from_matrices([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    assert cross_consistency_check(ab, alg0, GroupChart(alg0), x, [0.1, 0.2], "q1") < 1e-9


def test_group_flow_invariants():
    b = conformal_model(1.3, 0.7)
    x0 = PhasePoint(p=[0.4], q=[1.1])
    traj = integrate_group_flow(b.system, b.algebra, b.chart, MultiTimeCurve.parse("0,0;0.5,0.3;0.9,-0.4"), x0, 400)
    tau = traj.extras["tau"]
    H = np.array([b.system.values(traj.point(k))[0] for k in range(traj.s.size)])
    assert np.ptp(H * np.exp(tau[:, 1])) < 1e-9
    assert np.ptp(traj.extras["K"][:, 1]) < 1e-9
    assert np.allclose(tau[-1], [0.9, -0.4])


def test_group_flow_path_independence():
    b = su2_oscillator()
    x0 = PhasePoint(p=[0.3, -0.5], q=[0.8, 0.1])
    A = integrate_group_flow(b.system, b.algebra, b.chart, MultiTimeCurve.parse("0,0,0;0.4,0,0;0.4,0.3,0;0.4,0.3,-0.2"), x0, 900)
    B = integrate_group_flow(b.system, b.algebra, b.chart, MultiTimeCurve.parse("0,0,0;0,0,-0.2;0,0.3,-0.2;0.4,0.3,-0.2"), x0, 900)
    assert np.max(np.abs(A.final.as_array() - B.final.as_array())) < 1e-9
    assert abs(group_action(b.system, b.chart, A) - group_action(b.system, b.chart, B)) < 1e-8


def test_group_flow_abelian_reduces_to_flow():
    from multiform.flows import integrate_curve
    from multiform.models import harmonic_oscillator

    ho = harmonic_oscillator("ho").system
    alg = LieAlgebraData.from_matrices([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    x0 = PhasePoint(p=[0.3, -0.5], q=[0.8, 0.1])
    c = MultiTimeCurve.parse("0,0;1,0.5")
    a = integrate_group_flow(ho, alg, GroupChart(alg), c, x0, 200)
    b = integrate_curve(ho, c, x0, 200)
    assert np.allclose(a.q, b.q, atol=1e-14) and np.allclose(a.t, b.t, atol=1e-14)


def test_group_flow_dimension_checks():
    b = conformal_model()
    with pytest.raises(ValueError):
        integrate_group_flow(b.system, b.algebra, b.chart, MultiTimeCurve.straight([1.0, 1.0, 1.0]), PhasePoint(p=[1.0], q=[1.0]), 10)
    alg = LieAlgebraData.from_matrices([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    sys = HamiltonianSystem.from_strings(1, ["p1 + sqrt(q1)", "p1"])
    with pytest.raises(IntegrationError):
        integrate_group_flow(sys, alg, GroupChart(alg), MultiTimeCurve.straight([-2.0, 0.0]), PhasePoint(p=[0.0], q=[1.0]), 10)
