import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quanputer import dynsys
from quanputer.errors import DimensionMismatch, InconsistentJacobian, Irregular, NoConvergence

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


# -- step_forward / step_backward ------------------------------------------------


def test_identity_forward_returns_input():
    s = np.array([0.3, -1.2])
    np.testing.assert_array_equal(dynsys.step_forward(dynsys.identity_map(), s), s)


def test_cat_map_forward_hand_value():
    np.testing.assert_allclose(dynsys.step_forward(dynsys.cat_map(), [1, 1]), [3, 2])


def test_cat_map_backward_hand_value():
    np.testing.assert_allclose(dynsys.step_backward(dynsys.cat_map(), [3, 2]), [1, 1])


def test_rotation_quarter_turn():
    out = dynsys.step_forward(dynsys.rotation_map(math.pi / 2), [1.0, 0.0])
    np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-15)


def test_forward_length_is_checked():
    bad = dynsys.DiscreteMap(2, lambda s: np.zeros(3))
    with pytest.raises(DimensionMismatch):
        dynsys.step_forward(bad, [0.0, 0.0])
    with pytest.raises(DimensionMismatch):
        dynsys.step_forward(dynsys.cat_map(), [1.0, 2.0, 3.0])


def test_dimension_changing_map_is_irreversible():
    proj = dynsys.DiscreteMap(2, lambda s: s[:1], jacobian=lambda s: np.array([[1.0, 0.0]]),
                              out_dim=1)
    with pytest.raises(Irregular):
        dynsys.step_backward(proj, [1.0])
    assert not dynsys.jacobian_at(proj, [1.0, 2.0]).regular


def test_newton_inverts_cubic():
    m = dynsys.cubic1d_map()
    s = np.array([0.7])
    back = dynsys.step_backward(m, dynsys.step_forward(m, s))
    assert abs(back[0] - 0.7) <= 1e-12 * 1.7


def test_newton_can_be_disabled():
    opts = dynsys.SolverOptions(allow_newton=False)
    with pytest.raises(Irregular):
        dynsys.step_backward(dynsys.cubic1d_map(), [1.0], opts)


def test_newton_reports_nonconvergence():
    # s -> s**2 + 1 has no real preimage of 0
    m = dynsys.DiscreteMap(1, lambda s: s**2 + 1.0, jacobian=lambda s: np.array([[2 * s[0]]]))
    with pytest.raises((NoConvergence, Irregular)):
        dynsys.step_backward(m, [0.0], dynsys.SolverOptions(max_iter=20))


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=2, max_size=2), st.sampled_from(["rotation", "catmap"]))
def test_round_trip_linear_maps(s, label):
    m = dynsys.named_map(label, theta=0.9)
    s = np.array(s)
    back = dynsys.step_backward(m, dynsys.step_forward(m, s))
    assert np.linalg.norm(back - s) <= 1e-12 * (1 + np.linalg.norm(s))


@settings(max_examples=60, deadline=None)
@given(finite)
def test_round_trip_cubic(x):
    m = dynsys.cubic1d_map()
    back = dynsys.step_backward(m, dynsys.step_forward(m, [x]))
    assert abs(back[0] - x) <= 1e-12 * (1 + abs(x))


# -- Jacobians and regularity --------------------------------------------------------


def test_cat_map_jacobian_is_constant_with_unit_det():
    jac = dynsys.jacobian_at(dynsys.cat_map(), [0.4, -3.0])
    np.testing.assert_array_equal(jac.entries, [[2, 1], [1, 1]])
    assert jac.det == pytest.approx(1.0)
    assert jac.regular


def test_quadratic_singular_at_origin_without_raising():
    jac = dynsys.jacobian_at(dynsys.quadratic1d_map(), [0.0])
    assert jac.det == 0.0
    assert not jac.regular
    assert math.isinf(jac.condition_estimate)


def test_finite_difference_jacobian_matches_analytic():
    m = dynsys.cubic1d_map()
    fd = dynsys.DiscreteMap(1, m.forward)
    s = [0.8]
    np.testing.assert_allclose(dynsys.jacobian_at(fd, s).entries,
                               dynsys.jacobian_at(m, s).entries, rtol=1e-9)


# -- costate ------------------------------------------------------------------------


def test_cat_map_costate_hand_value():
    np.testing.assert_allclose(dynsys.costate_step(dynsys.cat_map(), [3, 2], [1, 0]), [1, -1])


def test_identity_costate_unchanged():
    l = np.array([0.2, 5.0])
    np.testing.assert_allclose(dynsys.costate_step(dynsys.identity_map(), [1, 1], l), l)


def test_costate_through_singular_point_raises():
    with pytest.raises(Irregular):
        dynsys.costate_step(dynsys.quadratic1d_map(), [0.0], [1.0])


def test_discrete_hamiltonian_hand_value():
    assert dynsys.discrete_hamiltonian(dynsys.cat_map(), [1, 1], [1, 2]) == pytest.approx(7.0)


# -- extended runs ---------------------------------------------------------------------


def test_run_extended_cat_map_twenty_steps():
    traj = dynsys.run_extended(dynsys.cat_map(), [0.1, 0.2], [1, 0], 20, [0.3, -0.7],
                               precision=50)
    c = np.array(traj.pairing_samples)
    assert traj.n_steps == 20 and c.size == 21
    assert np.max(np.abs(c - c[0])) <= 1e-10
    # first pairing is l(0) . M ds(0) = (1, 0) . (2*0.3 - 0.7, 0.3 - 0.7)
    assert c[0] == pytest.approx(-0.1, abs=1e-15)


def test_run_extended_matches_direct_matrix_products():
    M = np.array([[2.0, 1.0], [1.0, 1.0]])
    Minv = np.linalg.inv(M)
    s0, l0 = np.array([0.1, 0.2]), np.array([1.0, 0.0])
    traj = dynsys.run_extended(dynsys.cat_map(), s0, l0, 6)
    for k in range(7):
        np.testing.assert_allclose(traj.states[k], np.linalg.matrix_power(M, k) @ s0, rtol=1e-13)
        np.testing.assert_allclose(traj.costates[k],
                                   np.linalg.matrix_power(Minv.T, k) @ l0, rtol=1e-11, atol=1e-11)


def test_float64_pairing_degrades_on_stretching_map():
    # the cat map amplifies rounding in l.ds by roughly 2.618**(2k)
    traj = dynsys.run_extended(dynsys.cat_map(), [0.1, 0.2], [0.37, -1.1], 50, [0.3, -0.7])
    c = np.array(traj.pairing_samples)
    assert np.max(np.abs(c - c[0])) > 1.0


def test_extended_precision_needs_analytic_jacobian():
    m = dynsys.DiscreteMap(1, lambda s: 2 * s, lambda s: s / 2)
    with pytest.raises(ValueError):
        dynsys.run_extended(m, [1.0], [1.0], 3, [1.0], precision=30)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rotation_pairing_constant_float64(seed):
    rng = np.random.default_rng(seed)
    s0, l0, ds0 = rng.standard_normal((3, 2))
    traj = dynsys.run_extended(dynsys.rotation_map(0.7), s0, l0, 50, ds0)
    c = np.array(traj.pairing_samples)
    assert np.max(np.abs(c - c[0])) <= 1e-10


def test_irregular_run_keeps_partial_trajectory():
    with pytest.raises(Irregular) as info:
        dynsys.run_extended(dynsys.quadratic1d_map(), [0.0], [1.0], 5)
    assert info.value.step == 0
    assert len(info.value.partial.states) == 1


def test_trajectory_csv_columns():
    traj = dynsys.run_extended(dynsys.cat_map(), [1, 1], [1, 2], 2, [1, 0])
    lines = traj.to_csv().splitlines()
    assert lines[0] == "k,s_0,s_1,l_0,l_1,H,pairing"
    assert len(lines) == 4
    assert lines[1].startswith("0,1,1,1,2,7,")


# -- continuum -------------------------------------------------------------------------


def test_constant_flow_hamiltonian_exactly_conserved():
    traj = dynsys.integrate_continuum(dynsys.constant_flow([1.0, 0.5]), [0, 0], [0.2, 0.3], 5, 0.1)
    assert traj.max_h_drift() <= 1e-14
    np.testing.assert_allclose(traj.x[-1], [5.0, 2.5], rtol=1e-12)


def test_harmonic_flow_rk4_drift_is_small():
    ext = dynsys.harmonic_flow()
    traj = dynsys.integrate_continuum(ext, [1, 0.3], [0.5, -0.2], 10, 0.0125)
    assert traj.max_h_drift() < 1e-9


def test_harmonic_drift_matches_closed_form():
    # RK4 applies R = a I + b J to both x and p, with a = 1 - h^2/2 + h^4/24 and
    # b = h - h^3/6. H = (J x).p then scales by (a^2 + b^2)^n = (1 - h^6/72 + ...)^n,
    # so the drift is about t h^5 / 72: fifth order in dt.
    ext = dynsys.harmonic_flow()
    dts = (0.1, 0.05, 0.025, 0.0125)
    drifts = []
    for dt in dts:
        traj = dynsys.integrate_continuum(ext, [1, 0.3], [0.5, -0.2], 10, dt)
        a, b = 1 - dt**2 / 2 + dt**4 / 24, dt - dt**3 / 6
        n = round(10 / dt)
        predicted = abs(traj.hamiltonian[0]) * (1 - (a * a + b * b) ** n)
        assert traj.max_h_drift() == pytest.approx(predicted, rel=2e-3)
        drifts.append(traj.max_h_drift())
    slope = np.polyfit(np.log(dts), np.log(drifts), 1)[0]
    assert slope == pytest.approx(5.0, abs=0.05)


def test_inconsistent_jacobian_is_rejected():
    ext = dynsys.ContinuumExtension(lambda x: np.array([x[1], -x[0]]),
                                    lambda x: np.eye(2), 2)
    with pytest.raises(InconsistentJacobian):
        dynsys.integrate_continuum(ext, [1, 0], [0, 1], 1, 0.1)
