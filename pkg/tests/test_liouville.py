import warnings

import numpy as np
import pytest
from scipy.linalg import expm

from quanputer import liouville as lv
from quanputer import qreg
from quanputer.errors import GridMismatch, OutsideSafetyBox, TooLarge


@pytest.fixture(scope="module")
def grid2():
    return qreg.GridSpec.box([6, 6], [-10, -10], [10, 10])


def test_flows_and_divergence(grid2):
    assert lv.rotation_flow().is_divergence_free(grid2)
    assert lv.constant_flow(1.0, 0.0).is_divergence_free(grid2)
    assert not lv.expansion_flow().is_divergence_free(grid2)
    np.testing.assert_allclose(lv.rotation_flow()(np.array([1.0, 2.0])), [2.0, -1.0])


def test_one_dimensional_flow_warns():
    with pytest.warns(lv.DimensionWarning):
        lv.constant_flow(1.0)


def test_hamiltonian_flow_signs():
    flow = lv.flow_from_hamiltonian(lv.harmonic_hamiltonian(), np.array([[0.3, -0.4]]))
    # H = (q^2 + p^2)/2 gives q' = p, p' = -q
    np.testing.assert_allclose(flow(np.array([1.0, 2.0])), [2.0, -1.0])
    saddle = lv.flow_from_hamiltonian(lv.saddle_hamiltonian())
    np.testing.assert_allclose(saddle(np.array([1.0, 2.0])), [1.0, -2.0])
    with pytest.raises(ValueError):
        lv.HamiltonianFlowSpec(3, lambda x: x[..., 0]).symplectic_form


def test_u_potential(grid2):
    u = lv.build_u(lv.rotation_flow(), grid2)
    # u_1 = x1 x2 / 2 measured from the left edge x1 = -10
    x1, x2 = grid2.mesh()
    np.testing.assert_allclose(u.values[0], 0.5 * x2 * (x1 + 10), atol=1e-12)
    np.testing.assert_allclose(u.values[1], -0.5 * x1 * (x2 + 10), atol=1e-12)
    assert u.derivative_error(lv.rotation_flow()) <= 1e-12


def test_rotation_generator_self_adjoint(grid2):
    rep = lv.liouville_generator_spectrum_check(lv.rotation_flow(), grid2)
    assert rep.self_adjoint and rep.divergence_free
    assert rep.relative_hermiticity_defect <= 1e-10
    assert rep.commutator_difference <= 1e-8


def test_expansion_generator_not_self_adjoint(grid2):
    rep = lv.liouville_generator_spectrum_check(lv.expansion_flow(), grid2)
    assert rep.relative_hermiticity_defect > 0.1
    assert not rep.self_adjoint and not rep.divergence_free
    assert rep.max_divergence == pytest.approx(1.0)


def test_dense_guard():
    with pytest.raises(TooLarge):
        lv.liouville_generator(lv.rotation_flow(), qreg.GridSpec.box([7, 6], -1, 1))


def test_plan_tau_and_validation():
    plan = lv.CommutatorPlan(2.0, 8, sign=-1, hbar=0.5)
    assert plan.tau == pytest.approx(-np.sqrt(2.0 / (0.25 * 8)))
    with pytest.raises(ValueError):
        lv.CommutatorPlan(1.0, 4, sign=2)


def test_step_equals_dense_operator_product():
    g = qreg.GridSpec.box([3, 3], [-2, -2], [2, 2])
    u = lv.build_u(lv.rotation_flow(), g)
    reg = qreg.init_from_sampler(g, qreg.gaussian_sampler([0.3, -0.2], [0.5, 0.0], [0.6, 0.6]))
    tau = 0.07
    mats = []
    for k in range(2):
        P2 = lv.momentum_squared_matrix(g, k)
        U = np.diag(u.values[k].reshape(-1))
        mats.append(expm(1j * tau * U) @ expm(1j * tau * P2)
                    @ expm(-1j * tau * U) @ expm(-1j * tau * P2))
    expected = mats[0] @ mats[1] @ reg.flat()
    out = lv.commutator_step(reg, u, lv.CommutatorPlan(1, 1), tau=tau)
    np.testing.assert_allclose(out.flat(), expected, atol=1e-12)


def test_step_rejects_foreign_u(grid2):
    other = qreg.GridSpec.box([5, 5], -1, 1)
    u = lv.build_u(lv.rotation_flow(), other)
    with pytest.raises(GridMismatch):
        lv.commutator_step(qreg.basis_state(grid2, 0), u, lv.CommutatorPlan(1, 1))


def test_zero_flow_is_identity(grid2):
    reg = qreg.init_from_sampler(grid2, qreg.gaussian_sampler([0, 0]))
    evo = lv.evolve_classical(reg, lv.constant_flow(0.0, 0.0), lv.CommutatorPlan(1.0, 4))
    np.testing.assert_allclose(evo.register.flat(), reg.flat(), atol=1e-14)


def test_constant_transport_matches_oracle(grid2):
    sampler = qreg.gaussian_sampler([-0.5, 0.0], 0.0, 1.0)
    reg = qreg.init_from_sampler(grid2, sampler)
    flow = lv.constant_flow(1.0, 0.0)
    evo = lv.evolve_classical(reg, flow, lv.CommutatorPlan(1.0, 256), record_every=64)
    oracle = lv.characteristics_oracle(flow, sampler, grid2, 1.0)
    assert qreg.fidelity(evo.register, oracle) >= 0.999
    assert qreg.position_mean(evo.register)[0] == pytest.approx(0.5, abs=1e-6)
    assert max(abs(n - 1) for n in evo.norms) <= 1e-12
    assert evo.steps == [0, 64, 128, 192, 256]


def test_sign_only_enters_at_third_order():
    # tau and -tau share tau^2, so both signs move the state the same way and
    # differ by O(tau^3)
    g = qreg.GridSpec.box([5, 5], -6, 6)
    reg = qreg.init_from_sampler(g, qreg.gaussian_sampler([0.5, 0.0], 0.0, 0.8))
    u = lv.build_u(lv.rotation_flow(), g)
    gaps = []
    for tau in (0.04, 0.02, 0.01):
        plus = lv.commutator_step(reg, u, lv.CommutatorPlan(1, 1), tau=tau)
        minus = lv.commutator_step(reg, u, lv.CommutatorPlan(1, 1), tau=-tau)
        assert qreg.l2_distance(plus, minus) < 0.2 * qreg.l2_distance(plus, reg)
        gaps.append(qreg.l2_distance(plus, minus))
    assert gaps[0] / gaps[1] == pytest.approx(8, rel=0.05)
    assert gaps[1] / gaps[2] == pytest.approx(8, rel=0.05)


def test_compressible_flow_warns_but_runs():
    g = qreg.GridSpec.box([4, 4], -4, 4)
    reg = qreg.init_from_sampler(g, qreg.gaussian_sampler([0.0, 0.0]))
    with pytest.warns(lv.CompressibleFlowWarning):
        evo = lv.evolve_classical(reg, lv.expansion_flow(), lv.CommutatorPlan(0.1, 2))
    assert not evo.divergence_free and evo.warnings
    assert evo.register.norm() == pytest.approx(1.0, abs=1e-12)


def test_oracle_safety_box(grid2):
    flow = lv.constant_flow(5.0, 0.0)
    with pytest.raises(OutsideSafetyBox):
        lv.characteristics_oracle(flow, qreg.gaussian_sampler([5.0, 0.0]), grid2, 1.0)


def test_oracle_exact_for_rotation(grid2):
    # a quarter turn clockwise carries a packet at (1, 0) to (0, -1)
    sampler = qreg.gaussian_sampler([1.0, 0.0], 0.0, 0.7)
    out = lv.characteristics_oracle(lv.rotation_flow(), sampler, grid2, np.pi / 2)
    ref = qreg.init_from_sampler(grid2, qreg.gaussian_sampler([0.0, -1.0], 0.0, 0.7))
    assert qreg.fidelity(out, ref) == pytest.approx(1.0, abs=1e-10)


def test_single_step_order_constant_flow():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", lv.DimensionWarning)
        flow = lv.constant_flow(1.0)
    g = qreg.GridSpec.box(6, -10, 10)
    scen = lv.LiouvilleScenario(g, flow, qreg.gaussian_sampler(0.0), 1.0)
    single, glob = lv.commutator_convergence(scen, taus=[0.02, 0.01, 0.005, 0.0025])
    assert glob is None
    assert single.passed, single.summary()
    assert single.slope == pytest.approx(3.0, abs=0.01)


def test_rotation_fidelity_improves_with_steps():
    g = qreg.GridSpec.box([6, 6], -10, 10)
    scen = lv.LiouvilleScenario(g, lv.rotation_flow(), qreg.gaussian_sampler([1.0, 0.0], 0, 0.5),
                                2 * np.pi)
    rows = lv.global_errors(scen, [256, 512, 1024])
    fids = [f for _, _, f in rows]
    assert fids[0] < fids[1] < fids[2]
    errs = [e for _, e, _ in rows]
    assert errs[0] > errs[1] > errs[2]
