import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quanputer import opverify, qreg
from quanputer.errors import Singular
from quanputer.report import ConvergenceReport, fit_order

EPS = opverify.default_eps_sweep()


def test_default_sweep_is_dyadic():
    assert EPS == [0.1, 0.05, 0.025, 0.0125, 0.00625]


def test_fit_order_exact_power_law():
    fit = fit_order([(e, 2.5 * e**3) for e in EPS])
    assert fit.slope == pytest.approx(3.0, abs=1e-12)
    assert fit.intercept == pytest.approx(np.log(2.5), abs=1e-12)
    assert fit.residual < 1e-12


def test_fit_order_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_order([(1, 1), (2, 2)])
    with pytest.raises(ValueError):
        fit_order([(1, 1), (2, 0), (3, 1)])
    with pytest.raises(ValueError):
        fit_order([(1, 1), (1, 2), (3, 1)])


def test_report_csv_footer():
    rep = ConvergenceReport.from_points("eps", [(e, e**3) for e in EPS], 3.0, 0.2)
    text = rep.to_csv()
    assert text.splitlines()[0] == "param,error"
    assert text.rstrip().endswith("pass=true")
    assert rep.passed


def test_matrix_pair_validation():
    with pytest.raises(ValueError):
        opverify.MatrixPair(np.eye(2), np.eye(3))
    with pytest.raises(ValueError):
        opverify.MatrixPair(20 * np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        opverify.MatrixPair(np.eye(65), np.eye(65))


def test_random_pair_is_hermitian_and_seeded():
    p1 = opverify.MatrixPair.random_hermitian(4, seed=11)
    p2 = opverify.MatrixPair.random_hermitian(4, seed=11)
    np.testing.assert_array_equal(p1.A, p2.A)
    np.testing.assert_allclose(p1.A, p1.A.conj().T)
    assert np.linalg.norm(p1.B, 2) == pytest.approx(1.0)


def test_commuting_pairs_have_zero_defect():
    pair = opverify.MatrixPair.commuting_diagonal(4, seed=2)
    for e in EPS:
        assert opverify.group_commutator_defect(pair, e) <= 1e-12
        assert opverify.resolvent_commutator_defect(pair, e) <= 1e-12


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000))
def test_both_defects_are_third_order(seed):
    pair = opverify.MatrixPair.random_hermitian(4, seed)
    for which in ("group", "resolvent"):
        rep = opverify.commutator_sweep(pair, EPS, which, 3.0, 0.2)
        assert rep.passed, rep.summary()


def test_resolvent_singular():
    pair = opverify.MatrixPair(-np.eye(2), np.zeros((2, 2)))
    with pytest.raises(Singular):
        opverify.resolvent_commutator_defect(pair, 1.0)


def test_resolvent_small_case_hand_value():
    # nilpotent pair: A = E12, B = E21, [A, B] = diag(1, -1)
    A = np.array([[0, 1], [0, 0]], dtype=float)
    B = A.T.copy()
    pair = opverify.MatrixPair(A, B)
    eps = 0.1
    fa, fb = np.eye(2) + eps * A, np.eye(2) + eps * B
    lhs = fa @ fb @ np.linalg.inv(fa) @ np.linalg.inv(fb)
    expected = np.linalg.norm(lhs - (np.eye(2) + eps**2 * pair.commutator), 2)
    assert opverify.resolvent_commutator_defect(pair, eps) == pytest.approx(expected, rel=1e-12)


def test_overlap_convention():
    assert opverify.momentum_state_overlap(0.0, 3.0) == pytest.approx(1 / np.sqrt(2 * np.pi))
    val = opverify.momentum_state_overlap(1.0, np.pi / 2, hbar=1.0)
    assert val == pytest.approx(-1j / np.sqrt(2 * np.pi))
    with pytest.raises(ValueError):
        opverify.momentum_state_overlap(0, 0, hbar=0)


@pytest.mark.parametrize("bits,hbar", [(4, 1.0), (6, 0.3), (7, 2.0)])
def test_discrete_completeness(bits, hbar):
    g = qreg.GridSpec.box(bits, -3, 5, hbar=hbar)
    defect = opverify.discrete_completeness_defect(g)
    assert defect * g.spacing[0] <= 1e-12
