import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adgame.errors import ContractViolationError
from adgame.estimator import (
    RegularizationState,
    RegularizedEstimate,
    WeightFunction,
    estimate_error,
    matrix_sqrt_spd,
    regularize,
    sample_unit_ball,
    split_theta,
    wls_init,
    wls_step,
)

SCALAR_DIMS = (1, 1, 1, 1)
THETA0 = np.array([[-0.5], [0.8], [1.3]])


def test_weight_function_values():
    f = WeightFunction(delta=1.0)
    assert f(0.0) == pytest.approx(1.0)  # clamped at e
    assert f(math.e) == pytest.approx(1.0)
    assert f(math.e**2) == pytest.approx(4.0)
    g = WeightFunction(delta=0.5)
    assert g(math.e**2) == pytest.approx(2.0**1.5)


def test_weight_function_domain():
    with pytest.raises(ContractViolationError):
        WeightFunction(delta=0.0)
    with pytest.raises(ContractViolationError):
        WeightFunction(delta=-1.0)


def test_wls_init_state():
    s = wls_init(SCALAR_DIMS, THETA0, 4.0 * np.eye(3))
    np.testing.assert_array_equal(s.theta, THETA0)
    assert s.r == pytest.approx(0.25)  # ||cov0^{-1}||
    assert s.a == pytest.approx(1.0 / s.f(0.25))
    assert s.t == 0.0


def test_wls_init_contracts():
    with pytest.raises(ContractViolationError, match="theta0"):
        wls_init(SCALAR_DIMS, np.zeros((2, 1)), np.eye(3))
    with pytest.raises(ContractViolationError, match="positive definite"):
        wls_init(SCALAR_DIMS, THETA0, -np.eye(3))
    with pytest.raises(ContractViolationError, match="symmetric"):
        wls_init(SCALAR_DIMS, THETA0, np.triu(np.ones((3, 3))))
    # zero B estimate is uncontrollable
    with pytest.raises(ContractViolationError, match="controllable"):
        wls_init(SCALAR_DIMS, np.array([[-0.5], [0.0], [0.0]]), np.eye(3))


def test_split_theta_convention():
    A, B1, B2 = split_theta(THETA0, SCALAR_DIMS)
    assert A[0, 0] == -0.5
    assert B1[0, 0] == 0.8
    assert B2[0, 0] == 1.3


def test_wls_step_noise_free_identification():
    # drive the scalar plant dx = theta^T phi dt exactly; the estimate
    # moves toward the truth and the excitation tally integrates |phi|^2
    truth = np.array([[0.3], [1.0], [0.5]])
    s = wls_init(SCALAR_DIMS, THETA0, np.eye(3), WeightFunction(1.0))
    rng = np.random.default_rng(0)
    h = 0.01
    x = 0.5
    err0 = np.linalg.norm(s.theta - truth)
    for _ in range(4000):
        u1, u2 = rng.standard_normal(2)
        phi = np.array([x, u1, u2])
        dx = float(truth.ravel() @ phi) * h
        s = wls_step(s, phi, np.array([dx]), h)
        x += dx
    assert np.linalg.norm(s.theta - truth) < 0.25 * err0
    assert s.t == pytest.approx(40.0)
    assert s.r > 0.25


def test_wls_step_keeps_gain_pd():
    s = wls_init(SCALAR_DIMS, THETA0, 100.0 * np.eye(3), WeightFunction(1.0))
    rng = np.random.default_rng(1)
    for _ in range(500):
        phi = 3.0 * rng.standard_normal(3)
        s = wls_step(s, phi, np.array([0.1]), 0.05)
        assert np.linalg.eigvalsh(s.cov_gain).min() > 0


def test_wls_step_overshoot_guard_logged():
    # enormous gain makes a h phi^T cov phi >> 1; the clamp must engage
    s = wls_init(SCALAR_DIMS, THETA0, 1e6 * np.eye(3), WeightFunction(1.0))
    phi = np.array([1.0, 1.0, 1.0])
    s = wls_step(s, phi, np.array([0.01]), 0.01)
    assert s.floor_activations >= 1
    assert np.all(np.isfinite(s.theta))
    assert np.linalg.eigvalsh(s.cov_gain).min() > 0


def test_wls_step_rejects_bad_step():
    s = wls_init(SCALAR_DIMS, THETA0, np.eye(3))
    with pytest.raises(ContractViolationError):
        wls_step(s, np.ones(3), np.zeros(1), 0.0)


def test_matrix_sqrt_spd_squares_back():
    rng = np.random.default_rng(4)
    M = rng.standard_normal((4, 4))
    S = M @ M.T + 4 * np.eye(4)
    root = matrix_sqrt_spd(S)
    np.testing.assert_allclose(root @ root, S, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(root, root.T, atol=1e-12)


def test_matrix_sqrt_spd_contracts():
    with pytest.raises(ContractViolationError):
        matrix_sqrt_spd(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ContractViolationError):
        matrix_sqrt_spd(-np.eye(2))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_sample_unit_ball_stays_inside(seed):
    rng = np.random.default_rng(seed)
    draw = sample_unit_ball(rng, (3, 2))
    assert draw.shape == (3, 2)
    assert np.linalg.norm(draw) <= 1.0


def test_sample_unit_ball_radius_distribution():
    # for uniform sampling in d dimensions, r^d is uniform on [0, 1]
    rng = np.random.default_rng(9)
    d = 6
    rs = np.array([np.linalg.norm(sample_unit_ball(rng, (3, 2))) for _ in range(4000)])
    u = rs**d
    assert abs(u.mean() - 0.5) < 0.03
    assert abs(np.quantile(u, 0.25) - 0.25) < 0.04


def test_regularization_state_contracts():
    rng = np.random.default_rng(0)
    with pytest.raises(ContractViolationError):
        RegularizationState(beta=np.zeros((3, 1)), gamma_reg=0.5, rng=rng)
    with pytest.raises(ContractViolationError):
        RegularizationState(beta=2 * np.ones((3, 1)), gamma_reg=0.2, rng=rng)


def test_regularize_produces_controllable_estimate():
    s = wls_init(SCALAR_DIMS, THETA0, 0.01 * np.eye(3))
    reg = RegularizationState(
        beta=np.zeros((3, 1)), gamma_reg=0.2, rng=np.random.default_rng(3)
    )
    for expected_epoch in range(5):
        est, reg = regularize(s, reg)
        assert est.epoch == expected_epoch
        assert est.Y_value > 0
        assert reg.Y_current == est.Y_value
        np.testing.assert_allclose(
            np.hstack([est.A_hat, est.B1_hat, est.B2_hat]), est.theta_bar.T
        )
    assert reg.k == 5
    assert reg.acceptances >= 0


def test_regularize_acceptance_improves_Y():
    # whenever the candidate is accepted, its Y beats the incumbent's by 1.2x
    s = wls_init(SCALAR_DIMS, THETA0, 0.25 * np.eye(3))
    reg = RegularizationState(
        beta=np.zeros((3, 1)), gamma_reg=0.2, rng=np.random.default_rng(11)
    )
    last_incumbent_Y = None
    for _ in range(200):
        before = reg.acceptances
        est, reg = regularize(s, reg)
        if reg.acceptances > before and last_incumbent_Y is not None:
            assert est.Y_value >= 1.2 * last_incumbent_Y * (1 - 1e-12)
        last_incumbent_Y = est.Y_value
    assert reg.acceptances >= 1


def test_estimate_error_forms(scalar_model):
    est = RegularizedEstimate(
        A_hat=scalar_model.A,
        B1_hat=scalar_model.B1,
        B2_hat=scalar_model.B2,
        epoch=0,
        Y_value=1.0,
        theta_bar=scalar_model.theta,
        beta_accepted=False,
    )
    assert estimate_error(est, scalar_model) == pytest.approx(0.0)
    s = wls_init(SCALAR_DIMS, THETA0, np.eye(3))
    expected = np.linalg.norm(np.hstack([THETA0[0], THETA0[1], THETA0[2]]) - [0, 1, 1])
    assert estimate_error(s, scalar_model) == pytest.approx(expected)
