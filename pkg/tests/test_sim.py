import io

import numpy as np
import pytest

from adgame.errors import ContractViolationError, DivergenceError
from adgame.model import matrix_exponential
from adgame.riccati import nash_gains, solve_game_are
from adgame.sim import (
    EstimatorInit,
    SimConfig,
    WienerStreams,
    default_theta0,
    payoff_estimate,
    simulate_adaptive,
    simulate_fixed_gains,
)
from adgame.strategy import StrategyGains


def _cfg(**kw):
    base = dict(T=10.0, h=0.01, seed=0, x0=np.array([0.5]))
    base.update(kw)
    return SimConfig(**base)


def test_sim_config_contracts():
    with pytest.raises(ContractViolationError):
        _cfg(h=0.2)
    with pytest.raises(ContractViolationError):
        _cfg(h=0.3)  # above the cap and not dividing the epoch
    with pytest.raises(ContractViolationError):
        _cfg(h=0.03)  # does not divide the unit epoch
    with pytest.raises(ContractViolationError):
        _cfg(T=0.5)
    with pytest.raises(ContractViolationError):
        _cfg(record_stride=0)
    cfg = _cfg(h=0.05, T=3.0)
    assert cfg.steps_per_epoch == 20
    assert cfg.total_steps == 60


def test_default_theta0_controllable():
    for dims in [(1, 1, 1, 1), (2, 1, 1, 1), (3, 2, 1, 1), (4, 2, 2, 2)]:
        th = default_theta0(dims)
        assert th.shape == (dims[0] + dims[1] + dims[2], dims[0])


def test_wiener_streams_deterministic_and_distinct():
    s1 = WienerStreams(123)
    s2 = WienerStreams(123)
    a = s1.w.standard_normal(8)
    np.testing.assert_array_equal(a, s2.w.standard_normal(8))
    # substreams differ from each other
    b = s2.v1.standard_normal(8)
    c = s2.v2.standard_normal(8)
    assert not np.allclose(a, b)
    assert not np.allclose(b, c)


def test_fixed_gains_deterministic_limit_matches_expm(two_state_model):
    # D = 0 removes noise; the closed loop is x' = Phi x, solvable exactly
    m = two_state_model
    m0 = type(m)(A=m.A, B1=m.B1, B2=m.B2, D=np.zeros((2, 1)), Qw=m.Qw, R1=m.R1, R2=m.R2)
    sol = solve_game_are(m.A, m.B1, m.B2, m.Qw, m.R1, m.R2)
    L1, L2 = nash_gains(sol, m.B1, m.B2, m.R1, m.R2)
    Phi = m.A + m.B1 @ L1 + m.B2 @ L2
    x0 = np.array([1.0, -0.5])
    T = 5.0
    exact = matrix_exponential(Phi, T) @ x0
    errors = []
    for h in (0.02, 0.01, 0.005):
        cfg = SimConfig(T=T, h=h, seed=0, x0=x0, record_stride=1)
        traj = simulate_fixed_gains(m0, cfg, L1, L2)
        x_T = traj.states[-1] + (
            Phi @ traj.states[-1]
        ) * h  # advance the last left-endpoint record one step
        errors.append(np.linalg.norm(x_T - exact))
    assert errors[0] / errors[1] == pytest.approx(2.0, abs=0.4)
    assert errors[1] / errors[2] == pytest.approx(2.0, abs=0.4)


def test_fixed_gains_ou_stationary_variance():
    # dx = -x dt + dw has stationary variance 1/2
    from adgame.model import GameModel

    m = GameModel(
        A=[[-1.0]], B1=[[1.0]], B2=[[1.0]], D=[[1.0]], Qw=[[1.0]], R1=[[1.0]], R2=[[2.0]]
    )
    zero = np.zeros((1, 1))
    vars_ = []
    for seed in range(20):
        cfg = SimConfig(T=200.0, h=0.01, seed=seed, x0=np.array([0.0]), record_stride=1)
        traj = simulate_fixed_gains(m, cfg, zero, zero)
        vars_.append(np.mean(traj.states[2000:] ** 2))  # discard transient
    assert np.median(vars_) == pytest.approx(0.5, rel=0.1)


def test_fixed_gains_rejects_unstable_loop(scalar_model):
    one = np.ones((1, 1))
    with pytest.raises(ContractViolationError):
        simulate_fixed_gains(scalar_model, _cfg(), one, one)


def test_fixed_gains_divergence_carries_partial_trajectory():
    from adgame.model import GameModel

    m = GameModel(
        A=[[2.0]], B1=[[1.0]], B2=[[1.0]], D=[[0.1]], Qw=[[1.0]], R1=[[1.0]], R2=[[2.0]]
    )
    zero = np.zeros((1, 1))
    cfg = SimConfig(T=30.0, h=0.01, seed=0, x0=np.array([1.0]))
    with pytest.raises(DivergenceError) as exc_info:
        simulate_fixed_gains(m, cfg, zero, zero, check_stability=False)
    traj = exc_info.value.trajectory
    assert traj is not None and traj.diverged
    assert traj.times.size > 0


def test_adaptive_run_basic_invariants(scalar_model, scalar_est_init):
    cfg = _cfg(T=20.0, seed=3)
    traj = simulate_adaptive(scalar_model, cfg, est_init=scalar_est_init)
    assert len(traj.epoch_records) == 20
    assert traj.final_estimate_error == traj.epoch_records[-1].estimate_error
    assert not traj.diverged
    ks = [r.k for r in traj.epoch_records]
    assert ks == list(range(20))
    for r in traj.epoch_records:
        assert r.mode in ("riccati-nash", "gramian-fallback")
        assert r.Y_value > 0
        assert r.gamma_k > 0
    # the excitation amplitude follows the schedule exactly
    from adgame.strategy import gamma_schedule

    for r in traj.epoch_records:
        assert r.gamma_k == gamma_schedule(r.k)


def test_adaptive_run_is_deterministic(scalar_model, scalar_est_init):
    cfg = _cfg(T=5.0, seed=11)
    t1 = simulate_adaptive(scalar_model, cfg, est_init=scalar_est_init)
    t2 = simulate_adaptive(scalar_model, cfg, est_init=scalar_est_init)
    buf1, buf2 = io.StringIO(), io.StringIO()
    t1.to_csv(buf1)
    t2.to_csv(buf2)
    assert buf1.getvalue() == buf2.getvalue()
    assert t1.payoff_average == t2.payoff_average


def test_adaptive_dither_flag_changes_inputs(scalar_model, scalar_est_init):
    t_on = simulate_adaptive(scalar_model, _cfg(T=5.0, seed=1), est_init=scalar_est_init)
    t_off = simulate_adaptive(
        scalar_model, _cfg(T=5.0, seed=1, dither_enabled=False), est_init=scalar_est_init
    )
    assert all(r.gamma_k == 0.0 for r in t_off.epoch_records)
    assert not np.allclose(t_on.u1s, t_off.u1s)


def test_adaptive_gain_hook_forced_divergence(scalar_model, scalar_est_init):
    from adgame.strategy import Mode

    def destabilize(k, gains):
        return StrategyGains(
            L1=np.array([[5.0]]), L2=np.array([[5.0]]), mode=Mode.GRAMIAN_FALLBACK, epoch=k
        )

    with pytest.raises(DivergenceError) as exc_info:
        simulate_adaptive(
            scalar_model, _cfg(T=50.0, seed=0), est_init=scalar_est_init, gain_hook=destabilize
        )
    assert exc_info.value.trajectory is not None


def test_deviation_changes_player_input(scalar_model, scalar_est_init):
    cfg = _cfg(T=5.0, seed=2)
    base = simulate_adaptive(scalar_model, cfg, est_init=scalar_est_init)
    dev = simulate_adaptive(
        scalar_model, cfg, est_init=scalar_est_init, deviation1=np.array([[0.3]])
    )
    assert not np.allclose(base.u1s, dev.u1s)
    np.testing.assert_array_equal(base.times, dev.times)


def test_payoff_estimate_matches_running_integral(scalar_model, scalar_est_init):
    cfg = _cfg(T=50.0, seed=5, record_stride=1)
    traj = simulate_adaptive(scalar_model, cfg, est_init=scalar_est_init)
    direct = payoff_estimate(traj, scalar_model)
    assert direct == pytest.approx(traj.payoff_average, rel=1e-9)


def test_trajectory_csv_layout(scalar_model, scalar_est_init):
    traj = simulate_adaptive(scalar_model, _cfg(T=2.0, seed=0), est_init=scalar_est_init)
    buf = io.StringIO()
    traj.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == (
        "t,x_1,u1_1,u2_1,running_payoff,estimate_error,mode,gamma_k,stability_stat"
    )
    assert len(lines) == 1 + traj.times.size
    buf2 = io.StringIO()
    traj.epochs_to_csv(buf2)
    assert buf2.getvalue().splitlines()[0].startswith("epoch,mode,gamma_k")
