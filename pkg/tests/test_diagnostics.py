import io

import numpy as np
import pytest

from adgame.diagnostics import (
    check_consistency,
    check_dither_energy,
    check_nash_gap,
    check_nash_value,
    check_stability,
)
from adgame.errors import ContractViolationError, InapplicableExperimentError
from adgame.model import GameModel
from adgame.sim import EstimatorInit, SimConfig
from adgame.strategy import StrategyGains, Mode, gamma_schedule


def _scalar_cfg(**kw):
    base = dict(T=40.0, h=0.01, seed=100, x0=np.array([0.5]))
    base.update(kw)
    return SimConfig(**base)


def test_stability_smoke(scalar_model, scalar_est_init):
    rep = check_stability(scalar_model, _scalar_cfg(), scalar_est_init, n_seeds=4)
    assert rep.passed
    ids = [c.criterion_id for c in rep.criteria]
    assert ids == ["C4.no-divergence", "C4.bounded"]
    assert rep.summary["divergences"] == 0
    assert len(rep.per_seed["stat_final"]) == 4


def test_stability_negative_control(scalar_model, scalar_est_init):
    # forcing destabilizing gains must surface as a reported failure
    def destabilize(k, gains):
        return StrategyGains(
            L1=np.array([[3.0]]), L2=np.array([[3.0]]), mode=Mode.GRAMIAN_FALLBACK, epoch=k
        )

    rep = check_stability(
        scalar_model, _scalar_cfg(T=50.0), scalar_est_init, n_seeds=3, gain_hook=destabilize
    )
    assert not rep.passed
    assert rep.summary["divergences"] == 3


def test_consistency_error_stays_small_when_start_is_truth():
    # truth equals the initial estimate and the noise is tiny: the error
    # starts at zero and stays inside the regularization search ball, whose
    # radius is at most ||cov0^{1/2}||_F while no excitation shrinks the gain
    m = GameModel(
        A=[[-0.5]], B1=[[0.8]], B2=[[1.3]], D=[[0.01]], Qw=[[1.0]], R1=[[1.0]], R2=[[2.0]]
    )
    cov0_scale = 0.25
    ei = EstimatorInit(theta0=np.array([[-0.5], [0.8], [1.3]]), cov0_scale=cov0_scale, delta=0.5)
    rep = check_consistency(
        m,
        _scalar_cfg(T=30.0, x0=np.array([0.0])),
        ei,
        n_seeds=3,
        checkpoints=(5, 15, 30),
        threshold_frac=0.2,
    )
    ball_radius = np.sqrt(3 * cov0_scale)
    for ck in (5, 15, 30):
        assert max(rep.per_seed[f"err_{ck}"]) <= ball_radius + 0.05


def test_consistency_checkpoint_order_contract(scalar_model, scalar_est_init):
    with pytest.raises(ContractViolationError):
        check_consistency(
            scalar_model, _scalar_cfg(), scalar_est_init, n_seeds=1, checkpoints=(10, 5)
        )


def test_consistency_no_dither_notes_ablation(scalar_model, scalar_est_init):
    cfg = _scalar_cfg(T=20.0, dither_enabled=False)
    rep = check_consistency(
        scalar_model, cfg, scalar_est_init, n_seeds=2, checkpoints=(5, 10, 20)
    )
    assert any("excitation removed" in note for note in rep.notes)


def test_nash_value_inapplicable_model():
    one = np.ones((1, 1))
    m = GameModel(A=np.zeros((1, 1)), B1=one, B2=one, D=one, Qw=one, R1=one, R2=one)
    with pytest.raises(InapplicableExperimentError):
        check_nash_value(m, _scalar_cfg(), None, n_seeds=1)


def test_nash_value_reports_reference(scalar_model, scalar_est_init):
    rep = check_nash_value(scalar_model, _scalar_cfg(T=60.0), scalar_est_init, n_seeds=4)
    assert rep.summary["reference"] == pytest.approx(np.sqrt(2.0), abs=1e-10)
    assert rep.criteria[0].criterion_id == "C6.median"
    assert len(rep.per_seed["payoff"]) == 4


def test_nash_gap_rejects_inadmissible_deviation(scalar_model, scalar_est_init):
    # +2.0 pushes the true closed loop across the axis
    with pytest.raises(ContractViolationError):
        check_nash_gap(
            scalar_model, _scalar_cfg(), scalar_est_init, deviations=(2.0,), n_seeds=1
        )


def test_nash_gap_report_structure(scalar_model, scalar_est_init):
    rep = check_nash_gap(
        scalar_model, _scalar_cfg(T=30.0), scalar_est_init, deviations=(0.3,), n_seeds=3
    )
    ids = [c.criterion_id for c in rep.criteria]
    assert ids == ["C7.p1+0.3.gap", "C7.p1+0.3.band", "C7.p2+0.3.gap", "C7.p2+0.3.band"]
    assert rep.summary["slack"] >= 0.05 * rep.summary["reference"]


def test_dither_energy_matches_analytic():
    rep = check_dither_energy(h=0.01, n_epochs=100, n_seeds=10, seed=5, milestones=(50,))
    assert rep.passed
    N = 100
    gammas = np.array([gamma_schedule(k) for k in range(1, N + 1)])
    assert rep.summary["analytic"][N] == pytest.approx(np.sum(gammas**2) / (2 * N))


def test_dither_energy_epoch_contract():
    with pytest.raises(ContractViolationError):
        check_dither_energy(n_epochs=10)


def test_report_text_and_csv(scalar_model, scalar_est_init):
    rep = check_stability(scalar_model, _scalar_cfg(), scalar_est_init, n_seeds=2)
    text = rep.to_text()
    assert "experiment: stability" in text
    assert "verdict: PASS" in text
    buf = io.StringIO()
    rep.per_seed_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "seed,stat_quarter,stat_half,stat_final"
    assert len(lines) == 3
