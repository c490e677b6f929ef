"""Statistical experiments packaging the stability, consistency,
equilibrium-value, equilibrium-gap and dither-energy claims.

Each experiment fans a seeded ensemble of closed-loop simulations out,
reduces with medians (finite-horizon payoff averages are heavy-tailed) and
reports pass/fail per criterion.  Criterion ids carry the acceptance
numbering used by the test suite (C4 stability, C5 consistency, C6 value,
C7 equilibrium gap, C8 dither energy).  Every run is reproducible from
(config, master seed): seed i of an ensemble uses master_seed + i.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import dither_epoch_energy
from .errors import ContractViolationError, DivergenceError, InapplicableExperimentError
from .model import GameModel, spectral_abscissa
from .riccati import nash_gains, nash_value, solve_game_are
from .sim import EstimatorInit, SimConfig, simulate_adaptive
from .strategy import gamma_schedule

__all__ = [
    "CriterionResult",
    "DiagnosticsReport",
    "check_stability",
    "check_consistency",
    "check_nash_value",
    "check_nash_gap",
    "check_dither_energy",
]


@dataclass(frozen=True)
class CriterionResult:
    criterion_id: str
    description: str
    passed: bool
    observed: dict


@dataclass
class DiagnosticsReport:
    experiment: str
    per_seed: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    criteria: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def to_text(self) -> str:
        lines = [f"experiment: {self.experiment}"]
        for key, val in self.summary.items():
            lines.append(f"  {key}: {val}")
        for c in self.criteria:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"  [{status}] {c.criterion_id}: {c.description}")
            for key, val in c.observed.items():
                lines.append(f"      {key} = {val}")
        for note in self.notes:
            lines.append(f"  note: {note}")
        lines.append(f"verdict: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)

    def per_seed_csv(self, path_or_buf) -> None:
        keys = list(self.per_seed.keys())
        if not keys:
            return
        n = len(self.per_seed[keys[0]])
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            fh.write(",".join(keys) + "\n")
            for i in range(n):
                fh.write(",".join(_fmt(self.per_seed[k][i]) for k in keys) + "\n")
        finally:
            if own:
                fh.close()


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _seed_for(master: int, i: int) -> int:
    return int(master) + i


def _run_ensemble(model, cfg, est_init, n_seeds, **kwargs):
    """Run n_seeds adaptive simulations; returns (trajectories, divergences)."""
    trajs, divergences = [], []
    for i in range(n_seeds):
        cfg_i = SimConfig(
            T=cfg.T,
            h=cfg.h,
            seed=_seed_for(cfg.seed, i),
            x0=cfg.x0,
            dither_enabled=cfg.dither_enabled,
            record_stride=cfg.record_stride,
        )
        try:
            trajs.append(simulate_adaptive(model, cfg_i, est_init=est_init, **kwargs))
        except DivergenceError as exc:
            divergences.append((i, str(exc)))
            trajs.append(None)
    return trajs, divergences


def check_stability(
    model: GameModel,
    cfg: SimConfig,
    est_init: EstimatorInit | None = None,
    n_seeds: int = 20,
    T0: float = 1.0,
    gain_hook=None,
) -> DiagnosticsReport:
    """Global stability at desk scale: the prefix averages of
    |x|^2 + |u1|^2 + |u2|^2 must not explode and no seed may diverge."""
    rep = DiagnosticsReport(experiment="stability")
    trajs, divergences = _run_ensemble(
        model, cfg, est_init, n_seeds, T0=T0, gain_hook=gain_hook
    )
    quarter, half, final = [], [], []
    for tr in trajs:
        if tr is None:
            continue
        quarter.append(tr.stability_stat(cfg.T / 4))
        half.append(tr.stability_stat(cfg.T / 2))
        final.append(tr.stability_stat(cfg.T))
    rep.per_seed = {
        "seed": [i for i, tr in enumerate(trajs) if tr is not None],
        "stat_quarter": quarter,
        "stat_half": half,
        "stat_final": final,
    }
    med_half = float(np.median(half)) if half else float("nan")
    med_final = float(np.median(final)) if final else float("nan")
    rep.summary = {
        "n_seeds": n_seeds,
        "divergences": len(divergences),
        "median_half": med_half,
        "median_final": med_final,
    }
    rep.criteria.append(
        CriterionResult(
            "C4.no-divergence",
            "no seed hits the blow-up guard",
            len(divergences) == 0,
            {"divergences": divergences},
        )
    )
    rep.criteria.append(
        CriterionResult(
            "C4.bounded",
            "ensemble median stat at T <= 2x median at T/2",
            bool(final) and med_final <= 2.0 * med_half,
            {"median_final": med_final, "median_half": med_half},
        )
    )
    return rep


def check_consistency(
    model: GameModel,
    cfg: SimConfig,
    est_init: EstimatorInit | None = None,
    n_seeds: int = 20,
    checkpoints: tuple = (200, 1000, 5000),
    threshold_frac: float = 0.2,
    T0: float = 1.0,
) -> DiagnosticsReport:
    """Parameter convergence proxy: ensemble median estimate error strictly
    decreasing across checkpoints, final median below a fraction of ||theta||."""
    if list(checkpoints) != sorted(checkpoints):
        raise ContractViolationError("checkpoints must be increasing")
    rep = DiagnosticsReport(experiment="consistency")
    T = max(cfg.T, float(checkpoints[-1]))
    run_cfg = SimConfig(
        T=T,
        h=cfg.h,
        seed=cfg.seed,
        x0=cfg.x0,
        dither_enabled=cfg.dither_enabled,
        record_stride=cfg.record_stride,
    )
    trajs, divergences = _run_ensemble(model, run_cfg, est_init, n_seeds, T0=T0)
    errs = {ck: [] for ck in checkpoints}
    for tr in trajs:
        if tr is None:
            continue
        for ck in checkpoints:
            idx = min(int(ck), len(tr.epoch_records) - 1)
            errs[ck].append(tr.epoch_records[idx].estimate_error)
    medians = {ck: float(np.median(v)) for ck, v in errs.items() if v}
    theta_norm = float(np.linalg.norm(model.theta))
    rep.per_seed = {"seed": list(range(n_seeds))}
    for ck in checkpoints:
        rep.per_seed[f"err_{ck}"] = errs[ck]
    rep.summary = {
        "theta_norm": theta_norm,
        "threshold": threshold_frac * theta_norm,
        "medians": medians,
        "divergences": len(divergences),
    }
    vals = [medians.get(ck, float("nan")) for ck in checkpoints]
    decreasing = all(b < a for a, b in zip(vals, vals[1:]))
    below = bool(vals) and vals[-1] <= threshold_frac * theta_norm
    if not cfg.dither_enabled:
        rep.notes.append(
            "excitation removed (dither disabled): convergence is allowed to fail"
        )
    rep.criteria.append(
        CriterionResult(
            "C5.monotone",
            "median estimate error strictly decreasing across checkpoints",
            decreasing,
            {"medians": vals},
        )
    )
    rep.criteria.append(
        CriterionResult(
            "C5.final",
            f"final median <= {threshold_frac} * ||theta||_F",
            below,
            {"final_median": vals[-1] if vals else None, "threshold": threshold_frac * theta_norm},
        )
    )
    return rep


def check_nash_value(
    model: GameModel,
    cfg: SimConfig,
    est_init: EstimatorInit | None = None,
    n_seeds: int = 20,
    rel_tol: float = 0.15,
    T0: float = 1.0,
) -> DiagnosticsReport:
    """Finite-T payoff average against the equilibrium value tr(D^T P1 D)."""
    sol = solve_game_are(model.A, model.B1, model.B2, model.Qw, model.R1, model.R2)
    if not sol:
        raise InapplicableExperimentError(
            f"true model has no stabilizing solution ({sol.reason})"
        )
    reference = nash_value(sol.P1, model.D)
    rep = DiagnosticsReport(experiment="nash-value")
    trajs, divergences = _run_ensemble(model, cfg, est_init, n_seeds, T0=T0)
    payoffs = [tr.payoff_average for tr in trajs if tr is not None]
    rel_errors = [abs(p - reference) / max(abs(reference), 1e-12) for p in payoffs]
    med_payoff = float(np.median(payoffs)) if payoffs else float("nan")
    med_rel = abs(med_payoff - reference) / max(abs(reference), 1e-12)
    rep.per_seed = {
        "seed": [i for i, tr in enumerate(trajs) if tr is not None],
        "payoff": payoffs,
        "rel_error": rel_errors,
    }
    rep.summary = {
        "reference": reference,
        "median_payoff": med_payoff,
        "median_rel_error": med_rel,
        "divergences": len(divergences),
    }
    rep.criteria.append(
        CriterionResult(
            "C6.median",
            f"ensemble median payoff within {rel_tol:.0%} of tr(D^T P D)",
            med_rel <= rel_tol,
            {"median_payoff": med_payoff, "reference": reference, "rel_error": med_rel},
        )
    )
    return rep


def check_nash_gap(
    model: GameModel,
    cfg: SimConfig,
    est_init: EstimatorInit | None = None,
    deviations: tuple = (0.3, -0.3),
    n_seeds: int = 20,
    T0: float = 1.0,
) -> DiagnosticsReport:
    """Spot check of the equilibrium property over a finite deviation set.

    Each Player-1 deviation u1 = u1* + K x must raise the median payoff and
    each Player-2 deviation must lower it, beyond the noise band
    slack = max(5% |reference|, 2 x IQR of the null-deviation ensemble).
    Inadmissible deviations (unstable true closed loop under Nash gains plus
    the deviation) are rejected.
    """
    sol = solve_game_are(model.A, model.B1, model.B2, model.Qw, model.R1, model.R2)
    if not sol:
        raise InapplicableExperimentError(
            f"true model has no stabilizing solution ({sol.reason})"
        )
    reference = nash_value(sol.P1, model.D)
    L1s, L2s = nash_gains(sol, model.B1, model.B2, model.R1, model.R2)
    n, m1, m2, _ = model.dims

    for player, K in _deviation_gains(deviations, m1, m2, n):
        Phi = model.A + model.B1 @ L1s + model.B2 @ L2s
        Phi = Phi + (model.B1 @ K if player == 1 else model.B2 @ K)
        if spectral_abscissa(Phi) >= 0:
            raise ContractViolationError(
                f"deviation {K.ravel()} of player {player} is inadmissible (unstable closed loop)"
            )

    rep = DiagnosticsReport(experiment="nash-gap")
    null_trajs, _ = _run_ensemble(model, cfg, est_init, n_seeds, T0=T0)
    null_payoffs = np.array([tr.payoff_average for tr in null_trajs if tr is not None])
    med_null = float(np.median(null_payoffs))
    q75, q25 = np.percentile(null_payoffs, [75, 25])
    slack = max(0.05 * abs(reference), 2.0 * float(q75 - q25))

    rep.per_seed = {"seed": list(range(len(null_payoffs))), "payoff_null": list(null_payoffs)}
    rep.summary = {
        "reference": reference,
        "median_null": med_null,
        "iqr_null": float(q75 - q25),
        "slack": slack,
    }

    for player, K in _deviation_gains(deviations, m1, m2, n):
        kwargs = {"deviation1": K} if player == 1 else {"deviation2": K}
        trajs, _ = _run_ensemble(model, cfg, est_init, n_seeds, T0=T0, **kwargs)
        payoffs = np.array([tr.payoff_average for tr in trajs if tr is not None])
        med = float(np.median(payoffs))
        rep.per_seed[f"payoff_p{player}_{K.ravel()[0]:+g}"] = list(payoffs)
        if player == 1:
            weak = med >= med_null - slack
            band = med >= med_null + slack
            weak_desc = "Player-1 deviation does not beat the equilibrium (median >= null - slack)"
            band_desc = "Player-1 deviation raises median payoff beyond the noise band"
        else:
            weak = med <= med_null + slack
            band = med <= med_null - slack
            weak_desc = "Player-2 deviation does not beat the equilibrium (median <= null + slack)"
            band_desc = "Player-2 deviation lowers median payoff beyond the noise band"
        obs = {"median_dev": med, "median_null": med_null, "slack": slack}
        tag = f"p{player}{K.ravel()[0]:+g}"
        rep.criteria.append(CriterionResult(f"C7.{tag}.gap", weak_desc, weak, obs))
        rep.criteria.append(CriterionResult(f"C7.{tag}.band", band_desc, band, obs))
    return rep


def _deviation_gains(deviations, m1, m2, n):
    """Scalar deviation factors -> per-player gain matrices (uniform entries)."""
    out = []
    for kd in deviations:
        out.append((1, float(kd) * np.ones((m1, n))))
    for kd in deviations:
        out.append((2, float(kd) * np.ones((m2, n))))
    return out


def check_dither_energy(
    h: float = 0.005,
    n_epochs: int = 200,
    n_seeds: int = 20,
    m: int = 1,
    seed: int = 0,
    milestones: tuple = (50, 200),
) -> DiagnosticsReport:
    """Dither energy decay: the empirical average of
    gamma_k^2 int_k^{k+1} |v(t)-v(k)|^2 dt tracks the analytic expectation
    (1/N) sum gamma_k^2 * m/2 and decreases with N."""
    if n_epochs < 50:
        raise ContractViolationError("n_epochs must be >= 50")
    milestones = tuple(sorted(set(list(milestones) + [n_epochs])))
    steps = int(round(1.0 / h))
    gammas = np.array([gamma_schedule(k) for k in range(1, n_epochs + 1)])

    per_seed_stats = {N: [] for N in milestones}
    for i in range(n_seeds):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed + i)))
        acc = 0.0
        partial = np.empty(n_epochs)
        for k in range(n_epochs):
            dv = rng.standard_normal((steps, m)) * np.sqrt(h)
            acc += gammas[k] ** 2 * dither_epoch_energy(dv, h)
            partial[k] = acc
        for N in milestones:
            per_seed_stats[N].append(partial[N - 1] / N)

    analytic = {
        N: float(np.sum(gammas[:N] ** 2) * (m / 2.0) / N) for N in milestones
    }
    medians = {N: float(np.median(per_seed_stats[N])) for N in milestones}

    rep = DiagnosticsReport(experiment="dither-energy")
    rep.per_seed = {"seed": list(range(n_seeds))}
    for N in milestones:
        rep.per_seed[f"stat_N{N}"] = per_seed_stats[N]
    rep.summary = {"analytic": analytic, "medians": medians}

    N_final = milestones[-1]
    within = abs(medians[N_final] - analytic[N_final]) <= 0.5 * analytic[N_final]
    rep.criteria.append(
        CriterionResult(
            "C8.analytic",
            "final median within 50% of the analytic expectation",
            within,
            {"median": medians[N_final], "analytic": analytic[N_final]},
        )
    )
    decreasing = all(
        medians[b] < medians[a] for a, b in zip(milestones, milestones[1:])
    )
    rep.criteria.append(
        CriterionResult(
            "C8.decay",
            "median statistic decreases across epoch milestones",
            decreasing,
            {"medians": medians},
        )
    )
    return rep
