"""Closed-loop SDE simulation of the adaptive game.

Integrates dx = (A x + B1 u1 + B2 u2) dt + D dw with Euler-Maruyama at a
fixed step, drives the WLS estimator on the plant's own increment, and
refreshes the regularized estimate and the players' gains at every integer
epoch (estimates computed at time k apply on the half-open interval
(k, k+1], so the step landing exactly on k still uses the old gains).

Three mutually independent Wiener processes (plant noise w, dithers v1, v2)
plus the regularization draws eta are derived from disjoint substreams of a
single master seed, which makes every trajectory a pure function of
(config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ContractViolationError, DivergenceError
from .estimator import (
    RegularizationState,
    WeightFunction,
    WlsState,
    estimate_error,
    regularize,
    wls_init,
)
from .model import GameModel, is_controllable, spectral_abscissa, validate_model
from .strategy import closed_loop, gamma_schedule, select_gains

__all__ = [
    "SimConfig",
    "EstimatorInit",
    "WienerStreams",
    "EpochRecord",
    "Trajectory",
    "simulate_adaptive",
    "simulate_fixed_gains",
    "payoff_estimate",
    "default_theta0",
]

_PD_FLOOR = 1e-12


@dataclass(frozen=True)
class SimConfig:
    """Integration grid, seed and recording policy for one trajectory."""

    T: float
    h: float
    seed: int
    x0: np.ndarray
    dither_enabled: bool = True
    record_stride: int = 10

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).ravel())
        if not (0 < self.h <= 0.1):
            raise ContractViolationError("h must lie in (0, 0.1]")
        if self.T < 1:
            raise ContractViolationError("T must be >= 1")
        spe = 1.0 / self.h
        if abs(spe - round(spe)) > 1e-9:
            raise ContractViolationError("epoch length 1 must be an integer multiple of h")
        if self.record_stride < 1:
            raise ContractViolationError("record_stride must be >= 1")

    @property
    def steps_per_epoch(self) -> int:
        return int(round(1.0 / self.h))

    @property
    def total_steps(self) -> int:
        return int(round(self.T / self.h))


@dataclass(frozen=True)
class EstimatorInit:
    """Initial WLS data: theta0 (controllable), gain scale, weight exponent."""

    theta0: np.ndarray
    cov0_scale: float = 1.0
    delta: float = 1.0
    gamma_reg: float = 0.2


def default_theta0(dims) -> np.ndarray:
    """A deterministic controllable initial estimate for given dimensions.

    A(0) is the upper shift matrix and B(0) is an alternating-sign pattern;
    the pair is controllable for all shipped dimension combinations.
    """
    n, m1, m2 = dims[0], dims[1], dims[2]
    A0 = np.diag(np.ones(n - 1), 1) if n > 1 else np.zeros((1, 1))
    B0 = np.zeros((n, m1 + m2))
    for j in range(m1 + m2):
        for i in range(n):
            B0[i, j] = 1.0 if (i + j) % 2 == 0 else -1.0
    B0[n - 1, :] = 1.0
    theta0 = np.hstack([A0, B0]).T
    if not is_controllable(A0, B0):
        raise ContractViolationError("default theta0 is not controllable for these dims")
    return theta0


class WienerStreams:
    """Independent substreams (w, v1, v2, eta) split from one master seed.

    Substreams come from ``numpy.random.SeedSequence.spawn`` in a fixed
    order, so adding a stream later can never shift the existing ones.
    """

    def __init__(self, seed: int):
        ss = np.random.SeedSequence(seed)
        children = ss.spawn(4)
        self.w = np.random.Generator(np.random.PCG64(children[0]))
        self.v1 = np.random.Generator(np.random.PCG64(children[1]))
        self.v2 = np.random.Generator(np.random.PCG64(children[2]))
        self.eta = np.random.Generator(np.random.PCG64(children[3]))


@dataclass(frozen=True)
class EpochRecord:
    k: int
    mode: str
    gamma_k: float
    estimate_error: float
    Y_value: float
    beta_accepted: bool
    cov_trace: float
    phi_abscissa: float
    L1_norm: float
    L2_norm: float


@dataclass
class Trajectory:
    """Time-gridded record of one closed-loop run.

    ``running_payoff`` and ``stability_integral`` hold the integrals up to
    each recorded time; the CSV emits their time averages.
    """

    times: np.ndarray
    states: np.ndarray
    u1s: np.ndarray
    u2s: np.ndarray
    running_payoff: np.ndarray
    stability_integral: np.ndarray
    epoch_records: list[EpochRecord]
    payoff_average: float
    stability_average: float
    final_estimate_error: float | None
    diverged: bool
    guard_activations: int = 0

    def stability_stat(self, upto: float | None = None) -> float:
        """(1/t) * integral of |x|^2+|u1|^2+|u2|^2 at the last record <= upto."""
        if upto is None:
            return self.stability_average
        idx = int(np.searchsorted(self.times, upto, side="right")) - 1
        idx = max(idx, 1)
        t = self.times[idx]
        return float(self.stability_integral[idx] / t) if t > 0 else 0.0

    def epoch_for_time(self, t: float) -> int:
        if not self.epoch_records:
            return -1
        return min(int(np.floor(t + 1e-9)), len(self.epoch_records) - 1)

    def to_csv(self, path_or_buf) -> None:
        """Trajectory CSV with 12-significant-digit decimals."""
        n = self.states.shape[1]
        m1 = self.u1s.shape[1]
        m2 = self.u2s.shape[1]
        cols = (
            ["t"]
            + [f"x_{i+1}" for i in range(n)]
            + [f"u1_{i+1}" for i in range(m1)]
            + [f"u2_{i+1}" for i in range(m2)]
            + ["running_payoff", "estimate_error", "mode", "gamma_k", "stability_stat"]
        )
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            fh.write(",".join(cols) + "\n")
            for i, t in enumerate(self.times):
                row = [f"{t:.12g}"]
                row += [f"{v:.12g}" for v in self.states[i]]
                row += [f"{v:.12g}" for v in self.u1s[i]]
                row += [f"{v:.12g}" for v in self.u2s[i]]
                avg_p = self.running_payoff[i] / t if t > 0 else 0.0
                avg_s = self.stability_integral[i] / t if t > 0 else 0.0
                ke = self.epoch_for_time(t)
                if ke >= 0:
                    er = self.epoch_records[ke]
                    row += [f"{avg_p:.12g}", f"{er.estimate_error:.12g}", er.mode, f"{er.gamma_k:.12g}"]
                else:
                    row += [f"{avg_p:.12g}", "", "fixed", "0"]
                row.append(f"{avg_s:.12g}")
                fh.write(",".join(row) + "\n")
        finally:
            if own:
                fh.close()

    def epochs_to_csv(self, path_or_buf) -> None:
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            fh.write(
                "epoch,mode,gamma_k,estimate_error,Y_value,beta_accepted,"
                "cov_trace,phi_abscissa,L1_norm,L2_norm\n"
            )
            for er in self.epoch_records:
                fh.write(
                    f"{er.k},{er.mode},{er.gamma_k:.12g},{er.estimate_error:.12g},"
                    f"{er.Y_value:.12g},{int(er.beta_accepted)},{er.cov_trace:.12g},"
                    f"{er.phi_abscissa:.12g},{er.L1_norm:.12g},{er.L2_norm:.12g}\n"
                )
        finally:
            if own:
                fh.close()


def _record_count(total_steps: int, stride: int) -> int:
    return (total_steps + stride - 1) // stride


def _apply_pd_floor(wls: WlsState) -> None:
    w, V = np.linalg.eigh(wls.cov_gain)
    if w.min() < _PD_FLOOR:
        wls.cov_gain = (V * np.maximum(w, _PD_FLOOR)) @ V.T
        wls.floor_activations += 1


def simulate_adaptive(
    model: GameModel,
    cfg: SimConfig,
    est_init: EstimatorInit | None = None,
    T0: float = 1.0,
    deviation1: np.ndarray | None = None,
    deviation2: np.ndarray | None = None,
    gain_hook=None,
    gamma_floor: int = 2,
) -> Trajectory:
    """Full adaptive pipeline: WLS + regularization + per-epoch gains + dither.

    ``deviation1``/``deviation2`` add a fixed extra feedback K x to the
    corresponding player's applied input (used by the Nash-gap experiments).
    ``gain_hook(k, gains) -> gains`` is a test hook for forcing gains.
    """
    report = validate_model(model)
    if report:
        raise ContractViolationError("invalid model: " + "; ".join(report))
    n, m1, m2, p = model.dims
    if est_init is None:
        est_init = EstimatorInit(theta0=default_theta0(model.dims))
    if cfg.x0.shape != (n,):
        raise ContractViolationError("x0 dimension mismatch")

    streams = WienerStreams(cfg.seed)
    d = n + m1 + m2
    wls = wls_init(
        model.dims,
        est_init.theta0,
        est_init.cov0_scale * np.eye(d),
        WeightFunction(est_init.delta),
    )
    reg = RegularizationState(
        beta=np.zeros((d, n)), gamma_reg=est_init.gamma_reg, rng=streams.eta
    )

    K1dev = np.zeros((m1, n)) if deviation1 is None else np.asarray(deviation1, dtype=float)
    K2dev = np.zeros((m2, n)) if deviation2 is None else np.asarray(deviation2, dtype=float)

    total_steps = cfg.total_steps
    spe = cfg.steps_per_epoch
    stride = cfg.record_stride
    n_rec = _record_count(total_steps, stride)
    rec_x = np.empty((n_rec, n))
    rec_u1 = np.empty((n_rec, m1))
    rec_u2 = np.empty((n_rec, m2))
    rec_payoff = np.empty(n_rec)
    rec_stat = np.empty(n_rec)

    x = cfg.x0.copy()
    payoff_acc = 0.0
    stat_acc = 0.0
    rec_ptr = 0
    guard_total = 0
    steps_done = 0
    epoch_records: list[EpochRecord] = []
    diverged = False
    sqh = np.sqrt(cfg.h)

    k = 0
    while steps_done < total_steps and not diverged:
        est, reg = regularize(wls, reg)
        gains = select_gains(est, model.Qw, model.R1, model.R2, T0=T0)
        if gain_hook is not None:
            gains = gain_hook(k, gains)
        gamma = gamma_schedule(k, gamma_floor) if cfg.dither_enabled else 0.0

        steps = min(spe, total_steps - steps_done)
        dw = streams.w.standard_normal((steps, p)) * sqh
        dv1 = streams.v1.standard_normal((steps, m1)) * sqh
        dv2 = streams.v2.standard_normal((steps, m2)) * sqh

        (wls.r, wls.a, payoff_acc, stat_acc, rec_ptr, guard, div, done) = _kernels.run_epoch(
            x,
            wls.theta,
            wls.cov_gain,
            wls.r,
            wls.a,
            est_init.delta,
            cfg.h,
            gamma,
            np.ascontiguousarray(gains.L1),
            np.ascontiguousarray(gains.L2),
            K1dev,
            K2dev,
            model.A,
            model.B1,
            model.B2,
            model.D,
            model.Qw,
            model.R1,
            model.R2,
            dw,
            dv1,
            dv2,
            True,
            payoff_acc,
            stat_acc,
            steps_done,
            stride,
            rec_x,
            rec_u1,
            rec_u2,
            rec_payoff,
            rec_stat,
            rec_ptr,
        )
        guard_total += guard
        diverged = bool(div)
        steps_done += done
        wls.t += done * cfg.h
        _apply_pd_floor(wls)

        epoch_records.append(
            EpochRecord(
                k=k,
                mode=gains.mode.value,
                gamma_k=gamma,
                estimate_error=estimate_error(est, model),
                Y_value=est.Y_value,
                beta_accepted=est.beta_accepted,
                cov_trace=float(np.trace(wls.cov_gain)),
                phi_abscissa=spectral_abscissa(closed_loop(est, gains)),
                L1_norm=float(np.linalg.norm(gains.L1)),
                L2_norm=float(np.linalg.norm(gains.L2)),
            )
        )
        k += 1

    t_end = steps_done * cfg.h
    traj = Trajectory(
        times=np.arange(rec_ptr) * (stride * cfg.h),
        states=rec_x[:rec_ptr],
        u1s=rec_u1[:rec_ptr],
        u2s=rec_u2[:rec_ptr],
        running_payoff=rec_payoff[:rec_ptr],
        stability_integral=rec_stat[:rec_ptr],
        epoch_records=epoch_records,
        payoff_average=payoff_acc / t_end if t_end > 0 else 0.0,
        stability_average=stat_acc / t_end if t_end > 0 else 0.0,
        final_estimate_error=epoch_records[-1].estimate_error if epoch_records else None,
        diverged=diverged,
        guard_activations=guard_total,
    )
    if diverged:
        raise DivergenceError(f"state blow-up at t={t_end:.3f}", trajectory=traj)
    return traj


def simulate_fixed_gains(
    model: GameModel,
    cfg: SimConfig,
    L1: np.ndarray,
    L2: np.ndarray,
    check_stability: bool = True,
) -> Trajectory:
    """Constant-gain integrator without the estimator (oracle/deviation runs)."""
    report = validate_model(model)
    if report:
        raise ContractViolationError("invalid model: " + "; ".join(report))
    n, m1, m2, p = model.dims
    L1 = np.atleast_2d(np.asarray(L1, dtype=float))
    L2 = np.atleast_2d(np.asarray(L2, dtype=float))
    Phi = model.A + model.B1 @ L1 + model.B2 @ L2
    unstable = spectral_abscissa(Phi) >= 0
    if unstable and check_stability:
        raise ContractViolationError(
            "closed loop is not stable; pass check_stability=False to accept divergence risk"
        )

    streams = WienerStreams(cfg.seed)
    total_steps = cfg.total_steps
    stride = cfg.record_stride
    n_rec = _record_count(total_steps, stride)
    rec_x = np.empty((n_rec, n))
    rec_u1 = np.empty((n_rec, m1))
    rec_u2 = np.empty((n_rec, m2))
    rec_payoff = np.empty(n_rec)
    rec_stat = np.empty(n_rec)

    x = cfg.x0.copy()
    dummy_theta = np.zeros((n + m1 + m2, n))
    dummy_cov = np.eye(n + m1 + m2)
    zeros1 = np.zeros((m1, n))
    zeros2 = np.zeros((m2, n))
    payoff_acc = 0.0
    stat_acc = 0.0
    rec_ptr = 0
    steps_done = 0
    diverged = False
    sqh = np.sqrt(cfg.h)

    spe = cfg.steps_per_epoch
    while steps_done < total_steps and not diverged:
        steps = min(spe, total_steps - steps_done)
        dw = streams.w.standard_normal((steps, p)) * sqh
        dv1 = np.zeros((steps, m1))
        dv2 = np.zeros((steps, m2))
        (_, _, payoff_acc, stat_acc, rec_ptr, _, div, done) = _kernels.run_epoch(
            x,
            dummy_theta,
            dummy_cov,
            1.0,
            1.0,
            1.0,
            cfg.h,
            0.0,
            np.ascontiguousarray(L1),
            np.ascontiguousarray(L2),
            zeros1,
            zeros2,
            model.A,
            model.B1,
            model.B2,
            model.D,
            model.Qw,
            model.R1,
            model.R2,
            dw,
            dv1,
            dv2,
            False,
            payoff_acc,
            stat_acc,
            steps_done,
            stride,
            rec_x,
            rec_u1,
            rec_u2,
            rec_payoff,
            rec_stat,
            rec_ptr,
        )
        diverged = bool(div)
        steps_done += done

    t_end = steps_done * cfg.h
    traj = Trajectory(
        times=np.arange(rec_ptr) * (stride * cfg.h),
        states=rec_x[:rec_ptr],
        u1s=rec_u1[:rec_ptr],
        u2s=rec_u2[:rec_ptr],
        running_payoff=rec_payoff[:rec_ptr],
        stability_integral=rec_stat[:rec_ptr],
        epoch_records=[],
        payoff_average=payoff_acc / t_end if t_end > 0 else 0.0,
        stability_average=stat_acc / t_end if t_end > 0 else 0.0,
        final_estimate_error=None,
        diverged=diverged,
    )
    if diverged:
        raise DivergenceError(f"state blow-up at t={t_end:.3f}", trajectory=traj)
    return traj


def payoff_estimate(traj: Trajectory, model: GameModel) -> float:
    """Finite-T payoff average from the recorded grid (left-endpoint rule)."""
    if traj.times.size == 0:
        raise ContractViolationError("empty trajectory")
    if traj.times.size < 2:
        x = traj.states[0]
        u1 = traj.u1s[0]
        u2 = traj.u2s[0]
        return float(x @ model.Qw @ x + u1 @ model.R1 @ u1 - u2 @ model.R2 @ u2)
    dt = traj.times[1] - traj.times[0]
    T = traj.times[-1] + dt
    vals = (
        np.einsum("ij,jk,ik->i", traj.states, model.Qw, traj.states)
        + np.einsum("ij,jk,ik->i", traj.u1s, model.R1, traj.u1s)
        - np.einsum("ij,jk,ik->i", traj.u2s, model.R2, traj.u2s)
    )
    return float(vals.sum() * dt / T)
