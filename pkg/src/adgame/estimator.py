"""Continuous-time weighted least squares with random regularization.

The estimator tracks theta (transpose convention theta^T = [A, B1, B2]) from
the plant increment dx = theta^T phi dt + D dw using the weighted update

    d theta = a(t) Qg(t) phi [dx^T - theta^T phi dt],
    d Qg    = -a(t) Qg(t) phi phi^T Qg(t) dt,
    a(t)    = 1 / f(r(t)),   r(t) = ||Qg(0)^{-1}|| + int |phi|^2 ds,

with f drawn from the slowly-increasing weight family (default
f(x) = log(max(x, e))^{1+delta}).  ``cov_gain`` is the paper-style gain
matrix Qg, renamed to avoid the state weight.

At each integer epoch the estimate is regularized: a candidate
theta(k) - cov_gain^{1/2} eta_k (eta_k uniform in the Frobenius unit ball) is
accepted over the incumbent beta whenever it improves the controllability
determinant Y by the factor (1 + gamma_reg), producing a piecewise-constant,
uniformly controllable family of estimated models.

Note the square-root sign: the search ball is scaled by cov_gain^{+1/2},
which shrinks with the gain and therefore preserves self-convergence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, NumericalFailureError
from .model import GameModel, kalman_controllability

__all__ = [
    "WeightFunction",
    "WlsState",
    "RegularizationState",
    "RegularizedEstimate",
    "wls_init",
    "wls_step",
    "regularize",
    "matrix_sqrt_spd",
    "split_theta",
    "estimate_error",
    "sample_unit_ball",
]

_PD_FLOOR = 1e-12


@dataclass(frozen=True)
class WeightFunction:
    """Member f(x) = log(max(x, e))^{1+delta} of the slowly-increasing family."""

    delta: float = 1.0

    def __post_init__(self):
        if self.delta <= 0:
            raise ContractViolationError("delta must be > 0")

    def __call__(self, x: float) -> float:
        return math.log(max(x, math.e)) ** (1.0 + self.delta)


@dataclass
class WlsState:
    """Running WLS estimate; single-owner, advanced along one trajectory."""

    theta: np.ndarray  # (n+m1+m2) x n
    cov_gain: np.ndarray  # (n+m1+m2) x (n+m1+m2), symmetric PD
    r: float
    a: float
    t: float
    f: WeightFunction
    dims: tuple[int, int, int, int]
    floor_activations: int = 0


def split_theta(theta: np.ndarray, dims) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Extract (A, B1, B2) from theta using theta^T = [A, B1, B2]."""
    n, m1, m2 = dims[0], dims[1], dims[2]
    thT = theta.T
    return thT[:, :n], thT[:, n : n + m1], thT[:, n + m1 : n + m1 + m2]


def wls_init(dims, theta0, cov0, f: WeightFunction | None = None) -> WlsState:
    """Initial state; theta0 must give a controllable (A(0), B(0)) pair."""
    f = f or WeightFunction()
    theta0 = np.asarray(theta0, dtype=float)
    cov0 = np.asarray(cov0, dtype=float)
    n, m1, m2 = dims[0], dims[1], dims[2]
    d = n + m1 + m2
    if theta0.shape != (d, n):
        raise ContractViolationError(f"theta0 must be {d}x{n}, got {theta0.shape}")
    if cov0.shape != (d, d) or np.linalg.norm(cov0 - cov0.T) > 1e-10 * (1 + np.linalg.norm(cov0)):
        raise ContractViolationError("cov0 must be symmetric")
    w = np.linalg.eigvalsh(cov0)
    if w.min() <= 0:
        raise ContractViolationError("cov0 must be positive definite")
    A0, B10, B20 = split_theta(theta0, dims)
    rank, _, _ = kalman_controllability(A0, np.hstack([B10, B20]))
    if rank != n:
        raise ContractViolationError("initial estimate (A(0), B(0)) is not controllable")
    r0 = float(1.0 / w.min())  # spectral norm of cov0^{-1}
    return WlsState(
        theta=theta0.copy(),
        cov_gain=cov0.copy(),
        r=r0,
        a=1.0 / f(r0),
        t=0.0,
        f=f,
        dims=tuple(dims),
    )


def wls_step(s: WlsState, phi: np.ndarray, dx: np.ndarray, h: float) -> WlsState:
    """One explicit-Euler step of the WLS differential equations.

    Consumes the plant's observed increment dx directly.  After the update
    the gain matrix is symmetrized and floored onto the PD cone if Euler
    broke positive definiteness (logged via ``floor_activations``).
    """
    if h <= 0:
        raise ContractViolationError("h must be > 0")
    phi = np.asarray(phi, dtype=float).ravel()
    dx = np.asarray(dx, dtype=float).ravel()
    c = s.cov_gain @ phi
    # Euler overshoot guard: a h phi^T cov phi must stay below 1 or the
    # discretized update amplifies the estimation error (and breaks PD of
    # the gain downdate); clamp the effective weight and log it.
    g = s.a * h * float(phi @ c)
    a_eff = s.a
    if g >= 0.9:
        a_eff = 0.9 / (h * float(phi @ c))
        s.floor_activations += 1
    innov = dx - (s.theta.T @ phi) * h  # row of dx^T - theta^T phi dt
    s.theta = s.theta + a_eff * np.outer(c, innov)
    s.cov_gain = s.cov_gain - (a_eff * h) * np.outer(c, c)
    s.cov_gain = (s.cov_gain + s.cov_gain.T) / 2
    w, V = np.linalg.eigh(s.cov_gain)
    if w.min() < _PD_FLOOR:
        s.cov_gain = (V * np.maximum(w, _PD_FLOOR)) @ V.T
        s.floor_activations += 1
    s.r += float(phi @ phi) * h
    s.a = 1.0 / s.f(s.r)
    s.t += h
    return s


def matrix_sqrt_spd(M: np.ndarray) -> np.ndarray:
    """Symmetric PD square root via the eigendecomposition."""
    M = np.asarray(M, dtype=float)
    if np.linalg.norm(M - M.T) > 1e-10 * (1 + np.linalg.norm(M)):
        raise ContractViolationError("matrix_sqrt_spd: input not symmetric")
    w, V = np.linalg.eigh((M + M.T) / 2)
    if w.min() <= 0:
        raise ContractViolationError("matrix_sqrt_spd: input not positive definite")
    return (V * np.sqrt(w)) @ V.T


def sample_unit_ball(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniform draw from the Frobenius-norm unit ball of matrices."""
    g = rng.standard_normal(shape)
    g /= np.linalg.norm(g)
    d = int(np.prod(shape))
    return g * rng.uniform() ** (1.0 / d)


@dataclass
class RegularizationState:
    """Incumbent perturbation beta_k and the acceptance bookkeeping."""

    beta: np.ndarray
    gamma_reg: float
    rng: np.random.Generator
    k: int = 0
    Y_current: float = 0.0
    acceptances: int = 0

    def __post_init__(self):
        if not (0.0 < self.gamma_reg < math.sqrt(2) - 1):
            raise ContractViolationError("gamma_reg must lie in (0, sqrt(2)-1)")
        if np.linalg.norm(self.beta) > 1.0 + 1e-12:
            raise ContractViolationError("beta must lie in the unit ball")


@dataclass(frozen=True)
class RegularizedEstimate:
    """Piecewise-constant regularized model, valid on the epoch (k, k+1]."""

    A_hat: np.ndarray
    B1_hat: np.ndarray
    B2_hat: np.ndarray
    epoch: int
    Y_value: float
    theta_bar: np.ndarray
    beta_accepted: bool


def _controllability_Y(theta_bar: np.ndarray, dims) -> float:
    A, B1, B2 = split_theta(theta_bar, dims)
    _, _, Y = kalman_controllability(A, np.hstack([B1, B2]))
    return Y


def regularize(
    s: WlsState, reg: RegularizationState, dims=None
) -> tuple[RegularizedEstimate, RegularizationState]:
    """Regularization step at integer epoch k = reg.k.

    Draws eta_k uniform in the unit ball and keeps whichever of
    theta(k) - cov_gain^{1/2} eta_k / theta(k) - cov_gain^{1/2} beta_{k-1}
    wins the Y acceptance test Y(k, eta_k) >= (1+gamma) Y(k, beta_{k-1}).
    """
    dims = tuple(dims) if dims is not None else s.dims
    try:
        sqrt_cov = matrix_sqrt_spd(s.cov_gain)
    except ContractViolationError as exc:
        raise NumericalFailureError(f"cov_gain square root failed: {exc}") from exc

    eta = sample_unit_ball(reg.rng, s.theta.shape)
    incumbent = s.theta - sqrt_cov @ reg.beta
    candidate = s.theta - sqrt_cov @ eta
    Y_inc = _controllability_Y(incumbent, dims)
    Y_cand = _controllability_Y(candidate, dims)

    accepted = Y_cand >= (1.0 + reg.gamma_reg) * Y_inc
    if accepted:
        reg.beta = eta
        reg.acceptances += 1
        theta_bar, Y = candidate, Y_cand
    else:
        theta_bar, Y = incumbent, Y_inc
    reg.Y_current = Y

    A_hat, B1_hat, B2_hat = split_theta(theta_bar, dims)
    est = RegularizedEstimate(
        A_hat=A_hat,
        B1_hat=B1_hat,
        B2_hat=B2_hat,
        epoch=reg.k,
        Y_value=Y,
        theta_bar=theta_bar,
        beta_accepted=accepted,
    )
    reg.k += 1
    return est, reg


def estimate_error(est, truth: GameModel) -> float:
    """Frobenius distance between estimated and true [A, B1, B2]."""
    if isinstance(est, RegularizedEstimate):
        stacked = np.hstack([est.A_hat, est.B1_hat, est.B2_hat])
    elif isinstance(est, WlsState):
        A, B1, B2 = split_theta(est.theta, est.dims)
        stacked = np.hstack([A, B1, B2])
    else:
        stacked = np.hstack([np.asarray(b, dtype=float) for b in est])
    true_stacked = np.hstack([truth.A, truth.B1, truth.B2])
    return float(np.linalg.norm(stacked - true_stacked))
