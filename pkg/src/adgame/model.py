"""Game data model and dense linear-algebra primitives.

Defines the two-player zero-sum LQ game plant (state matrix, the two input
matrices, noise gain) together with the quadratic weights, plus the small
dense kernels every other module builds on: spectral abscissa, matrix
exponential, the finite-horizon controllability Gramian

    W(0, T0) = int_0^T0  e^{-A t} B (e^{-A t} B)^T dt,

and the Kalman controllability test with its determinant statistic

    Y = det( sum_{i=0}^{n-1} A^i B B^T (A^i)^T ).

All functions here are pure; arrays are treated as immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .errors import NumericalFailureError

__all__ = [
    "GameModel",
    "validate_model",
    "spectral_abscissa",
    "matrix_exponential",
    "controllability_gramian",
    "kalman_controllability",
    "controllability_threshold",
    "is_controllable",
]


def _as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    return m


@dataclass(frozen=True)
class GameModel:
    """True plant matrices, noise gain and quadratic payoff weights.

    Player 1 (input matrix ``B1``, weight ``R1``) minimizes the time-average
    quadratic payoff; Player 2 (``B2``, ``R2``) maximizes it.  ``Qw`` is the
    state weight (named to avoid clashing with the estimator's gain matrix).
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    D: np.ndarray
    Qw: np.ndarray
    R1: np.ndarray
    R2: np.ndarray

    def __post_init__(self):
        for name in ("A", "B1", "B2", "D", "Qw", "R1", "R2"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name)))

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """(n, m1, m2, p)."""
        return (
            self.A.shape[0],
            self.B1.shape[1],
            self.B2.shape[1],
            self.D.shape[1],
        )

    @property
    def B(self) -> np.ndarray:
        """Stacked input matrix [B1, B2]."""
        return np.hstack([self.B1, self.B2])

    @property
    def theta(self) -> np.ndarray:
        """True parameter matrix, transpose convention: theta^T = [A, B1, B2]."""
        return np.hstack([self.A, self.B1, self.B2]).T


def validate_model(m: GameModel) -> list[str]:
    """Return the list of violated invariants (empty iff admissible)."""
    report: list[str] = []
    n = m.A.shape[0]
    if m.A.shape != (n, n):
        report.append("A not square")
    for name, mat, rows in (("B1", m.B1, n), ("B2", m.B2, n), ("D", m.D, n)):
        if mat.shape[0] != rows:
            report.append(f"dimension mismatch {name}")
    if m.Qw.shape != (n, n):
        report.append("dimension mismatch Qw")
    elif np.linalg.norm(m.Qw - m.Qw.T) > 1e-12 * max(np.linalg.norm(m.Qw), 1.0):
        report.append("Qw not symmetric")
    for name, R, cols in (("R1", m.R1, m.B1.shape[1]), ("R2", m.R2, m.B2.shape[1])):
        if R.shape != (cols, cols):
            report.append(f"dimension mismatch {name}")
            continue
        if np.linalg.norm(R - R.T) > 1e-12 * max(np.linalg.norm(R), 1.0):
            report.append(f"{name} not symmetric")
        elif np.linalg.eigvalsh((R + R.T) / 2).min() <= 0:
            report.append(f"{name} not positive definite")
    return report


def spectral_abscissa(M: np.ndarray) -> float:
    """Largest real part over the eigenvalues of a square matrix."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("spectral_abscissa needs a square matrix")
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"eigenvalue iteration failed: {exc}") from exc
    return float(ev.real.max())


def matrix_exponential(M: np.ndarray, t: float = 1.0) -> np.ndarray:
    """e^{M t} by scaling-and-squaring (scipy backend)."""
    M = np.asarray(M, dtype=float)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    E = linalg.expm(M * t)
    if not np.all(np.isfinite(E)):
        raise NumericalFailureError("matrix exponential overflowed")
    return E


def controllability_gramian(A: np.ndarray, B: np.ndarray, T0: float) -> np.ndarray:
    """Finite-horizon Gramian of the reversed-time pair, W(0, T0).

    Computed by adaptive quadrature of e^{-A tau} B (e^{-A tau} B)^T, which
    stays valid for unstable A (no Lyapunov-equation shortcut).  The result
    is exactly symmetrized; it is positive definite iff (A, B) is
    controllable.
    """
    A = _as_matrix(A)
    B = _as_matrix(B)
    if T0 <= 0:
        raise ValueError("T0 must be > 0")

    def integrand(tau: float) -> np.ndarray:
        EB = linalg.expm(-A * tau) @ B
        return EB @ EB.T

    W, err = integrate.quad_vec(integrand, 0.0, T0, epsrel=1e-10, epsabs=1e-12)
    if not np.all(np.isfinite(W)):
        raise NumericalFailureError("Gramian quadrature did not converge")
    return (W + W.T) / 2


def controllability_threshold(A: np.ndarray, B: np.ndarray) -> float:
    """Scale-aware singular-value cutoff for the controllability rank decision."""
    return 1e-8 * (1.0 + np.linalg.norm(A) + np.linalg.norm(B))


def kalman_controllability(A: np.ndarray, B: np.ndarray) -> tuple[int, float, float]:
    """Kalman rank test plus the Gramian-sum determinant statistic.

    Returns ``(rank, min_sv, Y)`` where ``rank`` and ``min_sv`` come from the
    block matrix [B, AB, ..., A^{n-1}B] and
    Y = det(sum_{i<n} A^i B B^T (A^i)^T).
    """
    A = _as_matrix(A)
    B = _as_matrix(B)
    n = A.shape[0]
    blocks = []
    G = np.zeros((n, n))
    AiB = B.copy()
    for _ in range(n):
        blocks.append(AiB)
        G += AiB @ AiB.T
        AiB = A @ AiB
    C = np.hstack(blocks)
    sv = np.linalg.svd(C, compute_uv=False)
    tol = controllability_threshold(A, B)
    rank = int(np.count_nonzero(sv > tol))
    min_sv = float(sv.min()) if sv.size else 0.0
    Y = float(np.linalg.det(G))
    return rank, min_sv, Y


def is_controllable(A: np.ndarray, B: np.ndarray) -> bool:
    """True iff the pair passes the scale-aware Kalman rank test."""
    A = _as_matrix(A)
    rank, _, _ = kalman_controllability(A, B)
    return rank == A.shape[0]
