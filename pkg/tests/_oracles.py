"""Independent reference computations used to cross-check the library.

Nothing here imports solver internals; the LQR oracle is a plain
Newton-Kleinman iteration seeded from scipy's own ARE solver, the
controllability oracles are textbook formulas.
"""

import numpy as np
import scipy.linalg


def newton_lqr(A, B, Q, R, tol=1e-13, max_iter=100):
    """Stabilizing solution of A^T P + P A + Q - P B R^{-1} B^T P = 0.

    Newton-Kleinman: given a stabilizing gain K_j, solve the Lyapunov
    equation (A - B K_j)^T P + P (A - B K_j) = -(Q + K_j^T R K_j) and set
    K_{j+1} = R^{-1} B^T P.  Quadratic convergence from any stabilizing
    start; the start comes from scipy's generalized-eigenvalue ARE path,
    which shares no code with the library's ordered-Schur construction.
    """
    P = scipy.linalg.solve_continuous_are(A, B, Q, R)
    K = np.linalg.solve(R, B.T @ P)
    for _ in range(max_iter):
        Acl = A - B @ K
        rhs = -(Q + K.T @ R @ K)
        P = scipy.linalg.solve_lyapunov(Acl.T, rhs)
        P = (P + P.T) / 2
        K_new = np.linalg.solve(R, B.T @ P)
        if np.linalg.norm(K_new - K) <= tol * (1 + np.linalg.norm(K)):
            K = K_new
            break
        K = K_new
    return P


def random_controllable_pair(rng, n, m):
    """Draw (A, B) until the Kalman matrix has full rank.

    A uses the 1/sqrt(n) Ginibre normalization so its spectral radius stays
    near one regardless of n; without it, finite-horizon Gramians of the
    reversed-time pair become too ill-conditioned to invert meaningfully.
    """
    while True:
        A = rng.standard_normal((n, n)) / np.sqrt(n)
        B = rng.standard_normal((n, m))
        ctrb = np.hstack([np.linalg.matrix_power(A, i) @ B for i in range(n)])
        if np.linalg.matrix_rank(ctrb) == n:
            return A, B


def random_spd(rng, n, scale=1.0):
    M = rng.standard_normal((n, n))
    return scale * (M @ M.T + n * np.eye(n))
