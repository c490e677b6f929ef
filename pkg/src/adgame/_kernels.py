"""Compiled inner loop of the Euler-Maruyama closed-loop integrator.

One kernel call advances the coupled plant + WLS estimator over the steps of
a single epoch (gains and dither amplitude are constant within an epoch).
All Wiener increments are drawn by the caller so that stream handling and
reproducibility stay outside compiled code.

The estimator update mirrors ``estimator.wls_step`` with one cheaper guard:
instead of an eigenvalue floor after every step, the rank-one gain downdate
is clamped whenever it would destroy positive definiteness (the exact floor
is re-applied once per epoch by the caller).  The downdate
cov - a h (cov phi)(cov phi)^T keeps cov positive definite iff
a h phi^T cov phi < 1, so the clamp is a sufficient in-step guard.
"""

from __future__ import annotations

import numpy as np
from numba import njit

BLOWUP_LIMIT = 1.0e9


@njit(cache=True)
def run_epoch(
    x,  # (n,) state, mutated
    theta,  # (d, n) estimate, mutated
    cov,  # (d, d) gain matrix, mutated
    r,  # float cumulative excitation
    a,  # float current weight
    delta,  # weight-family exponent parameter
    h,  # step size
    gamma,  # dither amplitude for this epoch
    L1,  # (m1, n)
    L2,  # (m2, n)
    K1dev,  # (m1, n) additive deviation of player 1
    K2dev,  # (m2, n) additive deviation of player 2
    A,
    B1,
    B2,
    D,
    Qw,
    R1,
    R2,  # true plant and weights
    dw,  # (steps, p) plant Wiener increments
    dv1,  # (steps, m1) dither increments, player 1
    dv2,  # (steps, m2)
    update_est,  # bool: advance the WLS state
    payoff_acc,
    stat_acc,  # running integrals
    step0,  # global index of the first step in this call
    stride,  # record every stride-th global step
    rec_x,
    rec_u1,
    rec_u2,
    rec_payoff,
    rec_stat,
    rec_ptr,  # next free row in the record arrays
):
    n = x.shape[0]
    m1 = L1.shape[0]
    m2 = L2.shape[0]
    p = D.shape[1]
    d = theta.shape[0]
    steps = dw.shape[0]

    u1 = np.empty(m1)
    u2 = np.empty(m2)
    phi = np.empty(d)
    drift = np.empty(n)
    dx = np.empty(n)
    c = np.empty(d)
    va1 = np.zeros(m1)
    va2 = np.zeros(m2)

    guard_count = 0
    diverged = False
    e_const = 2.718281828459045

    for i in range(steps):
        # players' inputs with accumulated within-epoch dither
        for j in range(m1):
            s = gamma * va1[j]
            for q in range(n):
                s += (L1[j, q] + K1dev[j, q]) * x[q]
            u1[j] = s
        for j in range(m2):
            s = gamma * va2[j]
            for q in range(n):
                s += (L2[j, q] + K2dev[j, q]) * x[q]
            u2[j] = s

        for q in range(n):
            phi[q] = x[q]
        for j in range(m1):
            phi[n + j] = u1[j]
        for j in range(m2):
            phi[n + m1 + j] = u2[j]

        # payoff and stability integrands at the left endpoint
        pj = 0.0
        st = 0.0
        for q in range(n):
            s = 0.0
            for q2 in range(n):
                s += Qw[q, q2] * x[q2]
            pj += x[q] * s
            st += x[q] * x[q]
        for j in range(m1):
            s = 0.0
            for j2 in range(m1):
                s += R1[j, j2] * u1[j2]
            pj += u1[j] * s
            st += u1[j] * u1[j]
        for j in range(m2):
            s = 0.0
            for j2 in range(m2):
                s += R2[j, j2] * u2[j2]
            pj -= u2[j] * s
            st += u2[j] * u2[j]

        gstep = step0 + i
        if gstep % stride == 0:
            for q in range(n):
                rec_x[rec_ptr, q] = x[q]
            for j in range(m1):
                rec_u1[rec_ptr, j] = u1[j]
            for j in range(m2):
                rec_u2[rec_ptr, j] = u2[j]
            rec_payoff[rec_ptr] = payoff_acc
            rec_stat[rec_ptr] = stat_acc
            rec_ptr += 1

        payoff_acc += pj * h
        stat_acc += st * h

        # plant increment
        for q in range(n):
            s = 0.0
            for q2 in range(n):
                s += A[q, q2] * x[q2]
            for j in range(m1):
                s += B1[q, j] * u1[j]
            for j in range(m2):
                s += B2[q, j] * u2[j]
            drift[q] = s
        for q in range(n):
            s = drift[q] * h
            for q2 in range(p):
                s += D[q, q2] * dw[i, q2]
            dx[q] = s

        if update_est:
            for q in range(d):
                s = 0.0
                for q2 in range(d):
                    s += cov[q, q2] * phi[q2]
                c[q] = s
            ptc = 0.0
            pp = 0.0
            for q in range(d):
                ptc += phi[q] * c[q]
                pp += phi[q] * phi[q]
            # Euler overshoot guard: the update contracts the estimation
            # error by (1 - a h phi^T cov phi) along phi, so the effective
            # weight is clamped to keep that factor away from -1 (and the
            # covariance downdate positive definite).
            a_eff = a
            g = a * h * ptc
            if g >= 0.9:
                a_eff = 0.9 / (h * ptc)
                guard_count += 1
            # theta += a_eff * c (dx^T - theta^T phi h)
            for q2 in range(n):
                innov = dx[q2]
                for q in range(d):
                    innov -= theta[q, q2] * phi[q] * h
                for q in range(d):
                    theta[q, q2] += a_eff * c[q] * innov
            for q in range(d):
                for q2 in range(q, d):
                    v = cov[q, q2] - a_eff * h * c[q] * c[q2]
                    cov[q, q2] = v
                    cov[q2, q] = v
            r += pp * h
            lr = np.log(max(r, e_const))
            a = 1.0 / lr ** (1.0 + delta)

        for q in range(n):
            x[q] += dx[q]
        xb = 0.0
        for q in range(n):
            xb += x[q] * x[q]
        if xb > BLOWUP_LIMIT * BLOWUP_LIMIT:
            diverged = True
            steps = i + 1
            break

        for j in range(m1):
            va1[j] += dv1[i, j]
        for j in range(m2):
            va2[j] += dv2[i, j]

    return r, a, payoff_acc, stat_acc, rec_ptr, guard_count, diverged, steps


@njit(cache=True)
def dither_epoch_energy(dv, h):
    """int_k^{k+1} |v(t) - v(k)|^2 dt for one epoch of increments (left rule)."""
    steps = dv.shape[0]
    m = dv.shape[1]
    acc = np.zeros(m)
    total = 0.0
    for i in range(steps):
        s = 0.0
        for j in range(m):
            s += acc[j] * acc[j]
        total += s * h
        for j in range(m):
            acc[j] += dv[i, j]
    return total
