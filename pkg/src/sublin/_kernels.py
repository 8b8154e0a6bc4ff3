"""Compiled kernel estimators and the estimator-mode kernel training loop."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ._core import amplification_plan, charge, clip, geometric, mw_log_factor, sample_cumulative, seed_stream

POLYNOMIAL, GAUSSIAN = 0, 1


@njit(cache=True)
def _inner_estimate(x, y, cum, total):
    # x(j) ||y||^2 / y(j) with j ~ y(j)^2 / ||y||^2
    j = sample_cumulative(cum, total)
    return x[j] * total / y[j]


@njit(cache=True)
def _kernel_draw(kind, q, s, rho, x, y, cum, total, xsq):
    if kind == POLYNOMIAL:
        out = 1.0
        for _ in range(q):
            out *= _inner_estimate(x, y, cum, total)
        return out
    # randomized Taylor series of exp(x.y / s^2) with a geometric proposal over the term index
    m = geometric(1.0 - rho) - 1
    w = 1.0 / (1.0 - rho)
    for i in range(1, m + 1):
        w *= _inner_estimate(x, y, cum, total) / (s * s * rho * i)
    return math.exp(-(xsq + total) / (2.0 * s * s)) * w


@njit(cache=True)
def kernel_draws(kind, q, s, rho, x, y, count, seed):
    seed_stream(seed)
    cum = np.cumsum(y * y)
    total = cum[-1]
    xsq = np.dot(x, x)
    out = np.empty(count)
    for i in range(count):
        out[i] = _kernel_draw(kind, q, s, rho, x, y, cum, total, xsq)
    return out


@njit(cache=True)
def _exact_kernel(kind, q, s, x, y):
    if kind == POLYNOMIAL:
        return np.dot(x, y) ** q
    diff = x - y
    return math.exp(-np.dot(diff, diff) / (2.0 * s * s))


@njit(cache=True)
def kernel_estimator_loop(X, signs, kind, q, s, rho, T, eta, step, alpha, c_prep, c_dh, c_lazy, seed):
    """Primal-dual loop whose payoffs are running sums of kernel estimates.

    Row i stands for signs[i] * Psi(X[i]). The dual iterate lives in feature
    space as step * sum of picked rows; its exact norm is tracked through
    exact kernel sums.
    """
    seed_stream(seed)
    n, d = X.shape
    picks = np.empty(T, dtype=np.int64)
    norms = np.empty(T)
    lw = np.zeros(n)
    est_sum = np.zeros(n)
    exact_sum = np.zeros(n)
    ynorm2 = 0.0
    lo = np.zeros(4, dtype=np.int64)
    hi = np.zeros(4, dtype=np.int64)
    mon = np.zeros(1)
    cums = np.empty((n, d))
    totals = np.empty(n)
    sq = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(d):
            acc += X[i, j] * X[i, j]
            cums[i, j] = acc
        totals[i] = acc
        sq[i] = acc
    cum = np.empty(n)
    bound = 1.0 / eta
    dh_n = math.ceil(c_dh * math.sqrt(n))
    for r in range(T):
        per_call = c_lazy * r
        lwmax = lw.max()
        tot = 0.0
        for i in range(n):
            tot += math.exp(2.0 * alpha * (lw[i] - lwmax))
            cum[i] = tot
        k, ps = amplification_plan(min(1.0, math.sqrt(tot / n)))
        att = geometric(ps)
        mon[0] += att
        charge(lo, hi, 1, dh_n * per_call)
        charge(lo, hi, 0, math.ceil(att * (k + 1) * c_prep) * per_call)
        i_t = sample_cumulative(cum, tot)
        picks[r] = i_t
        nrm = math.sqrt(max(ynorm2, 0.0))
        norms[r] = nrm
        c = max(1.0, nrm)
        for i in range(n):
            v = clip(step * est_sum[i] / c, bound)
            lw[i] += mw_log_factor(v, eta)
        # extend the dual iterate by the picked feature vector
        ynorm2 += 2.0 * step * step * exact_sum[i_t] + step * step * _exact_kernel(kind, q, s, X[i_t], X[i_t])
        row = X[i_t]
        for i in range(n):
            sign = signs[i] * signs[i_t]
            exact_sum[i] += sign * _exact_kernel(kind, q, s, X[i], row)
            if totals[i_t] > 0.0:
                est_sum[i] += sign * _kernel_draw(kind, q, s, rho, X[i], row, cums[i_t], totals[i_t], sq[i])
            else:
                est_sum[i] += sign * _exact_kernel(kind, q, s, X[i], row)
        charge(lo, hi, 3, d)
    return picks, norms, lo, hi, mon
