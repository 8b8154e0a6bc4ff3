"""Compiled primal-dual training loops.

One loop covers the linear and quadratic objectives, the exact-norm and
estimated-norm dual paths, and the amplified and classical primal samplers.
Rows are handled per group of identical rows, which leaves the sampled laws
unchanged while host work scales with the number of distinct rows.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ._core import (
    amplification_plan,
    bit_counts,
    charge,
    clip,
    geometric,
    median_of_means,
    mw_log_factor,
    sample_cumulative,
    seed_stream,
    seed_uniforms,
)

PREP, MAXF, NORM, DIRECT = 0, 1, 2, 3
LINEAR, QUADRATIC = 0, 1
LAZY_PROJECTION, RUNNING_AVERAGE = 0, 1
AMPLIFIED, CLASSICAL = 0, 1
EXACT_NORM, ESTIMATED_NORM = 0, 1

# scalar monitor slots
MON_PV, MON_PV2, MON_XW, MON_ATTEMPTS, MON_PAYOFF = 0, 1, 2, 3, 4


@njit(cache=True)
def primal_dual_loop(
    R, cnt, memb_ptr, memb, b, row_ptr, row_idx, row_val, row_sq,
    n, T, eta, step, objective, dual_mode, primal_mode, column_mode, alpha,
    c_prep, c_dh, c_lazy, grover_calls, tb, med_runs, bits,
    monitor, seed,
):
    seed_stream(seed)
    G, d = R.shape
    picks = np.empty(T, dtype=np.int64)
    norms = np.empty(T)
    js = np.empty(T, dtype=np.int64)
    scales = np.zeros(T)
    offsets = np.zeros(T)
    lw = np.zeros(G)
    y = np.zeros(d)
    ynorm2 = 0.0
    in_supp = np.zeros(d, dtype=np.bool_)
    supp = np.empty(d, dtype=np.int64)
    n_supp = 0
    lo = np.zeros(4, dtype=np.int64)
    hi = np.zeros(4, dtype=np.int64)
    mon = np.zeros(5)
    sum_v = np.zeros(G)
    wsum = np.zeros(d if monitor else 0)
    est_log = np.zeros((T if monitor and column_mode == ESTIMATED_NORM else 0, 3))
    cum = np.empty(G)
    p = np.empty(G)
    cum_y = np.empty(d)
    ests = np.empty(med_runs)
    F = np.empty(d)
    ubuf = np.empty(4096)
    ustate = np.zeros(5, dtype=np.uint64)
    seed_uniforms(ubuf, ustate)
    bound = 1.0 / eta
    dh_n = math.ceil(c_dh * math.sqrt(n))
    dh_d = math.ceil(c_dh * math.sqrt(d))
    qflag = 1.0 if objective == QUADRATIC else 0.0

    for r in range(T):
        # measure the weight state
        lwmax = lw.max()
        tot = 0.0
        if primal_mode == AMPLIFIED:
            per_call = c_lazy * r
            for g in range(G):
                tot += cnt[g] * math.exp(2.0 * alpha * (lw[g] - lwmax))
                cum[g] = tot
            k, ps = amplification_plan(min(1.0, math.sqrt(tot / n)))
            att = geometric(ps)
            mon[MON_ATTEMPTS] += att
            charge(lo, hi, MAXF, dh_n * per_call)
            charge(lo, hi, PREP, math.ceil(att * (k + 1) * c_prep) * per_call)
        else:
            for g in range(G):
                tot += cnt[g] * math.exp(lw[g] - lwmax)
                cum[g] = tot
        g_t = sample_cumulative(cum, tot)
        picks[r] = memb[memb_ptr[g_t] + int(np.random.random() * cnt[g_t])]

        # norm of the dual iterate and the sampled column
        if dual_mode == LAZY_PROJECTION:
            B = r * step
        else:
            B = 1.0
        scale = 0.0
        offset = 0.0
        nrm2 = 0.0
        ytot = 0.0
        ymax = 0.0
        for s in range(n_supp):
            v = y[supp[s]]
            ytot += v * v
            cum_y[s] = ytot
            ymax = max(ymax, abs(v))
        if ytot == 0.0:
            j = int(np.random.random() * d)
        else:
            if column_mode == EXACT_NORM:
                nrm2 = ynorm2
            else:
                for s in range(n_supp):
                    F[s] = (y[supp[s]] / B) ** 2
                counts = bit_counts(F[:n_supp], bits)
                med, apps = median_of_means(tb, counts, grover_calls, med_runs, ubuf, ustate, ests)
                charge(lo, hi, NORM, apps * r)
                nrm2 = med * d * B * B
                if monitor:
                    target = 0.0
                    for k in range(counts.shape[0]):
                        target += counts[k] * 2.0 ** (-k)
                    est_log[r, 0] = ynorm2
                    est_log[r, 1] = target * B * B
                    est_log[r, 2] = nrm2
            if column_mode == ESTIMATED_NORM:
                k, ps = amplification_plan(min(1.0, math.sqrt(ytot / d) / ymax))
                att = geometric(ps)
                charge(lo, hi, MAXF, dh_d * r)
                charge(lo, hi, PREP, math.ceil(att * (k + 1) * c_prep) * r)
            j = supp[sample_cumulative(cum_y[:n_supp], ytot)]
            if objective == LINEAR:
                scale = nrm2 / (max(1.0, math.sqrt(nrm2)) * y[j])
            else:
                scale = 2.0 * nrm2 / y[j]
                offset = nrm2
        js[r] = j
        scales[r] = scale
        offsets[r] = offset
        norms[r] = math.sqrt(nrm2)

        # multiplicative-weights update of every group
        if monitor:
            for g in range(G):
                p[g] = cnt[g] * math.exp(lw[g] - lwmax)
            p /= p.sum()
        for g in range(G):
            v = clip(qflag * b[g] + R[g, j] * scale - offset, bound)
            lw[g] += mw_log_factor(v, eta)
            if monitor:
                mon[MON_PV] += p[g] * v
                mon[MON_PV2] += p[g] * v * v
                sum_v[g] += v
        if primal_mode == CLASSICAL:
            charge(lo, hi, DIRECT, n)

        # dual step
        c = max(1.0, norms[r]) if objective == LINEAR else 1.0
        dot = 0.0
        for e in range(row_ptr[g_t], row_ptr[g_t + 1]):
            dot += row_val[e] * y[row_idx[e]]
        if monitor:
            if objective == LINEAR:
                mon[MON_XW] += dot / c
            else:
                mon[MON_PAYOFF] += b[g_t] + 2.0 * dot - ynorm2
            for s in range(n_supp):
                wsum[supp[s]] += y[supp[s]] / c
        if column_mode == EXACT_NORM:
            charge(lo, hi, DIRECT, d)
        if dual_mode == LAZY_PROJECTION:
            for e in range(row_ptr[g_t], row_ptr[g_t + 1]):
                y[row_idx[e]] += step * row_val[e]
            ynorm2 += 2.0 * step * dot + step * step * row_sq[g_t]
        else:
            keep = r / (r + 1.0)
            for s in range(n_supp):
                y[supp[s]] *= keep
            for e in range(row_ptr[g_t], row_ptr[g_t + 1]):
                y[row_idx[e]] += row_val[e] / (r + 1.0)
        for e in range(row_ptr[g_t], row_ptr[g_t + 1]):
            jj = row_idx[e]
            if not in_supp[jj]:
                in_supp[jj] = True
                supp[n_supp] = jj
                n_supp += 1
        if dual_mode == RUNNING_AVERAGE:
            ynorm2 = 0.0
            for s in range(n_supp):
                ynorm2 += y[supp[s]] ** 2
    return picks, norms, js, scales, offsets, lw, y, lo, hi, mon, sum_v, wsum, est_log
