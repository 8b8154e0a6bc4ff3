"""Compiled primitives shared by the simulators and the training loops.

Random draws inside these functions use numba's own generator, seeded once
per call of an entry point through ``np.random.seed``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

WINDOW = 1024  # half-width of the tabulated part of the phase-estimation law
MAX_SLOTS = 64  # cached count tables; the cache is flushed when full
CARRY = 1 << 60


@njit(cache=True)
def seed_stream(seed):
    np.random.seed(seed)


@njit(cache=True)
def charge(lo, hi, cat, amount):
    """Exact accumulation of large integer charges as hi * 2**60 + lo."""
    lo[cat] += amount
    while lo[cat] >= CARRY:
        lo[cat] -= CARRY
        hi[cat] += 1


@njit(cache=True)
def clip(v, bound):
    if v > bound:
        return bound
    if v < -bound:
        return -bound
    return v


@njit(cache=True)
def mw_log_factor(v, eta):
    # log of the quadratic multiplicative-weights factor 1 - eta v + eta^2 v^2
    return math.log1p(-eta * v + eta * eta * v * v)


@njit(cache=True)
def geometric(p):
    """Number of Bernoulli(p) trials up to and including the first success."""
    if p >= 1.0:
        return 1
    u = 1.0 - np.random.random()
    return 1 + int(math.floor(math.log(u) / math.log1p(-p)))


@njit(cache=True)
def amplification_plan(sin_theta):
    """(iterations k, per-attempt success probability) for a given sin(theta)."""
    if sin_theta >= 1.0:
        return 0, 1.0
    theta = math.asin(sin_theta)
    k = int(math.floor(math.pi / (4.0 * theta)))
    s = math.sin((2 * k + 1) * theta)
    return k, s * s


@njit(cache=True)
def sample_cumulative(cum, total):
    u = np.random.random() * total
    lo, hi = 0, cum.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def grover_grid(N, t, eps, ae_const):
    m = math.ceil(ae_const / eps * math.sqrt(N / max(t, 1)))
    return max(1, int(m))


@njit(cache=True)
def median_repeats(bits):
    """Odd repetition count of order log2(bits) used per bit in mean estimation."""
    r = max(1, int(math.ceil(math.log2(max(bits, 2)))))
    if r % 2 == 0:
        r += 1
    return r


def new_ae_tables(N, eps, ae_const, repeats, capacity):
    W = 2 * WINDOW + 1
    capacity = int(min(capacity, N + 1, MAX_SLOTS))
    return (
        np.full(N + 1, -1, dtype=np.int64),  # slot of each count t
        np.zeros(capacity, dtype=np.int64),  # kind: 1 point mass, 2 window (+ tail)
        np.zeros(capacity, dtype=np.int64),  # window width
        np.zeros((capacity, W)),  # sorted estimate values
        np.zeros((capacity, W)),  # single-draw conditional cdf
        np.zeros((capacity, W)),  # median-of-repeats cdf given all draws in window
        np.zeros((capacity, 9)),  # pwin, pwin**r, j0, frac, M, offset bound Q, mode mass, mode value, 1/(1 - mode mass)
        np.zeros(capacity, dtype=np.int64),  # M
        np.zeros(1, dtype=np.int64),  # slots used
        np.array([float(N), eps, ae_const, float(repeats)]),
        np.zeros((capacity, W + 1, 3)),  # alias table of the median law: acceptance, own value, alias value
        np.zeros(W + 1, dtype=np.int64),  # alias target scratch
    )


@njit(cache=True)
def _binom_tail(r, h, g):
    # P[Bin(r, g) >= h]
    total = 0.0
    for m in range(h, r + 1):
        c = 1.0
        for i in range(m):
            c = c * (r - i) / (i + 1)
        total += c * g**m * (1.0 - g) ** (r - m)
    return total


@njit(cache=True)
def _fejer_prob(k, f, M):
    s = math.sin(math.pi * (k - f) / M)
    return math.sin(math.pi * f) ** 2 / (M * M * s * s)


@njit(cache=True)
def _build(tb, t):
    slot_of, kind, width, vals, cdf1, cdfm, scal, Ms, used, par, alias, target = tb
    N = int(par[0])
    eps = par[1]
    ae_const = par[2]
    r = int(par[3])
    if used[0] >= kind.shape[0]:
        slot_of[:] = -1
        used[0] = 0
    s = used[0]
    used[0] += 1
    slot_of[t] = s
    M = grover_grid(N, t, eps, ae_const)
    Ms[s] = M
    if t == 0:
        kind[s] = 1
        vals[s, 0] = 0.0
        return s
    theta = math.asin(math.sqrt(t / N))
    x = M * theta / math.pi
    j0 = math.floor(x)
    f = x - j0
    if f > 1.0 - 1e-12:
        j0 += 1.0
        f = 0.0
    if f < 1e-12:
        kind[s] = 1
        vals[s, 0] = N * math.sin(math.pi * j0 / M) ** 2
        return s
    kind[s] = 2
    Q = (M - 1) // 2
    P = M - 1 - Q
    if M <= 2 * WINDOW + 1:
        lo, hi = -Q, P
    else:
        lo, hi = -WINDOW, WINDOW
    w = hi - lo + 1
    probs = np.empty(w)
    v = np.empty(w)
    for idx in range(w):
        k = lo + idx
        probs[idx] = _fejer_prob(k, f, M)
        v[idx] = N * math.sin(math.pi * (j0 + k) / M) ** 2
    order = np.argsort(v)
    pwin = probs.sum()
    if M <= 2 * WINDOW + 1 or pwin > 1.0:
        pwin = 1.0
    total = probs.sum()
    acc = 0.0
    h = (r + 1) // 2
    for idx in range(w):
        acc += probs[order[idx]]
        g = min(1.0, acc / total)
        vals[s, idx] = v[order[idx]]
        cdf1[s, idx] = g
        cdfm[s, idx] = _binom_tail(r, h, g)
    cdf1[s, w - 1] = 1.0
    cdfm[s, w - 1] = 1.0
    width[s] = w
    scal[s, 0] = pwin
    scal[s, 1] = pwin**r
    scal[s, 2] = j0
    scal[s, 3] = f
    scal[s, 4] = M
    scal[s, 5] = Q
    mass = np.empty(w + 1)
    prev = 0.0
    for idx in range(w):
        mass[idx] = (cdfm[s, idx] - prev) * scal[s, 1]
        prev = cdfm[s, idx]
    mass[w] = max(0.0, 1.0 - scal[s, 1])
    # the modal cell is split off and drawn by one comparison; the alias table holds the rest
    mode = int(np.argmax(mass[:w]))
    p_mode = mass[mode] / mass.sum()
    mass[mode] = 0.0
    if mass.sum() <= 0.0:
        p_mode = 1.0
        mass[mode] = 1.0
    scal[s, 6] = p_mode
    scal[s, 7] = vals[s, mode]
    scal[s, 8] = 1.0 / (1.0 - p_mode) if p_mode < 1.0 else 0.0
    # the last cell stands for "some draw left the window" and is marked by NaN
    _alias(mass, alias[s, :, 0], target)
    for idx in range(w + 1):
        alias[s, idx, 1] = vals[s, idx] if idx < w else np.nan
        a = target[idx]
        alias[s, idx, 2] = vals[s, a] if a < w else np.nan
    return s


@njit(cache=True)
def _alias(mass, acc, target):
    """Walker alias table for the probability vector ``mass``."""
    m = mass.shape[0]
    scaled = mass * (m / mass.sum())
    small = np.empty(m, dtype=np.int64)
    large = np.empty(m, dtype=np.int64)
    ns = 0
    nl = 0
    for i in range(m):
        target[i] = i
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        a = small[ns]
        g = large[nl - 1]
        acc[a] = scaled[a]
        target[a] = g
        scaled[g] = scaled[g] + scaled[a] - 1.0
        if scaled[g] < 1.0:
            nl -= 1
            small[ns] = g
            ns += 1
    for i in range(nl):
        acc[large[i]] = 1.0
    for i in range(ns):
        acc[small[i]] = 1.0


@njit(cache=True)
def _slot(tb, t):
    s = tb[0][t]
    if s < 0:
        s = _build(tb, t)
    return s


@njit(cache=True)
def _search(row, w, u):
    lo, hi = 0, w - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if row[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def _tail_draw(tb, s):
    N = tb[9][0]
    scal = tb[6]
    j0 = scal[s, 2]
    f = scal[s, 3]
    M = scal[s, 4]
    Q = scal[s, 5]
    P = M - 1 - Q
    K = WINDOW
    a = 1.0 / 3.2
    wpos = 1.0 / (K - f)
    wneg = 1.0 / (K + f)
    while True:
        if np.random.random() * (wpos + wneg) < wpos:
            c, side, lim = f, 1.0, P
        else:
            c, side, lim = -f, -1.0, Q
        u = 1.0 - np.random.random()
        m = math.floor((K - c) / u + 1.0 + c)
        if m > lim:
            continue
        k = side * m
        sk = math.sin(math.pi * (k - f) / M)
        q = 1.0 / (M * M * sk * sk)
        env = a / ((m - 1.0 - c) * (m - c))
        if np.random.random() * env < q:
            return N * math.sin(math.pi * (j0 + k) / M) ** 2


@njit(cache=True)
def _window_draw(tb, s):
    return tb[3][s, _search(tb[4][s], tb[2][s], np.random.random())]


@njit(cache=True)
def ae_draw(tb, t):
    """One amplitude-estimation outcome for t marked items; returns (estimate, M)."""
    s = _slot(tb, t)
    M = tb[7][s]
    if tb[1][s] == 1:
        return tb[3][s, 0], M
    if np.random.random() < tb[6][s, 0]:
        return _window_draw(tb, s), M
    return _tail_draw(tb, s), M


@njit(cache=True)
def ae_median_draw(tb, t):
    """Median of ``repeats`` independent outcomes; returns (median, M)."""
    s = _slot(tb, t)
    M = tb[7][s]
    if tb[1][s] == 1:
        return tb[3][s, 0], M
    scal = tb[6]
    if np.random.random() < scal[s, 1]:
        return tb[3][s, _search(tb[5][s], tb[2][s], np.random.random())], M
    return _median_with_tail(tb, s), M


@njit(cache=True)
def _median_with_tail(tb, s):
    # at least one outcome outside the window: draw the tail count, then the outcomes
    scal = tb[6]
    r = int(tb[9][3])
    q = 1.0 - scal[s, 0]
    norm = 1.0 - scal[s, 1]
    u = np.random.random() * norm
    tails = r
    acc = 0.0
    for m in range(1, r + 1):
        c = 1.0
        for i in range(m):
            c = c * (r - i) / (i + 1)
        acc += c * q**m * (1.0 - q) ** (r - m)
        if u < acc:
            tails = m
            break
    out = np.empty(r)
    for i in range(r):
        out[i] = _tail_draw(tb, s) if i < tails else _window_draw(tb, s)
    out.sort()
    return out[r // 2]


@njit(cache=True)
def bit_counts(F, bits):
    """Counts n_k of entries whose bit k is set, k = 0 (units) .. bits."""
    counts = np.zeros(bits + 1, dtype=np.int64)
    scale = 2.0**bits
    for i in range(F.shape[0]):
        x = min(max(F[i], 0.0), 1.0)
        q = np.int64(math.floor(x * scale))
        for k in range(bits, -1, -1):
            if q & 1:
                counts[k] += 1
            q >>= 1
    return counts


def new_uniforms(size=4096):
    """Buffer and xoshiro256+ state (four words plus the read position); seed with ``seed_uniforms``."""
    state = np.zeros(5, dtype=np.uint64)
    state[4] = size
    return np.zeros(size), state


@njit(cache=True)
def seed_uniforms(buf, state):
    """Seed the buffered stream from numba's generator and mark the buffer as spent.

    The four state words are successive splitmix64 outputs, so every bit is mixed.
    """
    x = np.uint64(np.random.randint(0, 2**62)) << np.uint64(2)
    x ^= np.uint64(np.random.randint(0, 4))
    for i in range(4):
        x += np.uint64(0x9E3779B97F4A7C15)
        z = x
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        state[i] = z ^ (z >> np.uint64(31))
    state[4] = np.uint64(buf.shape[0])


@njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def _refill(buf, state):
    # xoshiro256+, top 53 bits as a double in [0, 1)
    for i in range(buf.shape[0]):
        r = state[0] + state[3]
        t = state[1] << np.uint64(17)
        state[2] ^= state[0]
        state[3] ^= state[1]
        state[1] ^= state[2]
        state[0] ^= state[3]
        state[2] ^= t
        state[3] = _rotl(state[3], 45)
        buf[i] = np.float64(r >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    state[4] = np.uint64(0)



@njit(cache=True)
def median_of_means(tb, counts, grover_calls, runs, ubuf, ustate, ests):
    """Median over ``runs`` independent bitwise mean estimates for the same counts.

    Fills ``ests[:runs]`` and returns the median and the Grover applications spent.
    Table lookups draw from the buffered stream ``(ubuf, ustate)``.
    """
    slot_of, kind, width, vals, cdf1, cdfm, scal, Ms, used, par, alias, target = tb
    N = par[0]
    r = int(par[3])
    nb = counts.shape[0]
    L = ubuf.shape[0]
    pos = np.int64(ustate[4])
    slots = np.empty(nb, dtype=np.int64)
    pows = np.empty(nb)
    fixed = 0.0
    applications = 0
    for k in range(nb):
        t = counts[k]
        s = slot_of[t]
        if s < 0:
            s = _build(tb, t)
        applications += r * grover_calls * Ms[s]
        if kind[s] == 1:
            fixed += vals[s, 0] * 2.0 ** (-k)
            s = -1
        slots[k] = s
        pows[k] = 0.5**k
    for m in range(runs):
        total = fixed
        for k in range(nb):
            s = slots[k]
            if s < 0:
                continue
            if pos >= L:
                _refill(ubuf, ustate)
                pos = 0
            u = ubuf[pos]
            pos += 1
            if u < scal[s, 6]:
                est = scal[s, 7]
            else:
                x = (u - scal[s, 6]) * scal[s, 8] * (width[s] + 1)
                cell = min(int(x), width[s])
                if x - cell < alias[s, cell, 0]:
                    est = alias[s, cell, 1]
                else:
                    est = alias[s, cell, 2]
                if est != est:
                    est = _median_with_tail(tb, s)
            total += est * pows[k]
        ests[m] = total / N
    ustate[4] = np.uint64(pos)
    return np.median(ests[:runs]), applications * runs
