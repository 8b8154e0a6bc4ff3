"""Deterministic references: full-information primal-dual runs and exact values of tiny games."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .instance import DataMatrix

MAX_ENTRIES = 10**6
MAX_GAME_DIM = 6
MAX_ROUNDS = 1 << 24


@dataclass
class ExactRun:
    """Full-information run: p_t and w_t are computed densely and v_t = X w_t exactly.

    Per-round arrays are kept only when requested.
    """

    sigma: float
    lower: float
    upper: float
    T: int
    w_bar: np.ndarray
    p_bar: np.ndarray
    mw_lhs: float
    mw_rhs: float
    regret: float
    regret_bound: float
    p: np.ndarray | None = None
    w: np.ndarray | None = None
    v: np.ndarray | None = None
    history: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    @property
    def mw_holds(self) -> bool:
        return self.mw_lhs <= self.mw_rhs + 1e-9 * max(1.0, abs(self.mw_rhs))

    @property
    def regret_holds(self) -> bool:
        return self.regret <= self.regret_bound + 1e-9


@njit(cache=True)
def _exact_loop(X, T, record):
    n, d = X.shape
    eta = math.sqrt(math.log(max(n, 2)) / T)
    step = 1.0 / math.sqrt(2.0 * T)
    lw = np.zeros(n)
    y = np.zeros(d)
    p = np.empty(n)
    p_sum = np.zeros(n)
    w_sum = np.zeros(d)
    v_sum = np.zeros(n)
    grad_sum = np.zeros(d)
    pv = 0.0
    pv2 = 0.0
    played = 0.0
    rec_p = np.zeros((T if record else 0, n))
    rec_w = np.zeros((T if record else 0, d))
    rec_v = np.zeros((T if record else 0, n))
    for t in range(T):
        m = lw.max()
        for i in range(n):
            p[i] = math.exp(lw[i] - m)
        p /= p.sum()
        c = max(1.0, math.sqrt(np.dot(y, y)))
        w = y / c
        v = X @ w
        g = X.T @ p
        for i in range(n):
            pv += p[i] * v[i]
            pv2 += p[i] * v[i] * v[i]
            lw[i] += math.log1p(-eta * v[i] + eta * eta * v[i] * v[i])
        played += np.dot(g, w)
        p_sum += p
        w_sum += w
        v_sum += v
        grad_sum += g
        if record:
            rec_p[t] = p
            rec_w[t] = w
            rec_v[t] = v
        y += step * g
    mw_rhs = v_sum.min() + eta * pv2 + math.log(max(n, 2)) / eta
    regret = math.sqrt(np.dot(grad_sum, grad_sum)) - played
    return p_sum / T, w_sum / T, pv, mw_rhs, regret, rec_p, rec_w, rec_v


def _bounds(X: np.ndarray, p_bar: np.ndarray, w_bar: np.ndarray) -> tuple[float, float]:
    # any w in the unit ball certifies min_i X_i w <= sigma; any p certifies sigma <= ||X^T p||
    margins = X @ w_bar
    lower = max(0.0, float(margins.min()))
    norm = float(np.linalg.norm(w_bar))
    if norm > 0.0:
        lower = max(lower, float(margins.min()) / norm)
    upper = float(np.linalg.norm(X.T @ p_bar))
    return lower, upper


def exact_primal_dual(X, eps: float, T: int | None = None, record: bool = False) -> ExactRun:
    """Maximin margin within eps, certified by a primal-dual gap.

    Rounds double from ln(n)/eps^2 until upper - lower <= eps; a fixed ``T``
    runs exactly once.
    """
    X = X.entries if isinstance(X, DataMatrix) else np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    n, d = X.shape
    if n * d > MAX_ENTRIES:
        raise ValueError(f"reference run limited to n*d <= {MAX_ENTRIES}, got {n * d}")
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    X = np.ascontiguousarray(X)
    rounds = T if T is not None else max(16, math.ceil(math.log(max(n, 2)) / eps**2))
    history = []
    while True:
        p_bar, w_bar, pv, mw_rhs, regret, rp, rw, rv = _exact_loop(X, rounds, record)
        lower, upper = _bounds(X, p_bar, w_bar)
        history.append((rounds, lower, upper))
        if T is not None or upper - lower <= eps or rounds >= MAX_ROUNDS:
            break
        rounds *= 2
    return ExactRun(
        sigma=0.5 * (lower + upper),
        lower=lower,
        upper=upper,
        T=rounds,
        w_bar=w_bar,
        p_bar=p_bar,
        mw_lhs=pv,
        mw_rhs=mw_rhs,
        regret=regret,
        regret_bound=2.0 * math.sqrt(2.0 * rounds),
        p=rp if record else None,
        w=rw if record else None,
        v=rv if record else None,
        history=history,
    )


def tiny_game_value(X) -> float:
    """max_p min_q p^T X q by enumerating the vertices of {(p, v): X^T p >= v, p in the simplex}."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or max(X.shape) > MAX_GAME_DIM:
        raise ValueError(f"tiny_game_value handles matrices up to {MAX_GAME_DIM}x{MAX_GAME_DIM}")
    m, k = X.shape
    best = -math.inf
    for size in range(1, min(m, k) + 1):
        for rows in itertools.combinations(range(m), size):
            for cols in itertools.combinations(range(k), size):
                # X[rows, cols]^T p - v 1 = 0 and sum p = 1
                A = np.zeros((size + 1, size + 1))
                A[:size, :size] = X[np.ix_(rows, cols)].T
                A[:size, size] = -1.0
                A[size, :size] = 1.0
                rhs = np.zeros(size + 1)
                rhs[size] = 1.0
                try:
                    sol = np.linalg.solve(A, rhs)
                except np.linalg.LinAlgError:
                    continue
                p = np.zeros(m)
                p[list(rows)] = sol[:size]
                v = sol[size]
                if p.min() < -1e-12 or (X.T @ p).min() < v - 1e-9:
                    continue
                best = max(best, float(v))
    return best + 0.0  # normalise -0.0
