"""Sublinear zero-sum game solver for antisymmetric payoff matrices and the reduction from general games."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .instance import QueryLedger
from .qsim import AmplitudeOracle, amplify_prepare_sample_detail

MASS_TOL = 1e-12


class DegenerateReduction(ValueError):
    """A block of the reduced strategy carries no mass."""


@dataclass(frozen=True)
class GameInstance:
    X: np.ndarray
    antisymmetric: bool = field(init=False)
    entry_bound: float = field(init=False)

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-d matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("payoffs must be finite")
        bound = float(np.abs(X).max())
        if bound > 1.0:
            raise ValueError(f"payoff magnitude {bound:.6g} exceeds 1")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "entry_bound", bound)
        object.__setattr__(self, "antisymmetric", X.shape[0] == X.shape[1] and bool(np.array_equal(X, -X.T)))

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class Strategy:
    """Mixed strategy stored sparsely as index -> mass."""

    support: dict
    n: int
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        masses = np.fromiter(self.support.values(), dtype=np.float64, count=len(self.support))
        if any(not 0 <= int(i) < self.n for i in self.support):
            raise ValueError("support index out of range")
        if np.any(masses < 0.0) or abs(masses.sum() - 1.0) > MASS_TOL:
            raise ValueError("masses must be non-negative and sum to 1")

    @classmethod
    def from_dense(cls, w, info: dict | None = None) -> "Strategy":
        w = np.asarray(w, dtype=np.float64)
        nz = np.flatnonzero(w)
        return cls({int(i): float(w[i]) for i in nz}, len(w), info or {})

    @classmethod
    def from_tallies(cls, counts: np.ndarray, info: dict | None = None) -> "Strategy":
        counts = np.asarray(counts, dtype=np.int64)
        total = int(counts.sum())
        nz = np.flatnonzero(counts)
        return cls({int(i): int(counts[i]) / total for i in nz}, len(counts), info or {})

    def dense(self) -> np.ndarray:
        w = np.zeros(self.n)
        for i, m in self.support.items():
            w[i] = m
        return w


def antisymmetrize(X) -> GameInstance:
    """Skew block matrix [[0, X, -1], [-X^T, 0, 1], [1^T, -1^T, 0]] of size n1 + n2 + 1."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("payoff matrix must be 2-d")
    n1, n2 = X.shape
    n = n1 + n2 + 1
    Y = np.zeros((n, n))
    Y[:n1, n1 : n1 + n2] = X
    Y[n1 : n1 + n2, :n1] = -X.T
    Y[:n1, -1] = -1.0
    Y[n1 : n1 + n2, -1] = 1.0
    Y[-1, :n1] = 1.0
    Y[-1, n1 : n1 + n2] = -1.0
    return GameInstance(Y)


def game_rounds(n: int, eps: float) -> int:
    return max(1, math.ceil(4.0 * math.log(max(n, 2)) / eps**2))


def solve_game(
    g: GameInstance, eps: float, ledger: QueryLedger | None = None, rng=None, rounds: int | None = None
) -> Strategy:
    """Exponential-weights self-play on an antisymmetric game; returns the empirical play frequency.

    The row law at round t is proportional to exp(eps * S_i / 2), with S the running
    sum of the sampled columns. ``info`` records T and the final log potential.
    ``rounds`` overrides T = ceil(4 ln(n) / eps^2).
    """
    if not g.antisymmetric:
        raise ValueError("solve_game needs an antisymmetric payoff matrix")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    ledger = ledger if ledger is not None else QueryLedger()
    rng = rng if rng is not None else np.random.default_rng()
    n = g.n
    T = game_rounds(n, eps) if rounds is None else int(rounds)
    if T < 1:
        raise ValueError("rounds must be positive")
    c_lazy = ledger.cost_model.c_lazy_step
    S = np.zeros(n)
    tallies = np.zeros(n, dtype=np.int64)
    attempts = 0
    for t in range(T):
        half = eps * S / 4.0
        # amplitudes exp(eps S / 4), shifted by their maximum; each evaluation rereads t entries
        a = np.exp(half - half.max())
        out = amplify_prepare_sample_detail(AmplitudeOracle.from_vector(a, c_lazy * t), n, ledger, rng)
        attempts += out.attempts
        k = out.index
        tallies[k] += 1
        # column k of an antisymmetric matrix is minus row k
        S -= g.X[k]
    log_potential = float(logsumexp(eps * S / 2.0))
    info = {"T": T, "log_potential": log_potential, "mean_attempts": attempts / T}
    return Strategy.from_tallies(tallies, info)


def potential_bounds(n: int) -> dict:
    """Log thresholds of the potential: the 2/3-probability bound and the feasibility bound."""
    return {"markov": math.log(3.0) + 5.0 / 3.0 * math.log(n), "feasible": 2.0 * math.log(n)}


def recover_strategies(w: Strategy, n1: int, n2: int) -> tuple[Strategy, Strategy]:
    """Row and column strategies of the original game from a strategy of its skew reduction."""
    if w.n != n1 + n2 + 1:
        raise ValueError(f"strategy has {w.n} coordinates, expected {n1 + n2 + 1}")
    dense = w.dense()
    row, col = dense[:n1], dense[n1 : n1 + n2]
    if row.sum() <= 0.0 or col.sum() <= 0.0:
        raise DegenerateReduction("degenerate reduction")
    return Strategy.from_dense(row / row.sum()), Strategy.from_dense(col / col.sum())


def verify_epsilon_optimal(X, w, eps: float) -> tuple[bool, float]:
    """(all coordinates of X w are at most eps, largest coordinate), computed exactly."""
    X = X.X if isinstance(X, GameInstance) else np.asarray(X, dtype=np.float64)
    w = w.dense() if isinstance(w, Strategy) else np.asarray(w, dtype=np.float64)
    if X.shape[1] != w.shape[0]:
        raise ValueError(f"dimension mismatch: {X.shape} vs {w.shape}")
    worst = float((X @ w).max())
    return worst <= eps, worst
