"""Outcome-level simulators of the quantum subroutines with query accounting.

Each simulator draws from the exact output law of its subroutine and bills the
query cost of the quantum procedure to a ledger. Host work is not the
complexity observable; the ledger is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _core


@dataclass(frozen=True)
class QueryCostModel:
    c_prep_per_iter: float = 2.0
    c_dh: float = 22.5
    bits_l: int = 16
    ae_const: float = 2.0 * math.pi
    c_entry: int = 1
    c_lazy_step: int = 2
    grover_calls: int = 2

    def __post_init__(self):
        for name in ("c_prep_per_iter", "c_dh", "ae_const", "c_entry", "c_lazy_step", "grover_calls"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 1 <= self.bits_l <= 64:
            raise ValueError("bits_l must lie in [1, 64]")

    @property
    def effective_bits(self) -> int:
        # bit extraction runs on int64 words
        return min(self.bits_l, 62)

    def dh_calls(self, n: int) -> int:
        return math.ceil(self.c_dh * math.sqrt(n))

    def prep_calls(self, attempts: int, iterations: int) -> int:
        return math.ceil(attempts * (iterations + 1) * self.c_prep_per_iter)


@dataclass
class AmplitudeOracle:
    """Coefficient oracle i -> a_i; ``eval`` accepts an index array."""

    eval: Callable[[np.ndarray], np.ndarray]
    per_call_underlying_queries: int = 1

    def __post_init__(self):
        if self.per_call_underlying_queries < 0:
            raise ValueError("per-call cost must be non-negative")

    @classmethod
    def from_vector(cls, a, per_call: int = 1) -> "AmplitudeOracle":
        a = np.asarray(a, dtype=np.float64)
        return cls(lambda idx: a[idx], per_call)

    def values(self, n: int) -> np.ndarray:
        a = np.asarray(self.eval(np.arange(n)), dtype=np.float64)
        if not np.all(np.isfinite(a)):
            raise ValueError("oracle coefficients must be finite")
        return a


@dataclass(frozen=True)
class AEResult:
    estimate: float
    grover_applications: int
    charged: int


@dataclass(frozen=True)
class PrepOutcome:
    index: int
    attempts: int
    iterations: int
    success_probability: float


def _seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**32 - 1))


def durr_hoyer_max(oracle: AmplitudeOracle, n: int, ledger, rng: np.random.Generator) -> tuple[int, float]:
    """Exact max |a_i| (smallest index on ties) billed at the expected Durr-Hoyer cost."""
    if n < 1:
        raise ValueError("n must be positive")
    mags = np.abs(oracle.values(n))
    ledger.charge("max_finding", ledger.cost_model.dh_calls(n) * oracle.per_call_underlying_queries)
    i = int(np.argmax(mags))
    return i, float(mags[i])


def amplify_prepare_sample_detail(oracle: AmplitudeOracle, n: int, ledger, rng: np.random.Generator) -> PrepOutcome:
    a = oracle.values(n)
    _, a_max = durr_hoyer_max(oracle, n, ledger, rng)
    if a_max == 0.0:
        raise ValueError("cannot prepare a state from an all-zero coefficient vector")
    rel = a / a_max
    sq = rel * rel
    total = float(sq.sum())
    sin_theta = min(1.0, math.sqrt(total / n))
    k, p_success = _core.amplification_plan(sin_theta)
    attempts = int(rng.geometric(p_success)) if p_success < 1.0 else 1
    ledger.charge(
        "state_prep", ledger.cost_model.prep_calls(attempts, k) * oracle.per_call_underlying_queries
    )
    cum = np.cumsum(sq)
    i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return PrepOutcome(min(i, n - 1), attempts, k, p_success)


def amplify_prepare_sample(oracle: AmplitudeOracle, n: int, ledger, rng: np.random.Generator) -> int:
    """Sample i with probability a_i^2 / ||a||^2, billing amplitude amplification."""
    return amplify_prepare_sample_detail(oracle, n, ledger, rng).index


def _ae_tables(N: int, eps: float, cost: QueryCostModel, repeats: int, capacity: int):
    return _core.new_ae_tables(N, eps, cost.ae_const, repeats, capacity)


def _marked_count(f, N: int) -> int:
    if callable(f):
        marks = np.asarray(f(np.arange(N)), dtype=bool)
    else:
        marks = np.asarray(f, dtype=bool)
        if marks.shape != (N,):
            raise ValueError(f"predicate has shape {marks.shape}, expected ({N},)")
    return int(marks.sum())


def amplitude_estimate(
    f, N: int, eps: float, ledger, rng: np.random.Generator, per_call: int = 1
) -> AEResult:
    """Estimate the number of marked items of a Boolean oracle over [N].

    ``f`` is a callable on index arrays or a Boolean array of length N.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    t = _marked_count(f, N)
    cost = ledger.cost_model
    tb = _ae_tables(N, eps, cost, 1, 1)
    _core.seed_stream(_seed(rng))
    estimate, M = _core.ae_draw(tb, t)
    charged = int(M) * cost.grover_calls * per_call
    ledger.charge("norm_estimation", charged)
    return AEResult(float(estimate), int(M), charged)


def amplitude_estimate_samples(N: int, t: int, eps: float, count: int, cost: QueryCostModel, seed: int) -> np.ndarray:
    """Vector of ``count`` independent estimates for a known count t (no ledger)."""
    tb = _ae_tables(N, eps, cost, 1, 1)
    return _draw_many(tb, t, count, seed)


def _draw_many(tb, t, count, seed):
    _core.seed_stream(seed)
    out = np.empty(count)
    for i in range(count):
        out[i] = _core.ae_draw(tb, t)[0]
    return out


def truncated_mean(F: np.ndarray, bits: int) -> float:
    """Mean of F after truncation to ``bits`` fractional bits."""
    F = np.clip(np.asarray(F, dtype=np.float64), 0.0, 1.0)
    return float(np.floor(F * 2.0**bits).sum() / 2.0**bits / F.shape[0])


def estimate_mean(F, d: int, delta: float, ledger, rng: np.random.Generator, per_call: int = 1) -> float:
    """Bitwise-counting estimate of (1/d) sum F(i) for F with values in [0, 1].

    ``F`` is an array of length d or a callable on index arrays.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    values = np.asarray(F(np.arange(d)) if callable(F) else F, dtype=np.float64)
    if values.shape != (d,):
        raise ValueError(f"F has shape {values.shape}, expected ({d},)")
    cost = ledger.cost_model
    bits = cost.effective_bits
    repeats = _core.median_repeats(bits)
    tb = _ae_tables(d, delta / 2.0, cost, repeats, bits + 1)
    counts = _core.bit_counts(values, bits)
    _core.seed_stream(_seed(rng))
    ubuf, ustate = _core.new_uniforms()
    _core.seed_uniforms(ubuf, ustate)
    m, applications = _core.median_of_means(tb, counts, cost.grover_calls, 1, ubuf, ustate, np.empty(1))
    ledger.charge("norm_estimation", int(applications) * per_call)
    return float(m)


def estimate_norm_sq(y, d: int, B: float, delta: float, ledger, rng: np.random.Generator, per_call: int = 1) -> float:
    """Estimate ||y||^2 from F(j) = y(j)^2 / B^2 and rescale by d B^2."""
    if not B > 0.0:
        raise ValueError("bound B must be positive")
    values = np.asarray(y(np.arange(d)) if callable(y) else y, dtype=np.float64)
    F = (values / B) ** 2
    return d * B * B * estimate_mean(F, d, delta, ledger, rng, per_call)
