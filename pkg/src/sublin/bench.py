"""Query-scaling sweeps: mean charged queries per size and the fitted log-log slope."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .classify import TRAINERS
from .instance import InstanceSpec, QueryLedger, generate
from .mwdual import TrainConfig
from .qsim import QueryCostModel
from .quadratic import QuadConfig, train_meb
from .zerosum import solve_game

ALGORITHMS = ("sqrt-n", "sqrt-d", "baseline", "meb", "game")
INSTANCE_KINDS = ("case1", "case2", "random", "antisym", "zerosum")


@dataclass(frozen=True)
class SweepPoint:
    size: int
    mean: float
    std: float
    trials: int


def default_instance(alg: str) -> str:
    return "antisym" if alg == "game" else "case2"


def make_instance(kind: str, n: int, d: int, seed: int):
    """Instance of the named family at the given size; lower-bound cases use l = 2 and k = 3."""
    if kind == "case1":
        spec = InstanceSpec("lower-linear-case1", n=n, d=d, k=3, l=2)
    elif kind == "case2":
        spec = InstanceSpec("lower-linear-case2", n=n, d=d, l=2)
    elif kind == "random":
        spec = InstanceSpec("random-ball", n=n, d=d, seed=seed)
    elif kind == "antisym":
        spec = InstanceSpec("random-antisymmetric", n=n, seed=seed)
    elif kind == "zerosum":
        spec = InstanceSpec("lower-zerosum", n=n, k=1)
    else:
        raise ValueError(f"unknown instance family {kind!r}")
    return generate(spec)


def charged_queries(
    alg: str, instance: str, n: int, d: int, eps: float, seed: int,
    rounds: int | None = None, cost: QueryCostModel | None = None,
) -> int:
    """Charged queries of one seeded run."""
    cost = cost if cost is not None else QueryCostModel()
    ledger = QueryLedger(cost)
    rng = np.random.default_rng(seed)
    X = make_instance(instance, n, d, seed)
    if alg == "game":
        solve_game(X, eps, ledger, rng, rounds=rounds)
    elif alg == "meb":
        train_meb(X, QuadConfig(eps=eps, T=rounds, cost=cost), ledger, rng)
    elif alg in TRAINERS:
        TRAINERS[alg](X, TrainConfig(eps=eps, rounds=rounds, cost=cost), ledger, rng)
    else:
        raise ValueError(f"unknown algorithm {alg!r}")
    return ledger.charged_queries


def loglog_slope(sizes, values) -> float:
    """Least-squares slope of log(values) against log(sizes); NaN with a warning below two sizes."""
    sizes = np.asarray(sizes, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if len(np.unique(sizes)) < 2:
        warnings.warn("slope undefined for fewer than two sizes", RuntimeWarning, stacklevel=2)
        return math.nan
    return float(np.polyfit(np.log(sizes), np.log(values), 1)[0])


def run_sweep(
    alg: str, sweep: str, sizes, fixed: int, eps: float, seeds: int, base_seed: int,
    instance: str | None = None, rounds: int | None = None, cost: QueryCostModel | None = None,
) -> tuple[list[SweepPoint], float]:
    """Sweep n (``sweep='n'``, d fixed) or d (n fixed); trial s of each size uses seed base_seed + s."""
    if sweep not in ("n", "d"):
        raise ValueError("sweep must be 'n' or 'd'")
    if seeds < 1:
        raise ValueError("need at least one seed per size")
    instance = instance or default_instance(alg)
    points = []
    for size in sizes:
        n, d = (size, fixed) if sweep == "n" else (fixed, size)
        counts = [charged_queries(alg, instance, n, d, eps, base_seed + s, rounds, cost) for s in range(seeds)]
        arr = np.array(counts, dtype=np.float64)
        points.append(SweepPoint(int(size), float(arr.mean()), float(arr.std()), seeds))
    slope = loglog_slope([p.size for p in points], [p.mean for p in points])
    return points, slope


def to_csv(points: list[SweepPoint]) -> str:
    lines = ["size,mean_charged_queries,std,trials"]
    lines += [f"{p.size},{p.mean!r},{p.std!r},{p.trials}" for p in points]
    return "\n".join(lines) + "\n"
