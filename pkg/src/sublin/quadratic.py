"""Solvers for max_w min_i b_i + 2 X_i w - ||w||^2: minimum enclosing ball and l2-margin SVM."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _loops
from .classify import SQRT_D_CONST, SQRT_N_CONST, TrainResult, _book, _monitor_report, run_primal_dual
from .instance import DataMatrix, QueryLedger
from .mwdual import AMP_MODELS, l2_sample
from .qsim import QueryCostModel

BUDGETS = ("sqrt-n", "sqrt-d")
NOT_SEPARATED = "not separated at accuracy eps"
SEPARATED = "separated"


@dataclass
class QuadConfig:
    """Run parameters of the quadratic solvers.

    ``b`` holds the row offsets; MEB runs ignore it and use -||X_i||^2. The dual
    player runs strongly convex OGD with step 1/(2t), i.e. the running average of
    the sampled rows, which stays inside the unit ball without projection.
    """

    eps: float
    b: np.ndarray | None = None
    T: int | None = None
    T_const: float | None = None
    budget: str = "sqrt-n"
    amp_model: str = "sqrt-weight"
    seed: int | None = None
    cost: QueryCostModel = field(default_factory=QueryCostModel)
    monitor: bool = False

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.budget not in BUDGETS:
            raise ValueError(f"budget must be one of {BUDGETS}")
        if self.amp_model not in AMP_MODELS:
            raise ValueError(f"amp_model must be one of {AMP_MODELS}")
        if self.T is not None and self.T < 1:
            raise ValueError("T must be positive")
        if self.b is not None:
            self.b = np.asarray(self.b, dtype=np.float64)
            if not np.all(np.isfinite(self.b)):
                raise ValueError("offsets must be finite")

    def iterations(self, n: int) -> int:
        if self.T is not None:
            return self.T
        default = SQRT_D_CONST if self.budget == "sqrt-d" else SQRT_N_CONST
        const = self.T_const if self.T_const is not None else default
        return max(1, math.ceil(const**2 * math.log(max(n, 2)) / self.eps**2))


@dataclass(frozen=True)
class SVMResult:
    status: str
    w_bar: np.ndarray
    w_hat: np.ndarray | None
    margin_lb: float
    objective: float
    train: TrainResult

    @property
    def separated(self) -> bool:
        return self.status == SEPARATED


def meb_offsets(X: DataMatrix) -> np.ndarray:
    return -np.einsum("ij,ij->i", X.entries, X.entries)


def quadratic_objective(X: DataMatrix, b: np.ndarray, w: np.ndarray) -> float:
    """min_i b_i + 2 X_i w - ||w||^2, computed exactly."""
    w = np.asarray(w, dtype=np.float64)
    return float((np.asarray(b) + 2.0 * (X.entries @ w)).min() - w @ w)


def enclosing_radius_sq(X: DataMatrix, center: np.ndarray) -> float:
    diff = X.entries - np.asarray(center, dtype=np.float64)
    return float(np.einsum("ij,ij->i", diff, diff).max())


def quad_estimator(b_i: float, row, w, ledger: QueryLedger, rng: np.random.Generator, size: int | None = None):
    """Unbiased estimate of b_i + 2 X_i w - ||w||^2 from one l2 sample of w.

    ``row`` is a vector or a callable j -> X_i(j); each entry read is billed.
    With ``size`` set, that many independent estimates come back as an array.
    """
    w = np.asarray(w, dtype=np.float64)
    count = 1 if size is None else int(size)
    norm_sq = float(w @ w)
    if norm_sq == 0.0:
        return float(b_i) if size is None else np.full(count, float(b_i))
    if size is None:
        js = np.array([l2_sample(w, w.shape[0], ledger, rng)])
    else:
        js = rng.choice(w.shape[0], size=count, p=w * w / norm_sq)
    ledger.charge("direct", count * ledger.cost_model.c_entry)
    x = np.array([row(int(j)) for j in js]) if callable(row) else np.asarray(row, dtype=np.float64)[js]
    est = float(b_i) + 2.0 * x * norm_sq / w[js] - norm_sq
    return float(est[0]) if size is None else est


def average_iterate(X: DataMatrix, picks: np.ndarray) -> np.ndarray:
    """(1/T) sum_t w_t with w_1 = 0 and w_t the mean of the first t-1 picked rows."""
    T = len(picks)
    inv = np.zeros(T)
    inv[1:] = 1.0 / np.arange(1, T)
    # pick r enters every later iterate w_s, s > r, with weight 1/s
    tail = np.concatenate((np.cumsum(inv[::-1])[::-1][1:], [0.0])) / T
    coef = np.bincount(np.asarray(picks), weights=tail, minlength=X.n)
    return X.entries.T @ coef


def _run_quadratic(X: DataMatrix, b: np.ndarray, cfg: QuadConfig, ledger, rng) -> TrainResult:
    t0 = time.perf_counter()
    ledger = ledger if ledger is not None else QueryLedger(cfg.cost)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    T = cfg.iterations(X.n)
    eta = math.sqrt(math.log(max(X.n, 2)) / T)
    column_mode = _loops.ESTIMATED_NORM if cfg.budget == "sqrt-d" else _loops.EXACT_NORM
    raw = run_primal_dual(
        X, T, eta, ledger.cost_model, rng,
        objective=_loops.QUADRATIC, dual_mode=_loops.RUNNING_AVERAGE, column_mode=column_mode,
        amp_model=cfg.amp_model, b=b, monitor=cfg.monitor,
    )
    _book(ledger, raw["lo"], raw["hi"])
    w_bar = average_iterate(X, raw["picks"])
    diag: dict = {}
    if cfg.monitor:
        diag = _monitor_report(X, raw, 10.0 if column_mode == _loops.ESTIMATED_NORM else 8.0)
        picked = X.entries[raw["picks"]]
        mean_row = picked.mean(axis=0)
        best = float(np.asarray(b)[raw["picks"]].sum() + T * mean_row @ mean_row)
        diag["regret"] = best - float(raw["mon"][_loops.MON_PAYOFF])
        diag["regret_bound"] = 4.0 * (1.0 + math.log(T))
        diag["regret_holds"] = diag["regret"] <= diag["regret_bound"]
    return TrainResult(
        w_bar=w_bar,
        achieved_margin=quadratic_objective(X, b, w_bar),
        ledger=ledger.snapshot(),
        wall_time=time.perf_counter() - t0,
        T=T,
        eta=eta,
        history={k: raw[k] for k in ("picks", "js", "scales", "offsets", "log_weights")},
        diagnostics=diag,
    )


def train_meb(X: DataMatrix, cfg: QuadConfig, ledger: QueryLedger | None = None, rng=None) -> TrainResult:
    """Approximate minimum enclosing ball; w_bar is the center and the exact radius^2 is in diagnostics."""
    res = _run_quadratic(X, meb_offsets(X), cfg, ledger, rng)
    res.diagnostics["radius_sq"] = enclosing_radius_sq(X, res.w_bar)
    return res


def train_l2_svm(X: DataMatrix, cfg: QuadConfig, ledger: QueryLedger | None = None, rng=None) -> SVMResult:
    """l2-margin SVM through the quadratic game with b = 0."""
    b = np.zeros(X.n) if cfg.b is None else cfg.b
    if b.shape != (X.n,):
        raise ValueError(f"offsets have shape {b.shape}, expected ({X.n},)")
    res = _run_quadratic(X, b, cfg, ledger, rng)
    w_bar = res.w_bar
    objective = res.achieved_margin
    if objective <= 0.0:
        return SVMResult(NOT_SEPARATED, w_bar, None, 0.0, objective, res)
    w_hat = w_bar / np.linalg.norm(w_bar)
    return SVMResult(SEPARATED, w_bar, w_hat, math.sqrt(objective), objective, res)
