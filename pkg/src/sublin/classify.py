"""End-to-end maximin-margin trainers and the classical comparator."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _core, _loops
from ._kernels import kernel_draws, kernel_estimator_loop
from .instance import DataMatrix, QueryLedger, exact_margin
from .mwdual import SuccinctClassifier, TrainConfig, regret_gap
from .qsim import QueryCostModel

SQRT_N_CONST = 23.0
SQRT_D_CONST = 27.0
MAX_FEATURES = 10**6


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "linear"
    q: int = 1
    s: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "polynomial", "gaussian"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "polynomial" and (int(self.q) != self.q or self.q < 1):
            raise ValueError("polynomial degree must be a positive integer")
        if self.kind == "gaussian" and not self.s > 0:
            raise ValueError("gaussian width must be positive")

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        kind, _, arg = text.partition(":")
        if kind == "linear":
            return cls()
        if kind in ("poly", "polynomial"):
            return cls("polynomial", q=int(arg))
        if kind in ("gauss", "gaussian"):
            return cls("gaussian", s=float(arg))
        raise ValueError(f"unknown kernel {text!r}")

    @property
    def variance_bound(self) -> float:
        if self.kind == "gaussian":
            return 1.0 / self.s**4
        return float(self.q)

    @property
    def taylor_ratio(self) -> float:
        # geometric proposal over Taylor terms with mean 1/s^2
        return 1.0 / (1.0 + self.s**2)

    @property
    def estimate_queries(self) -> int:
        """Entry queries spent by one kernel estimate."""
        if self.kind == "gaussian":
            return 1 + math.ceil(1.0 / self.s**2)
        return self.q

    def exact(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.kind == "gaussian":
            diff = np.sum(x * x, -1)[..., :, None] + np.sum(y * y, -1)[..., None, :] - 2.0 * x @ y.T
            return np.exp(-np.maximum(diff, 0.0) / (2.0 * self.s**2))
        return (x @ y.T) ** (self.q if self.kind == "polynomial" else 1)

    def code(self) -> tuple[int, int, float]:
        if self.kind == "gaussian":
            return 1, 0, self.s
        return 0, (self.q if self.kind == "polynomial" else 1), 1.0


@dataclass
class TrainResult:
    w_bar: np.ndarray
    achieved_margin: float
    ledger: dict
    wall_time: float
    T: int
    eta: float
    classifier: SuccinctClassifier | None = None
    history: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def charged_queries(self) -> int:
        return self.ledger["charged_queries"]

    def to_record(self) -> dict:
        rec = {
            "T": self.T,
            "eta": self.eta,
            "achieved_margin": self.achieved_margin,
            "ledger": dict(self.ledger),
            "wall_time": self.wall_time,
        }
        if self.classifier is not None:
            rec["classifier"] = self.classifier.to_record()
        return rec


def _seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**32 - 1))


def _book(ledger: QueryLedger, lo: np.ndarray, hi: np.ndarray) -> None:
    for cat, a, b in zip(("state_prep", "max_finding", "norm_estimation", "direct"), lo, hi):
        ledger.charge(cat, int(b) * _core.CARRY + int(a))


def _row_arrays(X: DataMatrix):
    R = X.group_rows
    nz = R != 0.0
    row_ptr = np.zeros(R.shape[0] + 1, dtype=np.int64)
    row_ptr[1:] = np.cumsum(nz.sum(axis=1))
    rows, cols = np.nonzero(nz)
    return R, row_ptr, cols.astype(np.int64), R[rows, cols], np.einsum("ij,ij->i", R, R)


def norm_median_runs(T: int) -> int:
    return 2 * math.ceil(math.log(max(T, 2)))


def run_primal_dual(
    X: DataMatrix,
    T: int,
    eta: float,
    cost: QueryCostModel,
    rng: np.random.Generator,
    *,
    objective: int = _loops.LINEAR,
    dual_mode: int = _loops.LAZY_PROJECTION,
    primal_mode: int = _loops.AMPLIFIED,
    column_mode: int = _loops.EXACT_NORM,
    amp_model: str = "sqrt-weight",
    b: np.ndarray | None = None,
    monitor: bool = False,
):
    """Run the compiled loop and return its raw arrays as a dict."""
    R, row_ptr, row_idx, row_val, row_sq = _row_arrays(X)
    memb_ptr, memb = X.member_arrays()
    if b is None:
        group_b = np.zeros(X.n_groups)
    else:
        b = np.asarray(b, dtype=np.float64)
        group_b = b[[m[0] for m in X.group_members]]
        if not np.array_equal(group_b[X.group_of], b):
            raise ValueError("identical rows must share the same offset")
    bits = cost.effective_bits
    med_runs = norm_median_runs(T)
    if column_mode == _loops.ESTIMATED_NORM:
        tb = _core.new_ae_tables(X.d, eta**2 / 2.0, cost.ae_const, _core.median_repeats(bits), X.d + 1)
    else:
        tb = _core.new_ae_tables(1, 0.5, cost.ae_const, 1, 1)
    step = 1.0 / math.sqrt(2.0 * T)
    out = _loops.primal_dual_loop(
        R, X.group_sizes(), memb_ptr, memb, group_b, row_ptr, row_idx, row_val, row_sq,
        X.n, T, eta, step, objective, dual_mode, primal_mode, column_mode,
        0.5 if amp_model == "sqrt-weight" else 1.0,
        float(cost.c_prep_per_iter), float(cost.c_dh), int(cost.c_lazy_step), int(cost.grover_calls),
        tb, med_runs, bits, monitor, _seed(rng),
    )
    keys = ("picks", "norms", "js", "scales", "offsets", "log_weights", "y", "lo", "hi", "mon", "sum_v", "wsum", "est_log")
    raw = dict(zip(keys, out))
    raw.update(T=T, eta=eta, step=step, med_runs=med_runs, group_b=group_b)
    return raw


def _monitor_report(X: DataMatrix, raw: dict, mw_bound: float) -> dict:
    T, eta = raw["T"], raw["eta"]
    mon = raw["mon"]
    log_n = math.log(max(X.n, 2))
    rep = {
        "mw_lhs": float(mon[_loops.MON_PV]),
        "mw_rhs": float(raw["sum_v"].min() + eta * mon[_loops.MON_PV2] + log_n / eta),
        "second_moment": float(mon[_loops.MON_PV2]),
        "second_moment_bound": mw_bound * T,
        "mean_attempts": float(mon[_loops.MON_ATTEMPTS] / T),
    }
    rep["mw_holds"] = rep["mw_lhs"] <= rep["mw_rhs"] + 1e-9 * max(1.0, abs(rep["mw_rhs"]))
    rep["second_moment_holds"] = rep["second_moment"] <= rep["second_moment_bound"]
    return rep


def _linear_result(X: DataMatrix, raw: dict, ledger: QueryLedger, t0: float, mw_bound: float, monitor: bool) -> TrainResult:
    clf = SuccinctClassifier(raw["T"], raw["step"], raw["picks"], raw["norms"])
    w_bar = clf.w_bar(X)
    diag: dict = {}
    if monitor:
        diag = _monitor_report(X, raw, mw_bound)
        gap = regret_gap(X, raw["picks"], float(raw["mon"][_loops.MON_XW]))
        diag.update(regret=gap, regret_bound=2.0 * math.sqrt(2.0 * raw["T"]))
        diag["regret_holds"] = gap <= diag["regret_bound"]
        diag["dense_w_bar"] = raw["wsum"] / raw["T"]
        if raw["est_log"].shape[0]:
            diag["norm_log"] = raw["est_log"]
    history = {k: raw[k] for k in ("js", "scales", "offsets", "log_weights")}
    return TrainResult(
        w_bar=w_bar,
        achieved_margin=exact_margin(X, w_bar),
        ledger=ledger.snapshot(),
        wall_time=time.perf_counter() - t0,
        T=raw["T"],
        eta=raw["eta"],
        classifier=clf,
        history=history,
        diagnostics=diag,
    )


def _setup(X, cfg, ledger, rng, const):
    ledger = ledger if ledger is not None else QueryLedger(cfg.cost)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    T = cfg.iterations(X.n, const)
    eta = math.sqrt(math.log(max(X.n, 2)) / T)
    return ledger, rng, T, eta


def train_linear_sqrt_n(X: DataMatrix, cfg: TrainConfig, ledger: QueryLedger | None = None, rng=None) -> TrainResult:
    """Amplified weight-state sampling with host-resident dual iterates."""
    t0 = time.perf_counter()
    ledger, rng, T, eta = _setup(X, cfg, ledger, rng, SQRT_N_CONST)
    raw = run_primal_dual(X, T, eta, ledger.cost_model, rng, amp_model=cfg.amp_model, monitor=cfg.monitor)
    _book(ledger, raw["lo"], raw["hi"])
    return _linear_result(X, raw, ledger, t0, 8.0, cfg.monitor)


def train_linear_sqrt_d(X: DataMatrix, cfg: TrainConfig, ledger: QueryLedger | None = None, rng=None) -> TrainResult:
    """Amplified sampling on both sides; dual norms come from bitwise mean estimation."""
    t0 = time.perf_counter()
    ledger, rng, T, eta = _setup(X, cfg, ledger, rng, SQRT_D_CONST)
    raw = run_primal_dual(
        X, T, eta, ledger.cost_model, rng,
        column_mode=_loops.ESTIMATED_NORM, amp_model=cfg.amp_model, monitor=cfg.monitor,
    )
    _book(ledger, raw["lo"], raw["hi"])
    return _linear_result(X, raw, ledger, t0, 10.0, cfg.monitor)


def train_classical_baseline(X: DataMatrix, cfg: TrainConfig, ledger: QueryLedger | None = None, rng=None) -> TrainResult:
    """Classical sublinear primal-dual method: dense weight update, exact dual norms."""
    t0 = time.perf_counter()
    ledger, rng, T, eta = _setup(X, cfg, ledger, rng, SQRT_N_CONST)
    raw = run_primal_dual(X, T, eta, ledger.cost_model, rng, primal_mode=_loops.CLASSICAL, monitor=cfg.monitor)
    _book(ledger, raw["lo"], raw["hi"])
    return _linear_result(X, raw, ledger, t0, 8.0, cfg.monitor)


TRAINERS = {
    "sqrt-n": train_linear_sqrt_n,
    "sqrt-d": train_linear_sqrt_d,
    "baseline": train_classical_baseline,
}


def feature_map(X: np.ndarray, q: int) -> np.ndarray:
    """All degree-q monomials x_{j1}...x_{jq}, indexed by lexicographic q-tuples."""
    X = np.atleast_2d(X)
    out = np.ones((X.shape[0], 1))
    for _ in range(q):
        out = (out[:, :, None] * X[:, None, :]).reshape(X.shape[0], -1)
    return out


def kernel_features(X: DataMatrix, q: int) -> DataMatrix:
    """Rows signs_i * Psi(x_i) of the degree-q feature map applied to the unfolded points."""
    points, signs = X.points()
    return DataMatrix(feature_map(points, q) * signs[:, None])


def kernel_gram(k: KernelSpec, X: DataMatrix) -> np.ndarray:
    """Signed Gram matrix s_i s_j k(x_i, x_j) of the unfolded points."""
    points, signs = X.points()
    return k.exact(points, points) * np.outer(signs, signs)


def kernel_estimate(k: KernelSpec, x, y, ledger: QueryLedger | None = None, rng=None, size: int | None = None):
    """Unbiased estimate(s) of k(x, y) built from l2 samples of y."""
    rng = rng if rng is not None else np.random.default_rng()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    count = 1 if size is None else int(size)
    if ledger is not None:
        ledger.charge("direct", count * k.estimate_queries)
    if not np.any(y):
        if ledger is not None:
            ledger.charge("direct", x.shape[0])
        value = float(k.exact(x[None], y[None])[0, 0])
        return value if size is None else np.full(count, value)
    kind, q, s = k.code()
    draws = kernel_draws(kind, q, s, k.taylor_ratio, x, y, count, _seed(rng))
    return float(draws[0]) if size is None else draws


def train_kernel(
    X: DataMatrix, k: KernelSpec, cfg: TrainConfig, mode: str = "estimator", ledger: QueryLedger | None = None, rng=None
) -> TrainResult:
    """Kernelised trainer; margins are reported in the kernel's feature space."""
    if mode == "explicit-feature":
        if k.kind == "gaussian":
            raise ValueError("explicit features exist only for polynomial kernels")
        q = k.q if k.kind == "polynomial" else 1
        if X.d**q > MAX_FEATURES:
            raise ValueError(f"feature dimension {X.d}^{q} exceeds {MAX_FEATURES}")
        return train_linear_sqrt_d(kernel_features(X, q), cfg, ledger, rng)
    if mode != "estimator":
        raise ValueError(f"unknown kernel mode {mode!r}")
    t0 = time.perf_counter()
    ledger, rng, T, eta = _setup(X, cfg, ledger, rng, SQRT_D_CONST)
    cost = ledger.cost_model
    kind, q, s = k.code()
    step = 1.0 / math.sqrt(2.0 * T)
    points, signs = X.points()
    picks, norms, lo, hi, mon = kernel_estimator_loop(
        np.ascontiguousarray(points), signs, kind, q, s, k.taylor_ratio, T, eta, step,
        0.5 if cfg.amp_model == "sqrt-weight" else 1.0,
        float(cost.c_prep_per_iter), float(cost.c_dh), int(cost.c_lazy_step * k.estimate_queries),
        _seed(rng),
    )
    _book(ledger, lo, hi)
    clf = SuccinctClassifier(T, step, picks, norms)
    coef = np.bincount(picks, weights=clf.pick_weights(), minlength=X.n)
    gram = kernel_gram(k, X)
    margins = gram @ coef
    return TrainResult(
        w_bar=coef,
        achieved_margin=float(margins.min()),
        ledger=ledger.snapshot(),
        wall_time=time.perf_counter() - t0,
        T=T,
        eta=eta,
        classifier=clf,
        diagnostics={"mean_attempts": float(mon[0] / T), "feature_norm": float(math.sqrt(max(coef @ gram @ coef, 0.0)))},
    )


def identify_case(w_bar: np.ndarray, threshold: float = 0.94) -> tuple[int, int]:
    """Lower-bound decision rule: (case, l) with l a 1-based column in 2..d."""
    tail = np.asarray(w_bar)[1:]
    l = int(np.argmax(tail)) + 2
    return (2 if tail.max() > threshold else 1), l
