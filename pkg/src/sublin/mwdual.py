"""Primal-dual building blocks: clipped quadratic MW, l2 sampling, OGD and the succinct output."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instance import DataMatrix, QueryLedger
from .qsim import AmplitudeOracle, QueryCostModel, amplify_prepare_sample

AMP_MODELS = ("sqrt-weight", "linear-amplitude")


@dataclass
class TrainConfig:
    """Run parameters; the round count follows T = T_const^2 eps^-2 ln n unless ``rounds`` is set.

    Leaving T_const unset lets each trainer use its own constant.
    """

    eps: float
    T_const: float | None = None
    amp_model: str = "sqrt-weight"
    seed: int | None = None
    rounds: int | None = None
    cost: QueryCostModel = field(default_factory=QueryCostModel)
    monitor: bool = False

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.amp_model not in AMP_MODELS:
            raise ValueError(f"amp_model must be one of {AMP_MODELS}")
        if self.rounds is not None and self.rounds < 1:
            raise ValueError("rounds must be positive")

    def iterations(self, n: int, default_const: float = 23.0) -> int:
        if self.rounds is not None:
            return self.rounds
        const = self.T_const if self.T_const is not None else default_const
        return max(1, math.ceil(const**2 * math.log(max(n, 2)) / self.eps**2))

    def step_size(self, n: int, default_const: float = 23.0) -> float:
        return math.sqrt(math.log(max(n, 2)) / self.iterations(n, default_const))


def clip(v, c: float):
    if not c > 0:
        raise ValueError("clip bound must be positive")
    return np.minimum(c, np.maximum(-c, v)) if isinstance(v, np.ndarray) else min(c, max(-c, v))


@dataclass
class WeightHistory:
    """Per-round records (j_s, scale_s) defining the MW weights lazily.

    The clipped payoff estimate of row i at step s is
    b_coef * b_i + X_i(j_s) * scale_s - offset_s; linear runs leave b and offsets at zero.
    """

    eta: float
    js: list = field(default_factory=list)
    scales: list = field(default_factory=list)
    offsets: list = field(default_factory=list)
    b: np.ndarray | None = None

    def record(self, j: int, scale: float, offset: float = 0.0) -> None:
        if not math.isfinite(scale):
            raise ValueError("non-finite scale")
        self.js.append(int(j))
        self.scales.append(float(scale))
        self.offsets.append(float(offset))

    def __len__(self) -> int:
        return len(self.js)

    def estimates(self, X: DataMatrix, rows: np.ndarray) -> np.ndarray:
        """Clipped estimates v_s(i) for the given rows, shape (len(rows), steps)."""
        if not self.js:
            return np.zeros((len(rows), 0))
        js = np.asarray(self.js)
        raw = X.entries[np.ix_(rows, js)] * np.asarray(self.scales) - np.asarray(self.offsets)
        if self.b is not None:
            raw = raw + self.b[rows][:, None]
        return clip(raw, 1.0 / self.eta)

    def log_weights(self, X: DataMatrix, rows: np.ndarray) -> np.ndarray:
        v = self.estimates(X, rows)
        return np.log1p(-self.eta * v + self.eta**2 * v * v).sum(axis=1)


def lazy_weight(h: WeightHistory, X: DataMatrix, ledger: QueryLedger, i: int) -> float:
    """u_{t+1}(i) as the product of the recorded quadratic factors, billed per step."""
    if not 0 <= i < X.n:
        raise IndexError(f"row {i} outside [0, {X.n})")
    ledger.charge("direct", ledger.cost_model.c_lazy_step * len(h))
    u = 1.0
    for v in h.estimates(X, np.array([i]))[0]:
        u *= 1.0 - h.eta * v + h.eta**2 * v * v
    return u


def weight_oracle(h: WeightHistory, X: DataMatrix, amp_model: str, cost: QueryCostModel) -> AmplitudeOracle:
    alpha = 0.5 if amp_model == "sqrt-weight" else 1.0
    # a common shift keeps long histories representable; amplitudes are only defined up to scale
    shift = h.log_weights(X, np.arange(X.n)).max()

    def amplitudes(idx):
        return np.exp(alpha * (h.log_weights(X, np.atleast_1d(idx)) - shift))

    return AmplitudeOracle(amplitudes, cost.c_lazy_step * len(h))


def measure_weight_state(
    h: WeightHistory, X: DataMatrix, amp_model: str, ledger: QueryLedger, rng: np.random.Generator
) -> int:
    """Sample a row from the prepared weight state.

    sqrt-weight amplitudes give the law u/||u||_1; linear amplitudes give u^2/||u||_2^2.
    """
    if amp_model not in AMP_MODELS:
        raise ValueError(f"amp_model must be one of {AMP_MODELS}")
    oracle = weight_oracle(h, X, amp_model, ledger.cost_model)
    return amplify_prepare_sample(oracle, X.n, ledger, rng)


def l2_sample(v, d: int, ledger: QueryLedger, rng: np.random.Generator, per_call: int | None = None) -> int:
    """Column j with probability v(j)^2/||v||^2.

    With ``per_call`` set the draw goes through amplified state preparation and
    is billed at that per-coefficient cost; otherwise the vector is host-resident.
    """
    values = np.asarray(v(np.arange(d)) if callable(v) else v, dtype=np.float64)
    sq = values * values
    if not sq.sum() > 0:
        raise ValueError("cannot l2-sample the zero vector")
    if per_call is not None:
        return amplify_prepare_sample(AmplitudeOracle.from_vector(values, per_call), d, ledger, rng)
    cum = np.cumsum(sq)
    return min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), d - 1)


def l2_estimate(x: np.ndarray, w: np.ndarray, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draws of the unbiased estimator x(j) ||w||^2 / w(j), j ~ w(j)^2/||w||^2."""
    sq = w * w
    total = sq.sum()
    j = rng.choice(len(w), size=size, p=sq / total)
    return x[j] * total / w[j]


@dataclass
class DualState:
    """Picked rows and the cached dual vector y_t = step * sum of picked rows."""

    X: DataMatrix
    step: float
    picks: list = field(default_factory=list)
    y: np.ndarray | None = None
    norm_sq: float = 0.0

    def __post_init__(self):
        if self.y is None:
            self.y = np.zeros(self.X.d)

    @property
    def norm(self) -> float:
        return math.sqrt(max(self.norm_sq, 0.0))

    def iterate(self) -> np.ndarray:
        return self.y / max(1.0, self.norm)


def ogd_step(s: DualState, i_t: int) -> DualState:
    """Lazy-projection step y <- y + X_{i_t}/sqrt(2T) with the exact incremental norm update."""
    row = s.X.entries[i_t]
    norm_sq = s.norm_sq + 2.0 * s.step * float(row @ s.y) + s.step**2 * float(row @ row)
    return DualState(s.X, s.step, s.picks + [int(i_t)], s.y + s.step * row, norm_sq)


def regret_gap(X: DataMatrix, picks: np.ndarray, sum_xw: float) -> float:
    """max over the unit ball of sum_t X_{i_t} w minus the realised sum_t X_{i_t} w_t."""
    total = X.entries[np.asarray(picks)].sum(axis=0)
    return float(np.linalg.norm(total)) - sum_xw


@dataclass(frozen=True)
class SuccinctClassifier:
    """w_bar = (1/T) sum_t y_t / max(1, norm_t), y_t = scale * sum_{tau < t} X_{i_tau}."""

    T: int
    scale: float
    picks: np.ndarray
    norms: np.ndarray

    def __post_init__(self):
        if len(self.picks) != self.T or len(self.norms) != self.T:
            raise ValueError("picks and norms must have length T")

    def pick_weights(self) -> np.ndarray:
        inv = 1.0 / np.maximum(1.0, np.asarray(self.norms, dtype=np.float64))
        after = np.zeros(self.T)
        after[:-1] = np.cumsum(inv[::-1])[::-1][1:]
        return after * self.scale / self.T

    def w_bar(self, X: DataMatrix) -> np.ndarray:
        coef = np.bincount(np.asarray(self.picks), weights=self.pick_weights(), minlength=X.n)
        return X.entries.T @ coef

    def to_record(self) -> dict:
        return {
            "T": int(self.T),
            "scale": float(self.scale),
            "picks": [int(i) for i in self.picks],
            "norms": [float(v) for v in self.norms],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "SuccinctClassifier":
        return cls(
            int(rec["T"]),
            float(rec["scale"]),
            np.asarray(rec["picks"], dtype=np.int64),
            np.asarray(rec["norms"], dtype=np.float64),
        )


def reconstruct_coordinate(c: SuccinctClassifier, X: DataMatrix, j: int, ledger: QueryLedger | None = None) -> float:
    """One coordinate of w_bar from the picks, at a cost of T entry reads."""
    if not 0 <= j < X.d:
        raise IndexError(f"column {j} outside [0, {X.d})")
    if ledger is not None:
        ledger.charge("direct", c.T * ledger.cost_model.c_entry)
    col = X.entries[np.asarray(c.picks), j]
    y = np.concatenate(([0.0], np.cumsum(col)[:-1])) * c.scale
    return float(np.mean(y / np.maximum(1.0, np.asarray(c.norms))))
