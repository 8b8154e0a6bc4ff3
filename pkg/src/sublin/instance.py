"""Input matrices, query-counted access, instance generators and exact evaluators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .qsim import QueryCostModel

NORM_TOL = 1e-12
CATEGORIES = ("state_prep", "max_finding", "norm_estimation", "direct")


@dataclass(frozen=True)
class DataMatrix:
    """Dense n x d matrix whose rows lie in the unit ball.

    Identical rows are grouped once at construction; samplers use the groups
    to keep host work proportional to the number of distinct rows. ``signs``
    keeps the folded labels so that nonlinear feature maps can be applied to
    the original points.
    """

    entries: np.ndarray
    labels_folded: bool = False
    signs: np.ndarray | None = field(default=None, repr=False)
    group_of: np.ndarray = field(init=False, repr=False)
    group_rows: np.ndarray = field(init=False, repr=False)
    group_members: tuple = field(init=False, repr=False)

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.entries, dtype=np.float64))
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-d matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("matrix entries must be finite")
        norms = np.sqrt(np.einsum("ij,ij->i", X, X))
        if norms.max() > 1.0 + NORM_TOL:
            raise ValueError(f"row norm {norms.max():.6g} exceeds 1")
        X.setflags(write=False)
        if self.signs is not None:
            signs = np.asarray(self.signs, dtype=np.float64).copy()
            if signs.shape != (X.shape[0],) or not np.all(np.isin(signs, (-1.0, 1.0))):
                raise ValueError("signs must be one +-1 entry per row")
            signs.setflags(write=False)
            object.__setattr__(self, "signs", signs)
        uniq, inverse = np.unique(X, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        order = np.argsort(inverse, kind="stable")
        splits = np.cumsum(np.bincount(inverse, minlength=len(uniq)))[:-1]
        object.__setattr__(self, "entries", X)
        object.__setattr__(self, "group_of", inverse.astype(np.int64))
        object.__setattr__(self, "group_rows", np.ascontiguousarray(uniq))
        object.__setattr__(self, "group_members", tuple(np.split(order, splits)))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def d(self) -> int:
        return self.entries.shape[1]

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Unfolded points and their label signs (all +1 when no labels were folded)."""
        if self.signs is None:
            return self.entries, np.ones(self.n)
        return self.entries * self.signs[:, None], self.signs

    @property
    def n_groups(self) -> int:
        return self.group_rows.shape[0]

    def group_sizes(self) -> np.ndarray:
        return np.array([len(m) for m in self.group_members], dtype=np.int64)

    def member_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR-style (offsets, row indices) of the row groups."""
        sizes = self.group_sizes()
        offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum(sizes)
        return offsets, np.concatenate(self.group_members).astype(np.int64)


@dataclass
class QueryLedger:
    """Per-run counter of charged oracle queries, split by subroutine."""

    cost_model: QueryCostModel = field(default_factory=QueryCostModel)
    breakdown: dict = field(default_factory=lambda: {c: 0 for c in CATEGORIES})

    def charge(self, category: str, amount: int) -> None:
        if category not in self.breakdown:
            raise KeyError(f"unknown ledger category {category!r}")
        amount = int(amount)
        if amount < 0:
            raise ValueError("charges must be non-negative")
        self.breakdown[category] += amount

    @property
    def charged_queries(self) -> int:
        return sum(self.breakdown.values())

    def snapshot(self) -> dict:
        return {"charged_queries": self.charged_queries, **self.breakdown}


@dataclass(frozen=True)
class InstanceSpec:
    kind: str
    n: int = 0
    d: int = 0
    k: int | None = None
    l: int | None = None
    seed: int | None = None
    shift: float = 0.0
    path: str | None = None

    KINDS = (
        "random-ball",
        "lower-linear-case1",
        "lower-linear-case2",
        "lower-zerosum",
        "random-antisymmetric",
        "file",
    )

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown instance kind {self.kind!r}")
        if self.kind == "file":
            if not self.path:
                raise ValueError("file instances need a path")
            return
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.kind in ("lower-linear-case1", "lower-linear-case2"):
            if self.d < 2:
                raise ValueError("lower-bound instances need d >= 2")
            if self.l is None or not 2 <= self.l <= self.d:
                raise ValueError(f"l must lie in 2..{self.d}")
            if self.kind == "lower-linear-case1":
                if self.n < 3:
                    raise ValueError("case 1 needs n >= 3")
                if self.k is None or not 3 <= self.k <= self.n:
                    raise ValueError(f"k must lie in 3..{self.n}")
        elif self.kind == "lower-zerosum":
            if self.k is None or not 1 <= self.k <= self.n:
                raise ValueError(f"k must lie in 1..{self.n}")
        elif self.kind == "random-ball" and self.d < 1:
            raise ValueError("d must be positive")


_ALIASES = {
    "case1": "lower-linear-case1",
    "case2": "lower-linear-case2",
    "random": "random-ball",
    "ball": "random-ball",
    "zerosum": "lower-zerosum",
    "game": "random-antisymmetric",
    "antisym": "random-antisymmetric",
}


def parse_instance(text: str) -> InstanceSpec:
    """Parse ``kind:key=value,...`` as used by the command line."""
    kind, _, rest = text.partition(":")
    kind = _ALIASES.get(kind.strip(), kind.strip())
    if kind == "file":
        return InstanceSpec(kind="file", path=rest)
    fields: dict = {}
    for part in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, value = part.partition("=")
        if not eq:
            raise ValueError(f"malformed instance field {part!r}")
        key = key.strip()
        if key in ("n", "d", "k", "l", "seed"):
            fields[key] = int(value)
        elif key == "shift":
            fields[key] = float(value)
        else:
            raise ValueError(f"unknown instance field {key!r}")
    return InstanceSpec(kind=kind, **fields)


def format_instance(spec: InstanceSpec) -> str:
    if spec.kind == "file":
        return f"file:{spec.path}"
    parts = [f"n={spec.n}"]
    if spec.d:
        parts.append(f"d={spec.d}")
    for key in ("k", "l", "seed"):
        if getattr(spec, key) is not None:
            parts.append(f"{key}={getattr(spec, key)}")
    if spec.shift:
        parts.append(f"shift={spec.shift!r}")
    return f"{spec.kind}:" + ",".join(parts)


def _fold_and_scale(rows: np.ndarray, labels: np.ndarray | None) -> DataMatrix:
    if rows.shape[0] == 0:
        raise ValueError("empty dataset")
    if labels is not None:
        bad = ~np.isin(labels, (-1.0, 1.0))
        if bad.any():
            raise ValueError(f"labels must be +1 or -1, got {labels[bad][0]!r}")
        rows = rows * labels[:, None]
    scale = max(1.0, float(np.sqrt(np.einsum("ij,ij->i", rows, rows)).max()))
    return DataMatrix(rows / scale, labels_folded=labels is not None, signs=labels)


def load_dataset(path, format: str = "csv-dense", labeled: bool = False, d: int | None = None) -> DataMatrix:
    """Read a dataset, fold labels into row signs and scale all rows by one factor."""
    path = Path(path)
    lines = [ln.strip() for ln in path.read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty file")
    if format == "csv-dense":
        rows, labels = [], []
        width = None
        for lineno, line in enumerate(lines, 1):
            try:
                values = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if labeled:
                labels.append(values[0])
                values = values[1:]
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(values)}")
            rows.append(values)
        if not width:
            raise ValueError(f"{path}: no feature columns")
        return _fold_and_scale(np.array(rows), np.array(labels) if labeled else None)
    if format == "svmlight-sparse":
        parsed, labels = [], []
        max_index = 0
        for lineno, line in enumerate(lines, 1):
            tokens = line.split()
            try:
                labels.append(float(tokens[0]))
                entries = []
                for tok in tokens[1:]:
                    idx, _, val = tok.partition(":")
                    entries.append((int(idx), float(val)))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if any(i < 1 for i, _ in entries):
                raise ValueError(f"{path}:{lineno}: indices are 1-based")
            max_index = max([max_index] + [i for i, _ in entries])
            parsed.append(entries)
        width = d if d is not None else max_index
        if max_index > width:
            raise ValueError(f"{path}: index {max_index} exceeds d={width}")
        rows = np.zeros((len(parsed), width))
        for r, entries in enumerate(parsed):
            for i, v in entries:
                rows[r, i - 1] = v
        return _fold_and_scale(rows, np.array(labels) if labeled else None)
    raise ValueError(f"unknown format {format!r}")


def case_matrix(n: int, d: int, l: int, k: int | None = None) -> np.ndarray:
    """Lower-bound matrix: row 1 is (-1,1)/sqrt2 and the rest (1,1)/sqrt2 on columns {1,l}.

    With ``k`` given, row k is replaced by e_1. Indices are 1-based.
    """
    X = np.zeros((n, d))
    X[:, 0] = 1.0 / math.sqrt(2.0)
    X[0, 0] = -1.0 / math.sqrt(2.0)
    X[:, l - 1] = 1.0 / math.sqrt(2.0)
    if k is not None:
        X[k - 1] = 0.0
        X[k - 1, 0] = 1.0
    return X


def planted_game(n: int, k: int) -> np.ndarray:
    """Antisymmetric game whose row k is +1 and column k is -1 off the diagonal."""
    X = np.zeros((n, n))
    X[k - 1, :] = 1.0
    X[:, k - 1] = -1.0
    X[k - 1, k - 1] = 0.0
    return X


def random_antisymmetric(n: int, rng: np.random.Generator) -> np.ndarray:
    upper = np.triu(rng.uniform(-1.0, 1.0, size=(n, n)), 1)
    return upper - upper.T


def random_ball(n: int, d: int, rng: np.random.Generator, shift: float = 0.0) -> np.ndarray:
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    X = g * rng.uniform(size=(n, 1)) ** (1.0 / d)
    if shift:
        X[:, 0] += shift
        X /= 1.0 + shift
    return X


def generate(spec: InstanceSpec, rng: np.random.Generator | None = None):
    """Build the matrix described by ``spec``; games come back as GameInstance."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    if spec.kind == "lower-linear-case1":
        return DataMatrix(case_matrix(spec.n, spec.d, spec.l, spec.k))
    if spec.kind == "lower-linear-case2":
        return DataMatrix(case_matrix(spec.n, spec.d, spec.l))
    if spec.kind == "random-ball":
        return DataMatrix(random_ball(spec.n, spec.d, rng, spec.shift))
    if spec.kind == "file":
        return load_dataset(spec.path)
    from .zerosum import GameInstance

    if spec.kind == "lower-zerosum":
        return GameInstance(planted_game(spec.n, spec.k))
    return GameInstance(random_antisymmetric(spec.n, rng))


def query_entry(X: DataMatrix, ledger: QueryLedger, i: int, j: int) -> float:
    if not (0 <= i < X.n and 0 <= j < X.d):
        raise IndexError(f"entry ({i}, {j}) outside {X.n}x{X.d}")
    ledger.charge("direct", ledger.cost_model.c_entry)
    return float(X.entries[i, j])


def exact_margin(X: DataMatrix, w: np.ndarray | Callable[[int], float]) -> float:
    """min_i X_i . w, computed without charging any ledger."""
    if callable(w):
        w = np.array([w(j) for j in range(X.d)])
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (X.d,):
        raise ValueError(f"w has shape {w.shape}, expected ({X.d},)")
    return float((X.entries @ w).min())


def reference_maximin(X: DataMatrix, eps_ref: float = 1e-3) -> float:
    """Maximin margin within eps_ref from the exact primal-dual iteration."""
    from .reference import exact_primal_dual

    return exact_primal_dual(X, eps_ref).sigma


# closed-form optima of the lower-bound instances
SIGMA_CASE1 = 1.0 / math.sqrt(4.0 + 2.0 * math.sqrt(2.0))
SIGMA_CASE2 = 1.0 / math.sqrt(2.0)
MEB_CASE1 = (2.0 + math.sqrt(2.0)) / 4.0
MEB_CASE2 = 0.5
