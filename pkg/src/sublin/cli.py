"""Command-line front end: train, meb, svm, game, bench, verify and gen."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import bench
from .classify import TRAINERS, KernelSpec, kernel_features, kernel_gram, train_kernel
from .instance import (
    MEB_CASE1,
    MEB_CASE2,
    SIGMA_CASE1,
    SIGMA_CASE2,
    DataMatrix,
    QueryLedger,
    exact_margin,
    format_instance,
    generate,
    load_dataset,
    parse_instance,
    reference_maximin,
)
from .mwdual import TrainConfig, SuccinctClassifier
from .qsim import QueryCostModel
from .quadratic import (
    QuadConfig,
    average_iterate,
    enclosing_radius_sq,
    meb_offsets,
    quadratic_objective,
    train_l2_svm,
    train_meb,
)
from .reference import MAX_ENTRIES, tiny_game_value
from .zerosum import (
    DegenerateReduction,
    GameInstance,
    Strategy,
    antisymmetrize,
    recover_strategies,
    solve_game,
    verify_epsilon_optimal,
)

EXIT_OK, EXIT_USAGE, EXIT_CONTRACT = 0, 2, 3
SEED_ENV = "SUBLIN_SEED"
AUDIT_TOL = 1e-9


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _cost_flags(p: argparse.ArgumentParser) -> None:
    for f in dataclasses.fields(QueryCostModel):
        p.add_argument(f"--cost.{f.name}", dest=f"cost_{f.name}", type=type(f.default), default=None, metavar="V")


def _cost(args) -> QueryCostModel:
    overrides = {
        f.name: getattr(args, f"cost_{f.name}")
        for f in dataclasses.fields(QueryCostModel)
        if getattr(args, f"cost_{f.name}", None) is not None
    }
    return QueryCostModel(**overrides)


def _source_flags(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", help="generator spec, e.g. case2:n=64,d=8,l=3")
    src.add_argument("--data", help="dataset file")
    p.add_argument("--format", default="csv-dense", choices=("csv-dense", "svmlight-sparse"))
    p.add_argument("--labeled", action="store_true", help="first column (csv) holds +-1 labels")


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--seed", type=int, default=None, help=f"falls back to ${SEED_ENV}")
    p.add_argument("--out", default=None, help="write the JSON record here instead of stdout")
    p.add_argument("--strict", action="store_true", help="exit 3 when the accuracy contract is violated")
    _cost_flags(p)


def _resolve_seed(args, required: bool = False) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"${SEED_ENV} must be an integer, got {env!r}") from None
    if required:
        raise UsageError(f"a seed is required: pass --seed or set ${SEED_ENV}")
    return int(np.random.SeedSequence().entropy % 2**32)


def _source(args) -> dict:
    if args.instance is not None:
        return {"instance": args.instance}
    return {"data": args.data, "format": args.format, "labeled": bool(args.labeled)}


def _load(source: dict, seed: int | None = None):
    if "instance" in source:
        spec = parse_instance(source["instance"])
        if spec.seed is None and seed is not None:
            spec = dataclasses.replace(spec, seed=seed)
        return generate(spec), spec
    return load_dataset(source["data"], source.get("format", "csv-dense"), source.get("labeled", False)), None


def _matrix(obj) -> DataMatrix:
    if not isinstance(obj, DataMatrix):
        raise UsageError("this command needs a data matrix, not a game")
    return obj


def _check_eps(eps: float) -> None:
    if not 0.0 < eps < 1.0:
        raise UsageError("--eps must lie in (0, 1)")


def _emit(record: dict, out: str | None) -> None:
    text = json.dumps(record, indent=2, sort_keys=True, default=_jsonable) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _record(command: str, config: dict, seed: int, ledger: dict, audits: dict, wall: float, status: str, **extra) -> dict:
    rec = {
        "command": command,
        "config": config,
        "seed": seed,
        "ledger": ledger,
        "audits": audits,
        "wall_time": wall,
        "status": status,
    }
    rec.update(extra)
    return rec


def _known_sigma(spec) -> float | None:
    if spec is None:
        return None
    return {"lower-linear-case1": SIGMA_CASE1, "lower-linear-case2": SIGMA_CASE2}.get(spec.kind)


def _known_meb(spec) -> float | None:
    if spec is None:
        return None
    return {"lower-linear-case1": MEB_CASE1, "lower-linear-case2": MEB_CASE2}.get(spec.kind)


def _finish(record: dict, args, violated: bool) -> int:
    _emit(record, args.out)
    return EXIT_CONTRACT if (args.strict and violated) else EXIT_OK


# ---------------------------------------------------------------- commands


def cmd_train(args) -> int:
    _check_eps(args.eps)
    seed = _resolve_seed(args)
    source = _source(args)
    X_obj, spec = _load(source, seed)
    X = _matrix(X_obj)
    cost = _cost(args)
    kernel = KernelSpec.parse(args.kernel)
    if args.repeats < 1:
        raise UsageError("--repeats must be positive")
    t0 = time.perf_counter()
    runs = []
    for r in range(args.repeats):
        cfg = TrainConfig(eps=args.eps, seed=seed + r, cost=cost, amp_model=args.amp_model, rounds=args.rounds)
        if kernel.kind == "linear":
            res = TRAINERS[args.budget](X, cfg)
        else:
            res = train_kernel(X, kernel, cfg, mode=args.kernel_mode)
        runs.append(res)
    best = max(range(len(runs)), key=lambda i: runs[i].achieved_margin)
    res = runs[best]
    # kernel margins live in feature space and are already exact
    margin = exact_margin(X, res.w_bar) if kernel.kind == "linear" else res.achieved_margin
    audits = {"margin": margin, "best_repeat": best, "repeat_margins": [r.achieved_margin for r in runs]}
    sigma = _known_sigma(spec) if kernel.kind == "linear" else None
    if sigma is None and args.strict and kernel.kind == "linear" and X.n * X.d <= MAX_ENTRIES:
        sigma = reference_maximin(X, min(1e-3, args.eps / 4.0))
    violated = False
    if sigma is not None:
        audits["sigma_reference"] = sigma
        audits["contract"] = margin >= sigma - args.eps
        violated = not audits["contract"]
    config = {
        **source, "eps": args.eps, "budget": args.budget, "kernel": args.kernel, "kernel_mode": args.kernel_mode,
        "repeats": args.repeats, "amp_model": args.amp_model, "rounds": args.rounds, "cost": dataclasses.asdict(cost),
    }
    rec = _record(
        "train", config, seed, res.ledger, audits, time.perf_counter() - t0,
        "contract violated" if violated else "ok",
        T=res.T, classifier=res.classifier.to_record(),
    )
    return _finish(rec, args, violated)


def cmd_meb(args) -> int:
    _check_eps(args.eps)
    seed = _resolve_seed(args)
    source = _source(args)
    X_obj, spec = _load(source, seed)
    X = _matrix(X_obj)
    cost = _cost(args)
    t0 = time.perf_counter()
    res = train_meb(X, QuadConfig(eps=args.eps, budget=args.budget, seed=seed, cost=cost, T=args.rounds))
    radius_sq = enclosing_radius_sq(X, res.w_bar)
    audits = {"radius_sq": radius_sq}
    violated = False
    target = _known_meb(spec)
    if target is not None:
        audits["sigma_meb"] = target
        audits["contract"] = radius_sq <= target + args.eps
        violated = not audits["contract"]
    config = {**source, "eps": args.eps, "budget": args.budget, "rounds": args.rounds, "cost": dataclasses.asdict(cost)}
    rec = _record(
        "meb", config, seed, res.ledger, audits, time.perf_counter() - t0,
        "contract violated" if violated else "ok",
        T=res.T, center=res.w_bar, picks=res.history["picks"],
    )
    return _finish(rec, args, violated)


def cmd_svm(args) -> int:
    _check_eps(args.eps)
    seed = _resolve_seed(args)
    source = _source(args)
    X = _matrix(_load(source, seed)[0])
    cost = _cost(args)
    t0 = time.perf_counter()
    out = train_l2_svm(X, QuadConfig(eps=args.eps, budget=args.budget, seed=seed, cost=cost, T=args.rounds))
    audits = {"objective": quadratic_objective(X, np.zeros(X.n), out.w_bar), "margin_lb": out.margin_lb}
    if out.separated:
        audits["direction_margin"] = exact_margin(X, out.w_hat)
        audits["am_gm_holds"] = audits["direction_margin"] ** 2 >= audits["objective"] - AUDIT_TOL
    config = {**source, "eps": args.eps, "budget": args.budget, "rounds": args.rounds, "cost": dataclasses.asdict(cost)}
    rec = _record(
        "svm", config, seed, out.train.ledger, audits, time.perf_counter() - t0, out.status,
        T=out.train.T, w_bar=out.w_bar, w_hat=out.w_hat, picks=out.train.history["picks"],
    )
    return _finish(rec, args, not out.separated)


def _load_game(text: str, seed: int) -> tuple[np.ndarray, str]:
    path = Path(text)
    if path.exists():
        X = np.loadtxt(path, delimiter=",", ndmin=2)
        return X, f"file:{text}"
    spec = parse_instance(text)
    if spec.kind not in ("lower-zerosum", "random-antisymmetric"):
        raise UsageError(f"{text!r} is neither a file nor a game generator")
    if spec.seed is None:
        spec = dataclasses.replace(spec, seed=seed)
    return generate(spec).X, format_instance(spec)


def cmd_game(args) -> int:
    _check_eps(args.eps)
    seed = _resolve_seed(args)
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    X, matrix_desc = _load_game(args.matrix, seed)
    cost = _cost(args)
    g = GameInstance(X)
    reduced = not g.antisymmetric
    if reduced:
        g = antisymmetrize(X)
    t0 = time.perf_counter()
    trials = []
    ledger_total = {}
    for r in range(args.trials):
        ledger = QueryLedger(cost)
        w = solve_game(g, args.eps, ledger, np.random.default_rng(seed + r), rounds=args.rounds)
        ok, worst = verify_epsilon_optimal(g, w, args.eps)
        trial = {"seed": seed + r, "feasible": ok, "max_violation": worst, "strategy": w.support, **w.info}
        if reduced:
            try:
                a, b = recover_strategies(w, *X.shape)
                payoff = float(a.dense() @ X @ b.dense())
                trial.update(row_strategy=a.support, col_strategy=b.support, payoff=payoff)
                if max(X.shape) <= 6:
                    value = tiny_game_value(X)
                    trial.update(game_value=value, within_18eps=payoff >= value - 18.0 * args.eps)
            except DegenerateReduction as exc:
                trial["recovery"] = str(exc)
        trials.append(trial)
        for k, v in ledger.snapshot().items():
            ledger_total[k] = ledger_total.get(k, 0) + v
    successes = sum(t["feasible"] for t in trials)
    audits = {"feasible_trials": successes, "trials": args.trials, "success_rate": successes / args.trials}
    violated = successes * 3 < 2 * args.trials
    config = {"matrix": matrix_desc, "eps": args.eps, "trials": args.trials, "reduced": reduced,
              "rounds": args.rounds, "cost": dataclasses.asdict(cost)}
    rec = _record(
        "game", config, seed, ledger_total, audits, time.perf_counter() - t0,
        "contract violated" if violated else "ok", trial_records=trials,
    )
    return _finish(rec, args, violated)


def _sizes(args) -> list[int]:
    if args.sizes:
        try:
            return [int(s) for s in args.sizes.split(",")]
        except ValueError:
            raise UsageError(f"malformed --sizes {args.sizes!r}") from None
    lo, _, hi = args.range.partition(":")
    try:
        return [2**e for e in range(int(lo), int(hi or lo) + 1)]
    except ValueError:
        raise UsageError(f"malformed --range {args.range!r}") from None


def cmd_bench(args) -> int:
    _check_eps(args.eps)
    seed = _resolve_seed(args, required=True)
    sizes = _sizes(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        points, slope = bench.run_sweep(
            args.alg, args.sweep, sizes, args.fixed, args.eps, args.seeds, seed,
            instance=args.instance, rounds=args.rounds, cost=_cost(args),
        )
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    text = bench.to_csv(points)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"slope: {slope!r}", file=sys.stderr)
    return EXIT_OK


def _verify_train(rec: dict, X: DataMatrix) -> dict:
    cfg = rec["config"]
    clf = SuccinctClassifier.from_record(rec["classifier"])
    kernel = KernelSpec.parse(cfg.get("kernel", "linear"))
    if kernel.kind != "linear" and cfg.get("kernel_mode") == "estimator":
        coef = np.bincount(clf.picks, weights=clf.pick_weights(), minlength=X.n)
        margin = float((kernel_gram(kernel, X) @ coef).min())
    elif kernel.kind == "polynomial":
        F = kernel_features(X, kernel.q)
        margin = exact_margin(F, clf.w_bar(F))
    else:
        margin = exact_margin(X, clf.w_bar(X))
    checks = {"margin": margin, "margin_matches": abs(margin - rec["audits"]["margin"]) <= AUDIT_TOL}
    if "sigma_reference" in rec["audits"]:
        checks["contract"] = margin >= rec["audits"]["sigma_reference"] - cfg["eps"]
    return checks


def _verify_quadratic(rec: dict, X: DataMatrix) -> dict:
    picks = np.asarray(rec["picks"], dtype=np.int64)
    center = average_iterate(X, picks)
    checks = {"iterate_matches": bool(np.allclose(center, rec["center" if rec["command"] == "meb" else "w_bar"], rtol=0, atol=AUDIT_TOL))}
    if rec["command"] == "meb":
        radius_sq = enclosing_radius_sq(X, center)
        checks["radius_sq"] = radius_sq
        checks["radius_matches"] = abs(radius_sq - rec["audits"]["radius_sq"]) <= AUDIT_TOL
        checks["feasible"] = radius_sq >= -quadratic_objective(X, meb_offsets(X), center) - AUDIT_TOL
        if "sigma_meb" in rec["audits"]:
            checks["contract"] = radius_sq <= rec["audits"]["sigma_meb"] + rec["config"]["eps"]
    else:
        objective = quadratic_objective(X, np.zeros(X.n), center)
        checks["objective"] = objective
        checks["objective_matches"] = abs(objective - rec["audits"]["objective"]) <= AUDIT_TOL
        checks["status_matches"] = (objective > 0.0) == (rec["status"] == "separated")
    return checks


def _verify_game(rec: dict) -> dict:
    cfg = rec["config"]
    X, _ = _load_game(cfg["matrix"].removeprefix("file:"), rec["seed"])
    g = antisymmetrize(X) if cfg["reduced"] else GameInstance(X)
    feasible = 0
    consistent = True
    for trial in rec["trial_records"]:
        w = Strategy({int(k): float(v) for k, v in trial["strategy"].items()}, g.n)
        ok, worst = verify_epsilon_optimal(g, w, cfg["eps"])
        feasible += ok
        consistent &= ok == trial["feasible"] and abs(worst - trial["max_violation"]) <= AUDIT_TOL
    return {"feasible_trials": feasible, "trials_match": bool(consistent)}


def cmd_verify(args) -> int:
    try:
        rec = json.loads(Path(args.record).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read record {args.record}: {exc}") from None
    command = rec.get("command")
    if command == "game":
        checks = _verify_game(rec)
    elif command in ("train", "meb", "svm"):
        source = {k: rec["config"][k] for k in ("instance", "data", "format", "labeled") if k in rec["config"]}
        if args.data:
            source = {"data": args.data, "format": args.format, "labeled": bool(args.labeled)}
        X = _matrix(_load(source, rec["seed"])[0])
        checks = _verify_train(rec, X) if command == "train" else _verify_quadratic(rec, X)
    else:
        raise UsageError(f"record has unknown command {command!r}")
    verified = all(v for v in checks.values() if isinstance(v, bool))
    report = {"record": args.record, "command": command, "checks": checks, "verified": verified}
    _emit(report, args.out)
    return EXIT_CONTRACT if (args.strict and not verified) else EXIT_OK


def cmd_gen(args) -> int:
    seed = _resolve_seed(args)
    spec = parse_instance(args.instance)
    if spec.seed is None:
        spec = dataclasses.replace(spec, seed=seed)
    obj = generate(spec)
    X = obj.X if isinstance(obj, GameInstance) else obj.entries
    lines = [",".join(repr(float(v)) for v in row) for row in X]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sublin", description="Sublinear primal-dual solvers with query accounting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="maximin-margin linear or kernel classifier")
    _source_flags(p)
    _common_flags(p)
    p.add_argument("--budget", default="sqrt-n", choices=tuple(TRAINERS))
    p.add_argument("--kernel", default="linear", help="linear | poly:q | gauss:s")
    p.add_argument("--kernel-mode", default="estimator", choices=("estimator", "explicit-feature"))
    p.add_argument("--repeats", type=int, default=1, help="keep the best of this many seeded runs")
    p.add_argument("--amp-model", default="sqrt-weight", choices=("sqrt-weight", "linear-amplitude"))
    p.add_argument("--rounds", type=int, default=None, help="override the iteration count")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("meb", cmd_meb, "minimum enclosing ball"), ("svm", cmd_svm, "l2-margin SVM")):
        p = sub.add_parser(name, help=helptext)
        _source_flags(p)
        _common_flags(p)
        p.add_argument("--budget", default="sqrt-n", choices=("sqrt-n", "sqrt-d"))
        p.add_argument("--rounds", type=int, default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("game", help="epsilon-optimal strategy of a zero-sum game")
    p.add_argument("--matrix", required=True, help="CSV file or generator spec such as antisym:n=65")
    _common_flags(p)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--rounds", type=int, default=None)
    p.set_defaults(func=cmd_game)

    p = sub.add_parser("bench", help="query-scaling sweep")
    p.add_argument("--alg", required=True, choices=bench.ALGORITHMS)
    p.add_argument("--sweep", default="n", choices=("n", "d"))
    sizes = p.add_mutually_exclusive_group(required=True)
    sizes.add_argument("--sizes", help="comma-separated sizes")
    sizes.add_argument("--range", help="exponent range lo:hi for sizes 2^lo..2^hi")
    p.add_argument("--fixed", type=int, default=8, help="the dimension held fixed")
    p.add_argument("--instance", default=None, choices=bench.INSTANCE_KINDS)
    p.add_argument("--seeds", type=int, default=10, help="seeded trials per size")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--seed", type=int, default=None, help=f"base seed (or ${SEED_ENV})")
    p.add_argument("--rounds", type=int, default=None, help="hold the iteration count fixed across sizes")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    _cost_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="recompute the audits of a stored record")
    p.add_argument("--record", required=True)
    p.add_argument("--data", default=None, help="dataset for records trained on files")
    p.add_argument("--format", default="csv-dense", choices=("csv-dense", "svmlight-sparse"))
    p.add_argument("--labeled", action="store_true")
    p.add_argument("--out", default=None)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen", help="write a generated instance as CSV")
    p.add_argument("--instance", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError, FileNotFoundError) as exc:
        print(f"sublin {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
