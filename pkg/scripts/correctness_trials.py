"""Seeded success counts for the margin, enclosing-ball and game solvers on the lower-bound instances."""

import argparse
import json
import math

import numpy as np

from sublin.classify import identify_case, train_linear_sqrt_d, train_linear_sqrt_n
from sublin.instance import InstanceSpec, QueryLedger, generate
from sublin.mwdual import TrainConfig
from sublin.quadratic import QuadConfig, train_meb
from sublin.zerosum import solve_game, verify_epsilon_optimal

INV_SQRT2 = 1.0 / math.sqrt(2.0)


def margin_trials(trainer, spec, eps, seeds):
    X = generate(spec)
    margins = [trainer(X, TrainConfig(eps=eps), rng=np.random.default_rng(s)).achieved_margin for s in range(seeds)]
    return {"hits": int(sum(m >= INV_SQRT2 - eps for m in margins)), "min": min(margins), "max": max(margins)}


def identification_trials(spec, case, l, eps, seeds):
    X = generate(spec)
    found = [identify_case(train_linear_sqrt_n(X, TrainConfig(eps=eps), rng=np.random.default_rng(s)).w_bar) for s in range(seeds)]
    return {"hits": sum(f == (case, l) for f in found)}


def meb_trials(spec, bound, eps, seeds):
    X = generate(spec)
    radii = [train_meb(X, QuadConfig(eps=eps), rng=np.random.default_rng(s)).diagnostics["radius_sq"] for s in range(seeds)]
    return {"hits": int(sum(r <= bound + eps for r in radii)), "max_radius_sq": max(radii)}


def game_trials(n, eps, seeds):
    hits = 0
    for s in range(seeds):
        g = generate(InstanceSpec("random-antisymmetric", n=n, seed=s))
        hits += verify_epsilon_optimal(g, solve_game(g, eps, QueryLedger(), np.random.default_rng(s)), eps)[0]
    return {"hits": int(hits)}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=30)
    args = ap.parse_args()
    s = args.seeds
    case2 = InstanceSpec("lower-linear-case2", n=64, d=8, l=5)
    case1 = InstanceSpec("lower-linear-case1", n=64, d=8, k=3, l=5)
    report = {
        "seeds": s,
        "sqrt_n_margin": margin_trials(train_linear_sqrt_n, case2, 0.04, s),
        "sqrt_d_margin": margin_trials(train_linear_sqrt_d, InstanceSpec("lower-linear-case2", n=16, d=256, l=5), 0.04, s),
        "identify_case1": identification_trials(case1, 1, 5, 0.04, s),
        "identify_case2": identification_trials(case2, 2, 5, 0.04, s),
        "meb_case2": meb_trials(case2, 0.5, 0.05, s),
        "meb_case1": meb_trials(case1, (2.0 + math.sqrt(2.0)) / 4.0, 0.05, s),
        "game_random_65": game_trials(65, 0.1, s),
    }
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
