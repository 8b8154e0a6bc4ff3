"""Query-scaling sweeps as CSV tables plus fitted slopes.

Each sweep runs twice: with the default round count, which grows like ln(n)/eps^2,
and with the round count pinned, which isolates the per-round query cost.
"""

import argparse
from pathlib import Path

from sublin.bench import run_sweep, to_csv

SIZES = [2**k for k in range(8, 14)]
SWEEPS = (
    ("sqrt-n", "n", 8),
    ("baseline", "n", 8),
    ("sqrt-d", "d", 16),
    ("game", "n", 0),
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", type=Path, default=Path("results/scaling"))
    ap.add_argument("--eps", type=float, default=0.1)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fixed-rounds", type=int, default=200)
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    summary = ["algorithm,sweep,rounds,slope"]
    for alg, sweep, fixed in SWEEPS:
        for label, rounds in (("default", None), ("fixed", args.fixed_rounds)):
            points, slope = run_sweep(alg, sweep, SIZES, fixed, args.eps, args.seeds, args.seed, rounds=rounds)
            (args.out_dir / f"{alg}_{sweep}_{label}.csv").write_text(to_csv(points))
            summary.append(f"{alg},{sweep},{label},{slope!r}")
            print(f"{alg:9s} vs {sweep} ({label:7s} rounds): slope {slope:.3f}", flush=True)
    (args.out_dir / "slopes.csv").write_text("\n".join(summary) + "\n")


if __name__ == "__main__":
    main()
