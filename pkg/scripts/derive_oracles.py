"""Independent reference values frozen into the test suite.

Each value is computed by brute force, without touching the package's samplers
or solvers, and printed so it can be pasted into the tests.
"""

import math

import numpy as np


def ae_success_probability(N: int, t: int, eps: float, ae_const: float = 2.0 * math.pi) -> float:
    """P[|t_hat - t| <= eps t] summed over every phase-estimation outcome."""
    M = max(1, math.ceil(ae_const / eps * math.sqrt(N / max(t, 1))))
    theta = math.asin(math.sqrt(t / N)) / math.pi
    y = np.arange(M)
    prob = np.zeros(M)
    for phase in (theta, -theta):
        delta = y / M - phase
        s = np.sin(np.pi * delta)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.sin(M * np.pi * delta) ** 2 / (M * M * s * s)
        f[np.abs(s) < 1e-15] = 1.0
        prob += 0.5 * f
    est = N * np.sin(np.pi * y / M) ** 2
    return float(prob[np.abs(est - t) <= eps * t].sum())


def sphere_grid_maximin(X: np.ndarray, coarse: float = 1e-2, fine: float = 2e-4) -> float:
    """max(0, max over the unit sphere in R^3 of min_i X_i w) by two-level angular grids."""

    def best_on(theta, phi):
        T, P = np.meshgrid(theta, phi, indexing="ij")
        W = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1)
        vals = np.einsum("abk,ik->abi", W, X).min(axis=-1)
        a, b = np.unravel_index(np.argmax(vals), vals.shape)
        return vals[a, b], T[a, b], P[a, b]

    v, t0, p0 = best_on(np.arange(0.0, math.pi + coarse, coarse), np.arange(0.0, 2 * math.pi, coarse))
    for _ in range(3):
        span = 3 * coarse
        v, t0, p0 = best_on(np.arange(t0 - span, t0 + span, fine), np.arange(p0 - span, p0 + span, fine))
        coarse = fine * 10
    return max(0.0, float(v))


def main() -> None:
    for N, t, eps in ((1024, 37, 0.1), (4096, 5, 0.2), (1024, 512, 0.05)):
        print(f"ae success N={N} t={t} eps={eps}: {ae_success_probability(N, t, eps):.6f}")
    F = np.arange(256) / 256.0
    print("truncated mean of i/256 at 16 bits:", np.floor(F * 2**16).sum() / 2**16 / 256)
    rng = np.random.default_rng(2024)
    g = rng.standard_normal((5, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    X = 0.9 * g
    X[:, 0] = np.abs(X[:, 0])
    print("random 5x3 rows:", X.tolist())
    print("grid maximin:", sphere_grid_maximin(X))
    print("kernel (0.6,0.8).(0.8,0.6) cubed:", (0.6 * 0.8 + 0.8 * 0.6) ** 3)


if __name__ == "__main__":
    main()
