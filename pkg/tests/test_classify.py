import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sublin.classify import (
    KernelSpec,
    feature_map,
    identify_case,
    kernel_estimate,
    kernel_features,
    kernel_gram,
    train_classical_baseline,
    train_kernel,
    train_linear_sqrt_d,
    train_linear_sqrt_n,
)
from sublin.instance import (
    SIGMA_CASE1,
    SIGMA_CASE2,
    DataMatrix,
    InstanceSpec,
    QueryLedger,
    exact_margin,
    generate,
    reference_maximin,
)
from sublin.mwdual import TrainConfig

unit_vectors = arrays(np.float64, 3, elements=st.floats(-1, 1)).filter(lambda v: np.linalg.norm(v) > 0.05).map(
    lambda v: v / max(1.0, np.linalg.norm(v))
)


def xor_instance() -> DataMatrix:
    pts = np.array([[1, 1, 0], [-1, -1, 0], [1, -1, 0], [-1, 1, 0]]) / math.sqrt(2.0)
    labels = np.array([1.0, 1.0, -1.0, -1.0])
    return DataMatrix(pts * labels[:, None], labels_folded=True, signs=labels)


class TestKernelSpec:
    @pytest.mark.parametrize(
        "text, spec",
        [("linear", KernelSpec()), ("poly:3", KernelSpec("polynomial", q=3)), ("gauss:0.5", KernelSpec("gaussian", s=0.5))],
    )
    def test_parse(self, text, spec):
        assert KernelSpec.parse(text) == spec

    def test_variance_bounds(self):
        assert KernelSpec("polynomial", q=4).variance_bound == 4.0
        assert KernelSpec("gaussian", s=0.5).variance_bound == 16.0

    @pytest.mark.parametrize("kwargs", [dict(kind="rbf"), dict(kind="polynomial", q=0),
                                        dict(kind="polynomial", q=1.5), dict(kind="gaussian", s=0.0)])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            KernelSpec(**kwargs)

    def test_unknown_text(self):
        with pytest.raises(ValueError):
            KernelSpec.parse("sigmoid:1")


class TestFeatureMap:
    def test_degree_one_is_identity(self):
        X = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(feature_map(X, 1), X)

    def test_lexicographic_index(self):
        x = np.array([[2.0, 3.0, 5.0]])
        psi = feature_map(x, 2)[0]
        assert psi.shape == (9,)
        assert psi[1 * 3 + 2] == 15.0 and psi[2 * 3 + 2] == 25.0

    @given(unit_vectors, unit_vectors, st.integers(1, 4))
    def test_inner_product_is_kernel(self, x, y, q):
        assert feature_map(x, q)[0] @ feature_map(y, q)[0] == pytest.approx((x @ y) ** q, abs=1e-12)

    def test_labels_survive_even_degrees(self):
        # one point carrying both labels cannot be separated in any feature space
        x = np.array([0.6, 0.8, 0.0])
        X = DataMatrix(np.vstack([x, -x]), labels_folded=True, signs=np.array([1.0, -1.0]))
        F = kernel_features(X, 2)
        np.testing.assert_allclose(F.entries[1], -F.entries[0])
        assert reference_maximin(F, 1e-3) <= 1e-3
        np.testing.assert_allclose(kernel_gram(KernelSpec("polynomial", q=2), X), [[1.0, -1.0], [-1.0, 1.0]])

    def test_signs_validated(self):
        with pytest.raises(ValueError):
            DataMatrix(np.eye(2), signs=np.array([1.0, 0.5]))


class TestKernelEstimate:
    def test_point_mass_is_exact(self, rng):
        e1 = np.array([1.0, 0.0])
        draws = kernel_estimate(KernelSpec("polynomial", q=1), e1, e1, rng=rng, size=1000)
        assert np.all(draws == 1.0)

    def test_cubic_mean(self, rng):
        draws = kernel_estimate(KernelSpec("polynomial", q=3), np.array([0.6, 0.8]), np.array([0.8, 0.6]),
                                rng=rng, size=10**6)
        assert abs(draws.mean() - 0.884736) <= 5 * draws.std() / 1000.0

    @pytest.mark.parametrize("x, y", [([1.0, 0.0], [1.0, 0.0]), ([0.6, 0.8], [0.8, 0.6]), ([0.3, 0.1], [-0.5, 0.2])])
    def test_gaussian_unbiased_within_budget(self, rng, x, y):
        k = KernelSpec("gaussian", s=1.0)
        x, y = np.array(x), np.array(y)
        draws = kernel_estimate(k, x, y, rng=rng, size=10**6)
        exact = k.exact(x[None], y[None])[0, 0]
        assert abs(draws.mean() - exact) <= 5 * draws.std() / 1000.0
        assert draws.var() <= k.variance_bound

    @given(unit_vectors, unit_vectors, st.integers(1, 3), st.integers(0, 2**16))
    def test_polynomial_unbiased(self, x, y, q, seed):
        draws = kernel_estimate(KernelSpec("polynomial", q=q), x, y, rng=np.random.default_rng(seed), size=20000)
        exact = (x @ y) ** q
        # q independent factors, each with second moment ||x||^2 ||y||^2
        sd = math.sqrt(max((x @ x) ** q * (y @ y) ** q - exact**2, 0.0))
        assert abs(draws.mean() - exact) <= 5 * sd / math.sqrt(draws.size) + 1e-12

    def test_zero_y_falls_back_to_exact(self, rng):
        ledger = QueryLedger()
        value = kernel_estimate(KernelSpec("gaussian", s=1.0), np.array([0.6, 0.0]), np.zeros(2), ledger, rng)
        assert value == pytest.approx(math.exp(-0.18))
        assert ledger.charged_queries == KernelSpec("gaussian", s=1.0).estimate_queries + 2

    def test_charges(self, rng):
        ledger = QueryLedger()
        kernel_estimate(KernelSpec("polynomial", q=3), np.ones(2) / 2, np.ones(2) / 2, ledger, rng, size=10)
        assert ledger.charged_queries == 30


class TestLinearTrainers:
    def test_single_row(self, rng):
        X = DataMatrix(np.array([[1.0, 0.0, 0.0]]))
        res = train_linear_sqrt_n(X, TrainConfig(eps=0.1), rng=rng)
        assert res.achieved_margin >= 0.9

    @pytest.mark.parametrize("trainer", [train_linear_sqrt_n, train_classical_baseline])
    def test_case2_contract(self, trainer):
        X = generate(InstanceSpec("lower-linear-case2", n=64, d=8, l=3))
        wins = sum(
            trainer(X, TrainConfig(eps=0.1), rng=np.random.default_rng(s)).achieved_margin >= SIGMA_CASE2 - 0.1
            for s in range(6)
        )
        assert wins >= 4

    def test_random_instance_against_reference(self):
        X = generate(InstanceSpec("random-ball", n=32, d=8, seed=4, shift=1.0))
        sigma = reference_maximin(X, 1e-3)
        assert sigma > 0.1
        wins = sum(
            train_linear_sqrt_n(X, TrainConfig(eps=0.1), rng=np.random.default_rng(s)).achieved_margin >= sigma - 0.1
            for s in range(3)
        )
        assert wins >= 2

    def test_one_column(self):
        X = DataMatrix(np.array([[0.5], [0.9], [0.3]]))
        a = train_linear_sqrt_n(X, TrainConfig(eps=0.1), rng=np.random.default_rng(0))
        b = train_linear_sqrt_d(X, TrainConfig(eps=0.1), rng=np.random.default_rng(0))
        assert a.achieved_margin >= 0.2 and b.achieved_margin >= 0.2
        assert abs(a.achieved_margin - b.achieved_margin) <= 0.1

    def test_estimated_norms_track_truncated_norms(self):
        X = generate(InstanceSpec("lower-linear-case2", n=16, d=64, l=5))
        res = train_linear_sqrt_d(X, TrainConfig(eps=0.2, monitor=True), rng=np.random.default_rng(0))
        log = res.diagnostics["norm_log"]
        target, est = log[:, 1], log[:, 2]
        live = target > 0
        assert np.mean(np.abs(est[live] / target[live] - 1.0) <= res.eta**2) >= 0.9
        assert res.ledger["norm_estimation"] > 0

    def test_baseline_charges_n_plus_d_per_round(self, case2_small):
        res = train_classical_baseline(case2_small, TrainConfig(eps=0.5, rounds=100), rng=np.random.default_rng(0))
        assert res.ledger == {"charged_queries": 1200, "state_prep": 0, "max_finding": 0,
                              "norm_estimation": 0, "direct": 1200}

    @pytest.mark.parametrize("trainer", [train_linear_sqrt_n, train_linear_sqrt_d, train_classical_baseline])
    def test_determinism_and_output_norm(self, trainer, case1_small):
        cfg = TrainConfig(eps=0.3, rounds=2000)
        a = trainer(case1_small, cfg, rng=np.random.default_rng(11))
        b = trainer(case1_small, cfg, rng=np.random.default_rng(11))
        assert a.ledger == b.ledger
        np.testing.assert_array_equal(a.classifier.picks, b.classifier.picks)
        assert np.linalg.norm(a.w_bar) <= 1.0 + 1e-9
        assert a.achieved_margin == exact_margin(case1_small, a.w_bar)

    def test_monitor_reports(self, case2_small):
        res = train_linear_sqrt_n(case2_small, TrainConfig(eps=0.3, monitor=True), rng=np.random.default_rng(1))
        diag = res.diagnostics
        assert diag["mw_holds"] and diag["regret_holds"]
        np.testing.assert_allclose(diag["dense_w_bar"], res.w_bar, atol=1e-9)

    def test_record_shape(self, case2_small):
        rec = train_linear_sqrt_n(case2_small, TrainConfig(eps=0.5), rng=np.random.default_rng(1)).to_record()
        assert set(rec) == {"T", "eta", "achieved_margin", "ledger", "wall_time", "classifier"}


class TestKernelTrainer:
    def test_degree_one_matches_linear(self):
        X = generate(InstanceSpec("lower-linear-case2", n=8, d=4, l=2))
        cfg = TrainConfig(eps=0.2)
        k = KernelSpec("polynomial", q=1)
        for s in range(2):
            lin = train_linear_sqrt_n(X, cfg, rng=np.random.default_rng(s)).achieved_margin
            for mode in ("explicit-feature", "estimator"):
                assert abs(train_kernel(X, k, cfg, mode, rng=np.random.default_rng(s)).achieved_margin - lin) <= 0.4

    def test_xor_separable_only_with_features(self):
        X = xor_instance()
        assert reference_maximin(X, 1e-3) <= 1e-3
        k = KernelSpec("polynomial", q=2)
        cfg = TrainConfig(eps=0.2)
        for mode in ("explicit-feature", "estimator"):
            assert train_kernel(X, k, cfg, mode, rng=np.random.default_rng(3)).achieved_margin > 0.0

    def test_gaussian_estimator_runs(self):
        X = xor_instance()
        res = train_kernel(X, KernelSpec("gaussian", s=0.5), TrainConfig(eps=0.3), rng=np.random.default_rng(0))
        assert res.achieved_margin > 0.0
        assert res.charged_queries > 0

    def test_guards(self, case2_small):
        cfg = TrainConfig(eps=0.3)
        with pytest.raises(ValueError, match="exceeds"):
            train_kernel(DataMatrix(np.zeros((1, 1001))), KernelSpec("polynomial", q=2), cfg, "explicit-feature")
        with pytest.raises(ValueError, match="polynomial"):
            train_kernel(case2_small, KernelSpec("gaussian", s=1.0), cfg, "explicit-feature")
        with pytest.raises(ValueError, match="mode"):
            train_kernel(case2_small, KernelSpec(), cfg, "implicit")


class TestIdentifyCase:
    def test_case2_direction(self):
        assert identify_case(np.array([0.0, 0.0, 0.99, 0.0])) == (2, 3)

    def test_case1_optimum_stays_below_threshold(self):
        z = math.sqrt(4.0 + 2.0 * math.sqrt(2.0))
        w = np.array([1.0 / z, 0.0, (math.sqrt(2.0) + 1.0) / z])
        assert identify_case(w) == (1, 3)
        assert SIGMA_CASE1 * (math.sqrt(2.0) + 1.0) == pytest.approx(w[2])
