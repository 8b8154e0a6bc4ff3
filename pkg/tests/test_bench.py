import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sublin.bench import ALGORITHMS, charged_queries, loglog_slope, make_instance, run_sweep, to_csv


class TestSlope:
    @given(st.floats(-2, 2), st.floats(0.1, 100))
    def test_power_law(self, a, c):
        sizes = [2**e for e in range(3, 9)]
        assert loglog_slope(sizes, [c * s**a for s in sizes]) == pytest.approx(a, abs=1e-9)

    def test_single_size_is_nan_with_warning(self):
        with pytest.warns(RuntimeWarning, match="fewer than two"):
            assert math.isnan(loglog_slope([8, 8], [1.0, 2.0]))


class TestChargedQueries:
    @pytest.mark.parametrize("alg", ALGORITHMS)
    def test_every_algorithm_charges(self, alg):
        assert charged_queries(alg, "case2" if alg != "game" else "antisym", 16, 8, 0.5, seed=1, rounds=50) > 0

    def test_reproducible(self):
        assert charged_queries("sqrt-n", "random", 32, 4, 0.5, 3) == charged_queries("sqrt-n", "random", 32, 4, 0.5, 3)

    def test_unknown_names(self):
        with pytest.raises(ValueError):
            charged_queries("quantum", "case2", 8, 4, 0.5, 1)
        with pytest.raises(ValueError):
            make_instance("spiral", 8, 4, 1)

    def test_zerosum_family(self):
        g = make_instance("zerosum", 5, 0, 1)
        np.testing.assert_array_equal(g.X[0, 1:], 1.0)


class TestSweep:
    def test_table(self):
        points, slope = run_sweep("baseline", "n", [16, 32, 64], 4, 0.5, seeds=2, base_seed=0, rounds=100)
        assert [p.size for p in points] == [16, 32, 64]
        assert all(p.trials == 2 for p in points)
        # with the round count held fixed the classical cost is exactly linear in n + d
        assert [p.mean for p in points] == [100 * (n + 4) for n in (16, 32, 64)]
        assert 0.8 < slope < 1.0

    def test_fixed_rounds_separate_the_exponents(self):
        sizes = [2**e for e in range(8, 12)]
        _, quantum = run_sweep("sqrt-n", "n", sizes, 8, 0.1, seeds=2, base_seed=0, rounds=5000)
        _, classical = run_sweep("baseline", "n", sizes, 8, 0.1, seeds=2, base_seed=0, rounds=5000)
        assert abs(quantum - 0.5) <= 0.1
        assert abs(classical - 1.0) <= 0.1

    def test_d_sweep(self):
        points, _ = run_sweep("sqrt-d", "d", [16, 64], 4, 0.5, seeds=1, base_seed=0, rounds=200)
        assert points[0].mean < points[1].mean

    def test_single_point(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            points, slope = run_sweep("sqrt-n", "n", [64], 4, 0.5, seeds=1, base_seed=0, rounds=20)
        assert len(points) == 1 and math.isnan(slope)
        assert any(issubclass(w.category, RuntimeWarning) for w in caught)

    def test_validation(self):
        with pytest.raises(ValueError):
            run_sweep("sqrt-n", "m", [8], 4, 0.5, 1, 0)
        with pytest.raises(ValueError):
            run_sweep("sqrt-n", "n", [8], 4, 0.5, 0, 0)

    def test_csv(self):
        points, _ = run_sweep("baseline", "n", [8, 16], 4, 0.5, seeds=1, base_seed=0, rounds=10)
        assert to_csv(points) == "size,mean_charged_queries,std,trials\n8,120.0,0.0,1\n16,200.0,0.0,1\n"
