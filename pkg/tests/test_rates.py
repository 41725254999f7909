from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rmismc.models import Elliptic2DModel
from rmismc.rates import estimate_increment_rates, fit_mse_cost, fit_rate, increment_statistics, sweep


class TestFitRate:
    def test_exact_geometric(self):
        fit = fit_rate([(a, 2.0 ** (-4 * a)) for a in range(1, 7)])
        assert abs(fit.slope + 4.0) < 1e-12
        assert fit.r_squared == 1.0

    def test_constant(self):
        assert fit_rate([(a, 3.7) for a in range(1, 6)]).slope == 0.0

    @given(st.floats(-8.0, 8.0), st.floats(1e-6, 1e6), st.integers(3, 10))
    def test_recovers_any_exponent(self, rate, scale, n):
        fit = fit_rate([(a, scale * 2.0 ** (rate * a)) for a in range(n)])
        assert fit.slope == pytest.approx(rate, abs=1e-12)

    @given(st.lists(st.floats(1e-8, 1e3), min_size=3, max_size=8), st.integers(-40, 40))
    def test_scale_invariance(self, values, k):
        pts = list(enumerate(values))
        a = fit_rate(pts, drop_preasymptotic=False)
        b = fit_rate([(x, v * 2.0**k) for x, v in pts], drop_preasymptotic=False)
        assert b.slope == pytest.approx(a.slope, abs=1e-12)
        assert b.intercept == pytest.approx(a.intercept + k, abs=1e-9)

    def test_drops_preasymptotic_points(self):
        values = [1.0, 1.0, 1.0, 2.0**-4, 2.0**-8, 2.0**-12]
        fit = fit_rate(list(enumerate(values)))
        assert fit.n_dropped > 0 and fit.full is not None
        assert fit.r_squared >= 0.9
        assert fit.full.r_squared < 0.9

    def test_needs_three_positive_points(self):
        with pytest.raises(ValueError):
            fit_rate([(1, 1.0), (2, 0.5)])
        with pytest.raises(ValueError):
            fit_rate([(1, 1.0), (2, 0.0), (3, 0.5)])


class TestMseCost:
    def test_inverse_cost(self):
        fit = fit_mse_cost([(c, 1.0 / c) for c in (10.0, 20.0, 40.0, 80.0)])
        assert fit.slope == pytest.approx(-1.0, abs=1e-12)

    def test_groups_by_level(self):
        rows = [(0, 100.0, 0.5), (0, 100.0, 1.5), (1, 400.0, 0.25), (1, 400.0, 0.25)]
        assert fit_mse_cost(rows).slope == pytest.approx(-1.0)

    def test_rejects_negative_error(self):
        with pytest.raises(ValueError):
            fit_mse_cost([(1.0, -1.0), (2.0, 1.0)])


class TestIncrementRates:
    def test_sweeps(self):
        model = Elliptic2DModel(np.zeros(4))
        assert sweep(model, 0, 3) == [(3, 2), (4, 2), (5, 2)]
        assert sweep(model, "diagonal", 2) == [(3, 3), (4, 4)]

    def test_toy_prior_rates(self, toy_model):
        (rep,) = estimate_increment_rates(toy_model, ["diagonal"], 6, 4, seed=1, n_samples=500)
        assert abs(rep.s - 2.0) < 0.5
        assert abs(rep.beta - 4.0) < 0.5

    def test_reproducible(self, toy_model):
        a = increment_statistics(toy_model, [(1,), (2,), (3,)], 3, seed=5, n_samples=50)
        b = increment_statistics(toy_model, [(1,), (2,), (3,)], 3, seed=5, n_samples=50)
        np.testing.assert_array_equal(a.second_phi, b.second_phi)
        np.testing.assert_array_equal(a.mean_one, b.mean_one)

    def test_smc_method(self, toy_model, fast_smc):
        stats = increment_statistics(toy_model, [(2,), (3,), (4,)], 5, seed=2, method="smc", n_samples=50,
                                     smc_config=fast_smc)
        assert np.all(stats.second_phi > 0) and stats.method == "smc"

    def test_unknown_method(self, toy_model):
        with pytest.raises(ValueError):
            increment_statistics(toy_model, [(1,), (2,), (3,)], 2, seed=0, method="mcmc")
