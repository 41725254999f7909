from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import gauss_legendre_integral
from hypothesis import given
from hypothesis import strategies as st

from rmismc.estimators import (
    EstimatorConfig,
    InfeasibleBudgetError,
    allocate_samples_deterministic,
    estimate,
    mismc_estimate,
    mlsmc_estimate,
    per_particle_cost,
    rmismc_estimate,
    rmismc_expected_cost,
    single_level_estimate,
)
from rmismc.models import Toy1DModel
from rmismc.multiindex import AllocationDistribution, IndexSet
from rmismc.smc import expected_smc_cost


class ScaledToy(Toy1DModel):
    """Toy model whose likelihood is multiplied by ``exp(shift)``."""

    def __init__(self, base: Toy1DModel, shift: float):
        super().__init__(base.data, base.noise_sd)
        self.shift = shift

    def log_likelihood(self, alpha, states):
        return super().log_likelihood(alpha, states) + self.shift


class TestRatio:
    def test_single_index_set_equals_single_level(self, toy_model, fast_smc):
        iset = IndexSet.explicit([(0,)], offset=(0,))
        a = mismc_estimate(toy_model, iset, {(0,): 64}, fast_smc, 5, 1e-300)
        b = single_level_estimate(toy_model, (0,), 64, fast_smc, 5, 1e-300)
        assert a.value == b.value and a.total_cost == b.total_cost

    def test_point_mass_rmismc_equals_single_level(self, toy_model, fast_smc):
        dist = AllocationDistribution.point_mass((0,))
        a = rmismc_estimate(toy_model, dist, 40, 4, fast_smc, 9, 1e-300)
        b = single_level_estimate(toy_model, (0,), 40, fast_smc, 9, 1e-300)
        assert a.numerator == pytest.approx(b.numerator, rel=1e-14)
        assert a.value == pytest.approx(b.value, rel=1e-14)

    @given(st.floats(-300.0, 300.0))
    def test_invariant_to_likelihood_scale(self, shift):
        base = Toy1DModel.synthetic(0.6, np.random.default_rng(7))
        from rmismc.smc import MutationConfig, SMCConfig, TemperingSchedule

        cfg = SMCConfig(schedule=TemperingSchedule.linear(3), mutation=MutationConfig(n_mcmc=1, step=0.5))
        iset = IndexSet.tensor_product((3,))
        sizes = {(a,): 30 for a in range(4)}
        ref = mismc_estimate(base, iset, sizes, cfg, 3, 1e-300)
        out = mismc_estimate(ScaledToy(base, shift), iset, sizes, cfg, 3, 1e-300)
        assert out.value == pytest.approx(ref.value, rel=1e-9)

    def test_clamp_with_tiny_likelihood(self, toy_model, fast_smc):
        res = single_level_estimate(ScaledToy(toy_model, -700.0), (3,), 32, fast_smc, 1, z_min=1e-200)
        assert res.clamped and math.isfinite(res.value)
        assert res.denominator_raw < 1e-200

    def test_no_clamp_in_normal_use(self, toy_model, fast_smc):
        res = single_level_estimate(toy_model, (3,), 32, fast_smc, 1, z_min=1e-300)
        assert not res.clamped

    def test_deterministic_given_seed(self, toy_model, fast_smc):
        dist = AllocationDistribution.from_rates((4.0,), (1.0,), (0,))
        a = rmismc_estimate(toy_model, dist, 60, 6, fast_smc, 21, 1e-300)
        b = rmismc_estimate(toy_model, dist, 60, 6, fast_smc, 21, 1e-300)
        assert (a.value, a.total_cost, a.populated_indices) == (b.value, b.total_cost, b.populated_indices)

    def test_cost_is_sum_of_increment_costs(self, toy_model, fast_smc):
        dist = AllocationDistribution.from_rates((4.0,), (1.0,), (0,))
        res = rmismc_estimate(toy_model, dist, 100, 5, fast_smc, 2, 1e-300)
        unit = per_particle_cost(toy_model, fast_smc)
        assert res.total_cost == sum(n * unit(a) for a, n in res.populated_indices.items())

    def test_n_min_below_two_rejected(self, toy_model, fast_smc):
        with pytest.raises(ValueError, match="n_min"):
            rmismc_estimate(toy_model, AllocationDistribution.from_rates((4.0,), (1.0,)), 10, 1, fast_smc, 0, 1.0)

    def test_config_requires_positive_z_min(self):
        with pytest.raises(ValueError):
            EstimatorConfig("single_level", 0.0, alpha=(1,), n=10)

    def test_dispatch(self, toy_model, fast_smc):
        cfg = EstimatorConfig("mismc", 1e-300, index_set=IndexSet.tensor_product((2,)),
                              sample_sizes={(0,): 20, (1,): 10, (2,): 5})
        assert estimate(cfg, toy_model, fast_smc, 4).value == mlsmc_estimate(
            toy_model, 2, {(0,): 20, (1,): 10, (2,): 5}, fast_smc, 4, 1e-300).value

    @pytest.mark.slow
    def test_single_level_consistency(self, toy_model, fast_smc):
        alpha = (4,)
        target = gauss_legendre_integral(toy_model, alpha, lambda x: x**2) / gauss_legendre_integral(
            toy_model, alpha, lambda x: np.ones_like(x))
        errs = {}
        for n in (250, 4000):
            vals = np.array([single_level_estimate(toy_model, alpha, n, fast_smc, (n, r), 1e-300).value
                             for r in range(40)])
            errs[n] = math.sqrt(np.mean((vals - target) ** 2))
        # RMSE shrinks like N^(-1/2): a factor 4 for 16x the particles
        assert 2.5 < errs[250] / errs[4000] < 6.5


class TestDeterministicAllocation:
    def unit(self, a):
        return 2.0 ** a[0]

    def test_single_index(self):
        sizes = allocate_samples_deterministic(IndexSet.explicit([(3,)], offset=(3,)), 4.0, 1.0, 800.0, self.unit, 1)
        assert sizes == {(3,): 100}

    def test_ratio_tends_to_rate(self):
        sizes = allocate_samples_deterministic(IndexSet.tensor_product((4,)), 4.0, 1.0, 1e12, self.unit, 1)
        ratios = [sizes[(a + 1,)] / sizes[(a,)] for a in range(4)]
        np.testing.assert_allclose(ratios, 2.0**-2.5, rtol=1e-6)

    @given(st.floats(1e3, 1e8), st.integers(1, 60), st.integers(1, 5))
    def test_floor_and_budget(self, budget, n_floor, top):
        iset = IndexSet.tensor_product((top,))
        try:
            sizes = allocate_samples_deterministic(iset, 4.0, 1.0, budget, self.unit, n_floor)
        except InfeasibleBudgetError as exc:
            assert exc.minimum_budget > budget
            return
        assert all(n >= n_floor for n in sizes.values())
        spent = sum(n * self.unit(a) for a, n in sizes.items())
        assert spent >= budget * (1 - 1e-9)

    def test_infeasible_reports_minimum(self):
        with pytest.raises(InfeasibleBudgetError) as info:
            allocate_samples_deterministic(IndexSet.tensor_product((2,)), 4.0, 1.0, 10.0, self.unit, 50)
        assert info.value.minimum_budget == 50 * (1 + 2 + 4)


def test_expected_rmismc_cost_is_linear(toy_model, fast_smc):
    dist = AllocationDistribution.from_rates((4.0,), (1.0,), (0,))
    c1 = rmismc_expected_cost(toy_model, dist, 1, fast_smc)
    assert rmismc_expected_cost(toy_model, dist, 64, fast_smc) == pytest.approx(64 * c1, rel=1e-14)
    # closed form: sum_a p_a * 3 * (2^a + 2^(a-1)) for a >= 1, plus 3 p_0
    r = 2.0**-2.5
    direct = 3 * (1 - r) + sum((1 - r) * r**a * 3 * 1.5 * 2.0**a for a in range(1, 200))
    assert c1 == pytest.approx(direct, rel=1e-12)
    assert expected_smc_cost(toy_model, (2,), 1, fast_smc) == 3 * (4 + 2)
