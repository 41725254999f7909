from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rmismc.models import BoxUniformMixin, ForwardModel
from rmismc.smc import (
    CoupledEvaluator,
    DegeneratePopulationError,
    MemoryLimitError,
    MutationConfig,
    Population,
    SMCConfig,
    TemperingSchedule,
    coupled_log_likelihood,
    expected_smc_cost,
    mutate,
    psi_evaluate,
    resample,
    run_smc,
)


class ConstantModel(BoxUniformMixin, ForwardModel):
    """Likelihood ``c`` at every index; QoI ``x``."""

    name = "constant"

    def __init__(self, c):
        self.log_c = math.log(c)

    def log_likelihood(self, alpha, states):
        return np.full(len(states), self.log_c)

    def qoi(self, alpha, states):
        return states[:, 0]


class ThreePointModel(ForwardModel):
    """Uniform prior on {0, 1, 2}; the proposal redraws from the prior."""

    name = "three_point"
    likelihood = np.array([0.2, 0.5, 0.3])

    def sample_prior(self, alpha, n, rng):
        return rng.integers(0, 3, size=(n, 1))

    def propose(self, states, step, rng):
        return rng.integers(0, 3, size=states.shape)

    def log_likelihood(self, alpha, states):
        return np.log(self.likelihood[states[:, 0]])

    def qoi(self, alpha, states):
        return states[:, 0].astype(float)


class TestCoupledLikelihood:
    def test_max_of_four(self):
        per = np.log([0.2, 0.5, 0.1, 0.3])
        lmax, out = coupled_log_likelihood(per)
        assert lmax == pytest.approx(math.log(0.5))
        np.testing.assert_array_equal(out, per)

    def test_single_subindex(self):
        lmax, _ = coupled_log_likelihood(np.array([[-3.25]]))
        assert lmax[0] == -3.25

    def test_constant(self):
        lmax, _ = coupled_log_likelihood(np.full((5, 4), math.log(0.7)))
        np.testing.assert_allclose(lmax, math.log(0.7))

    def test_nan_rejected(self):
        with pytest.raises(FloatingPointError):
            coupled_log_likelihood([0.0, float("nan")])

    def test_evaluator_shapes_and_cost(self, toy_model):
        ev = CoupledEvaluator(toy_model, (3,))
        ll, zeta = ev(np.array([[0.1], [0.4], [-0.2]]))
        assert ll.shape == zeta.shape == (3, 2)
        assert ev.unit_cost == 2.0**3 + 2.0**2
        assert ev.n_evaluations == 3


class TestPsi:
    def test_first_difference(self):
        assert psi_evaluate([1, -1], np.log([0.5, 0.25]), 1.0)[()] == pytest.approx(0.5)

    def test_single_subindex_returns_qoi(self):
        assert psi_evaluate([1], [-7.0], [2.5])[()] == pytest.approx(2.5)

    def test_interior_cancellation(self):
        assert psi_evaluate([1, -1, -1, 1], np.full(4, -1.3), np.full(4, 0.8))[()] == pytest.approx(0.0, abs=1e-15)

    @given(st.lists(st.floats(-50, 0), min_size=2, max_size=8), st.floats(-3, 3))
    def test_weights_bounded_by_one(self, logl, q):
        # |psi| <= sum of |zeta| because every omega lies in (0, 1]
        logl = np.array(logl)
        signs = np.resize([1.0, -1.0], logl.size)
        assert abs(psi_evaluate(signs, logl, q)[()]) <= logl.size * abs(q) + 1e-12


class TestResample:
    def test_uniform_systematic_selects_each_once(self):
        idx = resample(np.full(17, 1 / 17), np.random.default_rng(0))
        np.testing.assert_array_equal(np.sort(idx), np.arange(17))

    @pytest.mark.parametrize("scheme", ["systematic", "multinomial"])
    def test_point_mass(self, scheme):
        w = np.zeros(9)
        w[0] = 1.0
        assert np.all(resample(w, np.random.default_rng(1), scheme) == 0)

    def test_multinomial_multiplicities(self):
        rng = np.random.default_rng(2)
        w = np.array([0.1, 0.2, 0.3, 0.4])
        n, reps = 20, 10_000
        counts = np.stack([np.bincount(resample(w, rng, "multinomial", n), minlength=4) for _ in range(reps)])
        se = np.sqrt(n * w * (1 - w) / reps)
        assert np.all(np.abs(counts.mean(axis=0) - n * w) < 3 * se)

    def test_zero_weights(self):
        with pytest.raises(DegeneratePopulationError):
            resample(np.zeros(4), np.random.default_rng(0))

    @given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=30).filter(lambda w: sum(w) > 0),
           st.integers(0, 2**32 - 1))
    def test_systematic_multiplicity_within_one(self, w, seed):
        w = np.array(w)
        idx = resample(w, np.random.default_rng(seed))
        counts = np.bincount(idx, minlength=w.size)
        expected = w.size * w / w.sum()
        assert np.all(np.abs(counts - expected) < 1.0 + 1e-9)
        assert np.all(counts[w == 0] == 0)


class TestMutate:
    def _population(self, model, states, alpha=(0,)):
        ev = CoupledEvaluator(model, alpha)
        logl, zeta = ev(states)
        return ev, Population(states, logl, zeta, np.full(len(states), -math.log(len(states))))

    def test_zero_step_is_identity(self, toy_model):
        rng = np.random.default_rng(3)
        ev, pop = self._population(toy_model, toy_model.sample_prior((2,), 50, rng), (2,))
        out, acc = mutate(pop, ev, toy_model, 0.7, MutationConfig(n_mcmc=3, step=0.0), rng)
        assert acc == 1.0
        np.testing.assert_array_equal(out.states, pop.states)

    def test_prior_invariance_at_zero_temperature(self, toy_model):
        rng = np.random.default_rng(4)
        n = 20_000
        ev, pop = self._population(toy_model, toy_model.sample_prior((2,), n, rng), (2,))
        out, acc = mutate(pop, ev, toy_model, 0.0, MutationConfig(n_mcmc=3, step=0.8), rng)
        x = out.states[:, 0]
        assert acc == 1.0
        # uniform on [-1, 1]: mean 0 (sd 1/sqrt(3)), variance 1/3 (sd of x^2 is 2/sqrt(45))
        assert abs(x.mean()) < 3 / math.sqrt(3 * n)
        assert abs(np.mean(x**2) - 1 / 3) < 3 * 2 / math.sqrt(45 * n)

    def test_three_point_stationarity(self):
        model = ThreePointModel()
        rng = np.random.default_rng(5)
        n_each = 40_000
        start = np.repeat(np.arange(3), n_each)[:, None]
        ev, pop = self._population(model, start)
        out, _ = mutate(pop, ev, model, 1.0, MutationConfig(n_mcmc=1, step=1.0), rng)
        T = np.zeros((3, 3))
        for i in range(3):
            T[i] = np.bincount(out.states[start[:, 0] == i, 0], minlength=3) / n_each
        pi = model.likelihood / model.likelihood.sum()
        se = np.sqrt(np.sum((pi[:, None] ** 2) * T * (1 - T) / n_each, axis=0))
        assert np.all(np.abs(pi @ T - pi) < 3 * se)
        # the empirical kernel is close to the exact MH kernel
        exact = np.minimum(1.0, model.likelihood[None, :] / model.likelihood[:, None]) / 3
        np.fill_diagonal(exact, 0.0)
        np.fill_diagonal(exact, 1.0 - exact.sum(axis=1))
        np.testing.assert_allclose(T, exact, atol=0.01)


class TestRunSMC:
    @pytest.mark.parametrize("schedule", [TemperingSchedule.linear(2), TemperingSchedule.geometric(6)])
    @pytest.mark.parametrize("n", [2, 37])
    def test_constant_likelihood_gives_exact_normalizer(self, schedule, n):
        res = run_smc(ConstantModel(0.37), (0,), n, SMCConfig(schedule=schedule), np.random.default_rng(n))
        assert res.Z_hat == pytest.approx(0.37, rel=1e-12)

    def test_cost_matches_expected_cost(self, toy_model, fast_smc):
        res = run_smc(toy_model, (4,), 64, fast_smc, np.random.default_rng(0))
        assert res.cost == expected_smc_cost(toy_model, (4,), 64, fast_smc)
        assert res.n_evaluations == 64 * (1 + 2 * 1)

    def test_memory_limit(self, toy_model, fast_smc):
        tight = SMCConfig(fast_smc.schedule, fast_smc.mutation, max_state_bytes=4 * 40 * 8 - 1)
        with pytest.raises(MemoryLimitError):
            run_smc(toy_model, (3,), 40, tight, np.random.default_rng(11))
        loose = SMCConfig(fast_smc.schedule, fast_smc.mutation, max_state_bytes=4 * 40 * 8)
        a = run_smc(toy_model, (3,), 40, loose, np.random.default_rng(11))
        b = run_smc(toy_model, (3,), 40, fast_smc, np.random.default_rng(11))
        assert a.Z_hat == b.Z_hat

    def test_reproducible(self, toy_model, fast_smc):
        a = run_smc(toy_model, (3,), 40, fast_smc, np.random.default_rng(11))
        b = run_smc(toy_model, (3,), 40, fast_smc, np.random.default_rng(11))
        assert (a.F_phi, a.F_one, a.Z_hat) == (b.F_phi, b.F_one, b.Z_hat)

    def test_adaptive_schedule_reaches_one(self, toy_model):
        cfg = SMCConfig(adaptive_ess=0.5)
        res = run_smc(toy_model, (3,), 200, cfg, np.random.default_rng(2))
        assert res.diagnostics["taus"][-1] == 1.0
        assert min(res.diagnostics["ess"]) >= 0.45 * 200

    def test_vanishing_weights_raise(self):
        class Impossible(ConstantModel):
            def log_likelihood(self, alpha, states):
                return np.full(len(states), -np.inf)

        with pytest.raises(DegeneratePopulationError):
            run_smc(Impossible(1.0), (0,), 10, SMCConfig(), np.random.default_rng(0))

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            TemperingSchedule((0.0, 0.5, 0.4, 1.0))
        with pytest.raises(ValueError):
            TemperingSchedule((0.1, 1.0))

    @pytest.mark.slow
    def test_variance_halves_with_particles(self, toy_model, fast_smc):
        ns = [50, 100, 200, 400, 800, 1600]
        reps = 300
        var = []
        for n in ns:
            rng = np.random.default_rng(n)
            var.append(np.var([run_smc(toy_model, (3,), n, fast_smc, rng).F_one for _ in range(reps)], ddof=1))
        slope = np.polyfit(np.log2(ns), np.log2(var), 1)[0]
        assert -1.15 < slope < -0.85
