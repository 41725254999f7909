from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from rmismc.models import (
    Elliptic2DModel,
    FEMError,
    PointPatternError,
    PointProcessModel,
    SpectralGaussianPrior,
    Toy1DModel,
    fem_solve_1d,
    fem_solve_2d,
    load_point_pattern,
    spectral_variance,
    synthesize_toy_data,
)
from rmismc.models.fem import Grid2D, assemble_stiffness_2d, stiffness_1d
from rmismc.models.point_process import (
    bilinear_weights,
    poisson_thinning,
    sample_from_log_density,
    save_point_pattern,
    trapezoid_weights,
)
from rmismc.models.toy import exact_unit_response


def manufactured_l2_error(level):
    u_star = lambda z1, z2: np.sin(np.pi * z1) * np.sin(np.pi * z2)  # noqa: E731
    u = fem_solve_2d((level, level), lambda z1, z2: np.ones_like(z1),
                     lambda z1, z2: 2 * np.pi**2 * u_star(z1, z2))
    z = np.linspace(0.0, 1.0, 2**level + 1)
    z1, z2 = np.meshgrid(z, z, indexing="ij")
    return math.sqrt(np.mean((u - u_star(z1, z2)) ** 2))


class TestFEM1D:
    def test_stiffness_entries(self):
        k = 8
        ab = stiffness_1d(k)
        h = 1.0 / k
        np.testing.assert_allclose(ab[1], 2.0 / h)
        np.testing.assert_allclose(ab[0, 1:], -1.0 / h)
        np.testing.assert_allclose(ab[2, :-1], -1.0 / h)

    @pytest.mark.parametrize("level", [2, 4, 6])
    def test_unit_forcing_matches_analytic(self, level):
        nodes, u = fem_solve_1d(level)
        h = 2.0**-level
        assert np.max(np.abs(u - 0.5 * (nodes - nodes**2))) <= h**2

    def test_zero_forcing(self):
        _, u = fem_solve_1d(5, None, lambda z: np.zeros_like(z))
        assert np.all(u == 0.0)

    def test_non_elliptic_coefficient(self):
        with pytest.raises(FEMError):
            fem_solve_1d(3, lambda z: np.zeros_like(z))


class TestFEM2D:
    def test_stiffness_spd(self):
        grid = Grid2D((2, 2))
        a = assemble_stiffness_2d(grid, np.ones((16, 4))).toarray()
        assert a.shape == (9, 9)
        np.testing.assert_allclose(a, a.T, atol=1e-14)
        assert np.linalg.eigvalsh(a).min() > 0

    def test_manufactured_solution_order(self):
        errs = [manufactured_l2_error(l) for l in range(2, 6)]
        slope = np.polyfit(np.arange(2, 6), np.log2(errs), 1)[0]
        assert -2.2 < slope < -1.8

    def test_non_elliptic_coefficient(self):
        with pytest.raises(FEMError):
            fem_solve_2d((2, 2), lambda z1, z2: -np.ones_like(z1), lambda z1, z2: np.ones_like(z1))


class TestToy:
    def test_noise_free_observation(self):
        y = synthesize_toy_data(1.0, None)
        assert y[4] == pytest.approx(0.125)

    def test_exact_data_has_zero_log_likelihood(self):
        model = Toy1DModel(synthesize_toy_data(0.3, None))
        assert model.log_likelihood(None, np.array([[0.3]]))[0] == pytest.approx(0.0, abs=1e-15)

    def test_fem_likelihood_close_to_analytic(self, toy_model):
        x = np.linspace(-1, 1, 11)[:, None]
        exact = toy_model.log_likelihood(None, x)
        levels = np.arange(2, 10)
        gaps = np.array([np.max(np.abs(toy_model.log_likelihood((l,), x) - exact)) for l in levels])
        # nodal values are exact for this forcing; interpolation to the observation points is O(h^2)
        assert np.all(gaps <= 3.0 * 4.0**-levels)
        assert -2.3 < np.polyfit(levels, np.log2(gaps), 1)[0] < -1.7

    @given(st.floats(-1.0, 1.0), st.integers(0, 8))
    def test_log_likelihood_bounded(self, x, level):
        model = Toy1DModel(synthesize_toy_data(0.6, np.random.default_rng(7)))
        ll = model.log_likelihood((level,), np.array([[x]]))[0]
        resid_max = np.abs(model.data).sum() + 10 * 0.125
        assert -0.5 * resid_max**2 / model.noise_sd**2 - 1e-9 <= ll <= 0.0

    def test_qoi(self, toy_model):
        assert toy_model.qoi((0,), np.array([[0.5]]))[0] == 0.25

    def test_unit_response_matches_exact_at_fine_level(self, toy_model):
        np.testing.assert_allclose(toy_model.unit_response(10), exact_unit_response(toy_model.points), atol=1e-6)


class TestElliptic:
    def test_qoi(self):
        model = Elliptic2DModel(np.zeros(4))
        assert model.qoi((2, 2), np.array([[1.0, -1.0]]))[0] == 2.0

    def test_exact_data_maximal(self):
        x = np.array([[0.3, -0.4]])
        model = Elliptic2DModel(Elliptic2DModel(np.zeros(4)).observe((4, 4), x)[0])
        assert model.log_likelihood((4, 4), x)[0] == pytest.approx(0.0, abs=1e-12)
        assert model.log_likelihood((4, 4), np.array([[-0.3, 0.4]]))[0] < 0

    def test_batched_solver_matches_sparse_direct(self):
        model = Elliptic2DModel(np.zeros(4))
        x = np.array([[0.5, -0.9], [-1.0, 1.0]])
        u = model.solve((3, 4), x)
        from rmismc.models.elliptic import coefficient

        for i in range(2):
            nodal = fem_solve_2d((3, 4), lambda z1, z2: coefficient(x[i], z1, z2), lambda z1, z2: 100.0 + 0 * z1)
            np.testing.assert_allclose(u[i], nodal[1:-1, 1:-1].ravel(), rtol=1e-7, atol=1e-10)


class TestSpectral:
    def test_variance_example(self):
        assert spectral_variance(1, 1, (0, 1, 1), 3.0) == pytest.approx(0.0625)

    def test_zero_amplitude_gives_constant_field(self):
        prior = SpectralGaussianPrior(theta=(0.7, 0.0, 1.0))
        xi = prior.sample_coefficients((3, 3), 2, np.random.default_rng(0))
        np.testing.assert_allclose(prior.grid_values(xi, (3, 3)), 0.7, atol=1e-14)

    def test_pointwise_variance(self):
        prior = SpectralGaussianPrior(theta=(0.0, 1.0, 4.0), smoothness=1.6)
        n = 10_000
        xi = prior.sample_coefficients((3, 3), n, np.random.default_rng(1))
        v = prior.grid_values(xi, (3, 3))[:, 5, 3]
        target = prior.pointwise_variance((3, 3))
        se = target * math.sqrt(2.0 / (n - 1))
        assert abs(v.var(ddof=1) - target) < 3 * se

    def test_synthesis_matches_direct_sum(self):
        prior = SpectralGaussianPrior(theta=(0.2, 1.0, 2.0))
        lv = (2, 3)
        xi = prior.sample_coefficients(lv, 1, np.random.default_rng(2))[0]
        grid = prior.grid_values(xi, lv)[0]
        k1, k2 = prior.max_mode(2), prior.max_mode(3)
        m1, m2 = grid.shape
        z1 = 2.0 * np.arange(m1) / m1
        z2 = 2.0 * np.arange(m2) / m2
        zeta = prior.scales(lv)
        direct = np.full((m1, m2), 0.2)
        for i, a in enumerate(range(-k1, k1 + 1)):
            for b in range(k2 + 1):
                c = zeta[i, b] * xi[i, b]
                if c == 0:
                    continue
                phase = np.exp(1j * np.pi * (a * z1[:, None] + b * z2[None, :]))
                direct += 2.0 * np.real(c * phase)
        np.testing.assert_allclose(grid, direct, atol=1e-12)

    def test_restriction_is_coarse_field(self):
        prior = SpectralGaussianPrior()
        xi = prior.sample_coefficients((4, 5), 3, np.random.default_rng(3))
        a = prior.grid_values(xi, (3, 4))
        b = prior.grid_values(prior.restrict(xi, (3, 4)), (3, 4))
        np.testing.assert_array_equal(a, b)

    def test_truncation_conventions(self):
        assert SpectralGaussianPrior().max_mode(5) == 31
        assert SpectralGaussianPrior(truncation="half").max_mode(5) == 5
        assert SpectralGaussianPrior().grid_size(5) == 64


@pytest.fixture(scope="module")
def points():
    return np.random.default_rng(4).uniform(size=(30, 2))


class TestPointProcess:
    def test_lgc_zero_field(self, points):
        model = PointProcessModel("lgc", points)
        xi = np.zeros((1,) + model.prior.shape((5, 5)), dtype=complex)
        ll, q = model.log_likelihood_and_qoi((5, 5), xi)
        assert ll[0] == pytest.approx(-1.0, abs=1e-14)
        assert q[0] == pytest.approx(1.0, abs=1e-14)

    def test_lgp_zero_and_constant_field(self, points):
        model = PointProcessModel("lgp", points)
        xi = np.zeros((1,) + model.prior.shape((5, 5)), dtype=complex)
        assert model.log_likelihood((5, 5), xi)[0] == pytest.approx(0.0, abs=1e-13)
        shifted = PointProcessModel("lgp", points, SpectralGaussianPrior(theta=(1.7, 1.0, 1.0)))
        assert shifted.log_likelihood((5, 5), xi)[0] == pytest.approx(0.0, abs=1e-12)
        assert shifted.qoi((5, 5), xi)[0] == pytest.approx(math.exp(1.7), rel=1e-13)

    def test_state_nbytes(self, points):
        model = PointProcessModel("lgc", points)
        assert model.state_nbytes((6, 5)) == model.sample_prior((6, 5), 1, np.random.default_rng(0)).nbytes

    def test_grid_weights(self, points):
        w = bilinear_weights(points, (16, 16), (2 / 16, 2 / 16))
        assert w.sum() == pytest.approx(len(points))
        q = trapezoid_weights((16, 16), (2 / 16, 2 / 16))
        assert q.sum() == pytest.approx(1.0)
        assert np.all(q[9:, :] == 0) and np.all(q[:, 9:] == 0)

    def test_linear_field_interpolated_exactly(self, points):
        m = 32
        g = 2.0 * np.arange(m) / m
        field = 3.0 * g[:, None] - 2.0 * g[None, :]
        w = bilinear_weights(points, (m, m), (2 / m, 2 / m))
        assert np.sum(w * field) == pytest.approx(np.sum(3 * points[:, 0] - 2 * points[:, 1]), abs=1e-12)

    def test_pcn_step_zero_and_range(self, points):
        model = PointProcessModel("lgc", points)
        rng = np.random.default_rng(5)
        xi = model.sample_prior((5, 5), 4, rng)
        np.testing.assert_array_equal(model.propose(xi, 0.0, rng), xi)
        with pytest.raises(ValueError):
            model.propose(xi, 1.5, rng)

    def test_pcn_preserves_prior(self, points):
        model = PointProcessModel("lgc", points)
        rng = np.random.default_rng(6)
        xi = model.sample_prior((2, 2), 20_000, rng)
        out = model.propose(model.propose(xi, 0.6, rng), 0.6, rng)
        mask = model.prior.mask((2, 2))
        second = np.mean(np.abs(out) ** 2, axis=0)[mask]
        assert np.all(np.abs(second - 1.0) < 3 * math.sqrt(1.0 / 20_000))
        assert np.all(out[:, ~mask] == 0)

    def test_coarse_subindex_reuses_fine_state(self, points):
        model = PointProcessModel("lgc", points)
        xi = model.sample_prior((6, 7), 2, np.random.default_rng(7))
        coarse = model.prior.restrict(xi, (5, 5))
        np.testing.assert_array_equal(model.log_likelihood((5, 5), xi), model.log_likelihood((5, 5), coarse))

    def test_poisson_thinning_count(self):
        rng = np.random.default_rng(8)
        lam = 12.0
        counts = np.array([len(poisson_thinning(lambda z: np.full(len(z), math.log(lam)), math.log(lam), rng))
                           for _ in range(10_000)])
        assert abs(counts.mean() - lam) < 3 * math.sqrt(lam / 10_000)

    def test_thinning_rate(self):
        rng = np.random.default_rng(9)
        counts = [len(poisson_thinning(lambda z: np.full(len(z), math.log(3.0)), math.log(12.0), rng))
                  for _ in range(10_000)]
        assert abs(np.mean(counts) - 3.0) < 3 * math.sqrt(3.0 / 10_000)

    def test_lgp_sampler_uniform_for_zero_field(self):
        pts = sample_from_log_density(lambda z: np.zeros(len(z)), 0.0, 2000, np.random.default_rng(10))
        assert pts.shape == (2000, 2)
        for j in range(2):
            assert stats.kstest(pts[:, j], "uniform").pvalue > 0.01

    def test_synthetic_models(self):
        lgc = PointProcessModel.synthetic("lgc", np.random.default_rng(11))
        lgp = PointProcessModel.synthetic("lgp", np.random.default_rng(11), n_points=50)
        assert 40 < lgc.n_points < 300
        assert lgp.n_points == 50

    def test_bad_kind(self, points):
        with pytest.raises(ValueError):
            PointProcessModel("cox", points)


class TestPointPatternFiles:
    def test_roundtrip(self, tmp_path):
        pts = np.random.default_rng(12).uniform(size=(7, 2))
        save_point_pattern(tmp_path / "p.csv", pts)
        np.testing.assert_array_equal(load_point_pattern(tmp_path / "p.csv"), pts)

    @pytest.mark.parametrize(
        "text, match",
        [
            ("x,y\n0.1,0.2\n", "header"),
            ("z1,z2\n0.1\n", "2 columns"),
            ("z1,z2\n0.1,abc\n", "could not convert"),
            ("z1,z2\n0.1,1.5\n", "outside"),
            ("z1,z2\nnan,0.5\n", "outside"),
        ],
    )
    def test_malformed(self, tmp_path, text, match):
        path = tmp_path / "bad.csv"
        path.write_text(text)
        with pytest.raises(PointPatternError, match=match):
            load_point_pattern(path)
