import math

import numpy as np
import pytest
from scipy.stats import norm

from dfsvm.errors import DimensionMismatch, IndexOutOfRange, NonStationaryParams
from dfsvm.model import (
    InMean,
    LatentPaths,
    Leverage,
    ModelConfig,
    Params,
    PriorHyper,
    config_for,
    lambda_matrix,
    leverage_adjusted_moments,
    leverage_offset_matrices,
    log_joint_density,
    simulate_model,
    volatility_matrices,
)


def small_params(config, **overrides):
    p, q = config.p, config.q
    base = dict(
        Bbar=np.zeros((p, p * config.L)),
        B=np.full((p, q), 0.5),
        gamma=np.zeros(q),
        psi=np.full(q, 0.5) if config.factor_dynamics else np.zeros(q),
        beta=np.zeros(config.beta_len),
        mu=np.concatenate([np.full(p, -0.5), np.zeros(q)]),
        phi=np.full(p + q, 0.8),
        sigma2=np.full(p + q, 0.09),
        rho=np.where(config.leverage_free(), -0.4, 0.0),
    )
    base.update(overrides)
    return Params(**base)


class TestConfig:
    def test_grid_names(self):
        c = config_for("DFSVML", p=20, q=3, L=4)
        assert c.factor_dynamics and c.in_mean is InMean.OBSERVATION
        assert c.leverage is Leverage.FACTORS_ONLY
        c = config_for("FSV", p=5, q=2, L=2)
        assert not c.factor_dynamics and c.in_mean is InMean.NONE
        assert c.leverage is Leverage.NONE
        b = config_for("LSVVAR", p=5, q=0, L=4)
        assert b.benchmark_lsvvar

    def test_dimension_rules(self):
        with pytest.raises(ValueError):
            ModelConfig(p=3, q=3, L=1)
        with pytest.raises(ValueError):
            ModelConfig(p=3, q=0, L=1)
        with pytest.raises(ValueError):
            ModelConfig(p=3, q=1, L=0)

    def test_benchmark_excludes_factor_settings(self):
        with pytest.raises(ValueError):
            ModelConfig(p=3, q=1, L=1, benchmark_lsvvar=True)

    def test_params_invariants(self):
        config = config_for("DFSVML", p=2, q=1, L=1)
        params = small_params(config)
        params.validate(config)
        bad = small_params(config, phi=np.array([1.0, 0.5, 0.5]))
        with pytest.raises(NonStationaryParams):
            bad.validate(config)
        bad = small_params(config, mu=np.array([0.0, 0.0, 1.0]))
        with pytest.raises(ValueError):
            bad.validate(config)
        bad = small_params(config, rho=np.array([0.5, 0.0, 0.0]))  # idio leverage off
        with pytest.raises(ValueError):
            bad.validate(config)

    def test_params_json_roundtrip(self):
        config = config_for("DFSVML", p=2, q=1, L=2)
        params = small_params(config)
        got = Params.from_dict(params.to_dict())
        for name in ("Bbar", "B", "gamma", "psi", "beta", "mu", "phi", "sigma2", "rho"):
            np.testing.assert_array_equal(getattr(got, name), getattr(params, name))


class TestAlgebra:
    def test_lambda_zero_is_identity(self):
        np.testing.assert_array_equal(lambda_matrix(np.zeros(3)), np.eye(3))

    def test_lambda_scale(self):
        out = lambda_matrix(np.array([2.0 * math.log(2.0)]))
        assert abs(out[0, 0] - 2.0) < 1e-14

    def test_lambda_shape(self):
        out = lambda_matrix(np.array([0.1, -0.2, 0.3]))
        assert out.shape == (3, 3)
        assert np.all(out[~np.eye(3, dtype=bool)] == 0.0)

    def test_volatility_split(self):
        V1, V2 = volatility_matrices(np.zeros(3), p=2)
        np.testing.assert_array_equal(V1, np.eye(2))
        np.testing.assert_array_equal(V2, np.eye(1))
        V1, V2 = volatility_matrices(np.array([0.0, 0.0, math.log(9.0)]), p=2)
        assert abs(V2[0, 0] - 9.0) < 1e-12
        V1, _ = volatility_matrices(np.array([math.log(4.0), 0.0, 0.0]), p=2)
        assert abs(V1[0, 0] - 4.0) < 1e-12


class TestLeverageMoments:
    def test_zero_rho(self):
        h = np.array([0.3, -0.2, 0.5])
        for t in (1, 2, 3):
            m, v = leverage_adjusted_moments(h, 0.0, 0.5, 1.0, 0.0, t)
            assert m == 0.0
            assert abs(v - math.exp(h[t - 1])) < 1e-14

    def test_terminal_period(self):
        h = np.array([0.3, -0.2, 0.5])
        m, v = leverage_adjusted_moments(h, 0.0, 0.5, 1.0, 0.9, 3)
        assert m == 0.0 and abs(v - math.exp(0.5)) < 1e-14

    def test_hand_value(self):
        # h_t=0, h_{t+1}=0.3, mu=0, phi=0.5, rho=0.5, sigma=1 -> (0.15, 0.75)
        h = np.array([0.0, 0.3])
        m, v = leverage_adjusted_moments(h, 0.0, 0.5, 1.0, 0.5, 1)
        assert abs(m - 0.15) < 1e-14
        assert abs(v - 0.75) < 1e-14

    def test_index_bounds(self):
        with pytest.raises(IndexOutOfRange):
            leverage_adjusted_moments(np.zeros(3), 0.0, 0.5, 1.0, 0.0, 4)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(0)
        n, p, q = 7, 2, 1
        h = rng.standard_normal((n, p + q))
        mu = np.array([0.1, -0.2, 0.0])
        phi = np.array([0.7, 0.8, 0.9])
        sigma2 = np.array([0.2, 0.3, 0.4])
        rho = np.array([0.5, -0.3, 0.2])
        shift, var = leverage_offset_matrices(h, mu, phi, sigma2, rho)
        for i in range(p + q):
            for t in range(1, n + 1):
                m, v = leverage_adjusted_moments(h[:, i], mu[i], phi[i], sigma2[i], rho[i], t)
                assert abs(shift[t - 1, i] - m) < 1e-12
                assert abs(var[t - 1, i] - v) < 1e-12


class TestSimulate:
    def test_zero_sigma_freezes_volatility(self):
        config = config_for("DFSV", p=2, q=1, L=1)
        params = small_params(config, sigma2=np.zeros(3), rho=np.zeros(3))
        _, lat = simulate_model(config, params, 30, 0)
        np.testing.assert_allclose(lat.h, np.tile(params.mu, (30, 1)), atol=1e-12)

    def test_stationary_initial_variance(self):
        # mu=0, phi=0, sigma=1 -> h_1 ~ N(0, 1)
        config = config_for("DFSV", p=2, q=1, L=1)
        params = small_params(
            config, mu=np.zeros(3), phi=np.zeros(3), sigma2=np.ones(3), rho=np.zeros(3)
        )
        rng = np.random.default_rng(42)
        n_rep = 100_000
        h1 = np.empty(n_rep)
        for i in range(n_rep):
            _, lat = simulate_model(config, params, 2, rng)
            h1[i] = lat.h[0, 0]
        se = math.sqrt(2.0 / n_rep)  # var of sample variance of N(0,1)
        assert abs(h1.var() - 1.0) < 4 * se

    def test_unit_variance_observations(self):
        # Bbar=0, B=0, beta=0, sigma=0, mu=0 -> y iid N(0,1)
        config = config_for("DFSVM", p=2, q=1, L=1)
        params = small_params(
            config,
            B=np.zeros((2, 1)),
            beta=np.zeros(2),
            mu=np.zeros(3),
            sigma2=np.zeros(3),
            rho=np.zeros(3),
        )
        y, _ = simulate_model(config, params, 100_000, 7)
        se = math.sqrt(2.0 / 100_000)
        assert abs(y[:, 0].var() - 1.0) < 3 * se
        assert abs(y[:, 0].mean()) < 3 / math.sqrt(100_000)

    def test_dfsv_and_dfsvml_coincide_at_zero_effects(self):
        p, q, L, n = 3, 1, 2, 40
        dfsv = config_for("DFSV", p=p, q=q, L=L)
        dfsvml = ModelConfig(p=p, q=q, L=L, factor_dynamics=True,
                             in_mean=InMean.OBSERVATION, leverage=Leverage.ALL)
        par0 = small_params(dfsv, rho=np.zeros(p + q))
        par1 = small_params(
            dfsvml, beta=np.zeros(p), rho=np.zeros(p + q),
        )
        y0, lat0 = simulate_model(dfsv, par0, n, 99)
        y1, lat1 = simulate_model(dfsvml, par1, n, 99)
        np.testing.assert_array_equal(y0, y1)
        np.testing.assert_array_equal(lat0.h, lat1.h)
        np.testing.assert_array_equal(lat0.f, lat1.f)

    def test_nonstationary_rejected(self):
        config = config_for("DFSV", p=2, q=1, L=1)
        params = small_params(config, phi=np.array([1.2, 0.5, 0.5]))
        with pytest.raises(NonStationaryParams):
            simulate_model(config, params, 20, 0)

    def test_factor_in_mean_variant(self):
        config = ModelConfig(p=2, q=1, L=1, in_mean=InMean.FACTOR)
        params = small_params(config, beta=np.array([5.0]),
                              sigma2=np.zeros(3), rho=np.zeros(3),
                              mu=np.zeros(3), psi=np.zeros(1),
                              B=np.zeros((2, 1)))
        # sigma=0, mu=0 -> V2=1; f_t = gamma + beta + eps: mean 5
        y, lat = simulate_model(config, params, 50_000, 3)
        assert abs(lat.f.mean() - 5.0) < 0.05


class TestLogJoint:
    def test_hand_assembled_n1(self):
        # n=1, p=1... smallest legal factor model is p=2, q=1; use n=1 and
        # compare differences of the kernel against a hand-built sum of
        # normal log densities at two parameter points.
        config = ModelConfig(p=2, q=1, L=1, in_mean=InMean.OBSERVATION,
                             leverage=Leverage.ALL)
        priors = PriorHyper(s2=np.ones(2), sample_shrinkage=False)
        rng = np.random.default_rng(2)
        y = rng.standard_normal((1, 2))
        f = rng.standard_normal((1, 1))
        h = 0.3 * rng.standard_normal((1, 3))
        lat = LatentPaths(f=f, h=h)

        def hand_kernel(params):
            # measurement densities + stationary h densities + priors
            total = 0.0
            lam = np.exp(h[0, :2] / 2.0)
            mean_y = params.B @ f[0] + lam * params.beta
            for i in range(2):
                total += norm.logpdf(y[0, i], mean_y[i], lam[i])
            total += norm.logpdf(f[0, 0], params.gamma[0], math.exp(h[0, 2] / 2.0))
            for i in range(3):
                sd = math.sqrt(params.sigma2[i] / (1 - params.phi[i] ** 2))
                total += norm.logpdf(h[0, i], params.mu[i], sd)
            # priors
            from dfsvm.mcmc import minnesota_prior_covariance
            minn = minnesota_prior_covariance(priors.minnesota_pi1, priors.minnesota_pi2,
                                              priors.s2, 2, 1)
            total += norm.logpdf(params.Bbar, 0.0, np.sqrt(minn)).sum()
            total += norm.logpdf(params.B, 0.0, 1.0).sum()
            total += norm.logpdf(params.gamma[0], 0.0, 10.0)
            total += norm.logpdf(params.beta, 0.0, 0.5).sum()
            total += norm.logpdf(params.mu[:2], 0.0, 10.0).sum()
            from scipy.stats import invgamma, beta as beta_dist
            total += invgamma.logpdf(params.sigma2, 0.005, scale=0.005).sum()
            total += (beta_dist.logpdf((params.phi + 1) / 2, 20, 1.5) - math.log(2)).sum()
            total += (beta_dist.logpdf((params.psi + 1) / 2, 1, 1) - math.log(2)).sum()
            total += 3 * math.log(0.5)  # three free uniform rho
            return total

        pa = small_params(config, beta=np.array([0.2, -0.1]))
        pb = small_params(config, beta=np.array([-0.3, 0.4]),
                          gamma=np.array([0.5]), phi=np.full(3, 0.6))
        diff_model = log_joint_density(config, pa, lat, y, priors) - log_joint_density(
            config, pb, lat, y, priors
        )
        diff_hand = hand_kernel(pa) - hand_kernel(pb)
        assert abs(diff_model - diff_hand) < 1e-9

    def test_factorizes_at_zero_leverage(self):
        config = config_for("DFSVM", p=2, q=1, L=1)
        priors = PriorHyper(s2=np.ones(2), sample_shrinkage=False)
        params = small_params(config, beta=np.array([0.1, 0.2]))
        y, lat = simulate_model(config, params, 12, 5)
        total = log_joint_density(config, params, lat, y, priors)

        # with rho = 0 the kernel splits into (measurement+transition) blocks;
        # verify additivity by zeroing the data contribution of one series:
        # evaluate on modified h for series 0 only and check the change
        # matches the univariate recomputation
        from dfsvm.model import residual_matrix

        w = residual_matrix(config, params, lat, y)
        lam = np.exp(lat.h / 2.0)
        eps = w / lam
        eps[:, :2] -= params.beta  # in-mean on observation series

        def series_block(i):
            ll = np.sum(norm.logpdf(eps[:, i]) - lat.h[:, i] / 2.0)
            ll += np.sum(
                norm.logpdf(
                    lat.h[1:, i],
                    params.mu[i] + params.phi[i] * (lat.h[:-1, i] - params.mu[i]),
                    math.sqrt(params.sigma2[i]),
                )
            )
            ll += norm.logpdf(
                lat.h[0, i], params.mu[i],
                math.sqrt(params.sigma2[i] / (1 - params.phi[i] ** 2)),
            )
            return ll

        blocks = sum(series_block(i) for i in range(3))
        h2 = lat.h + 0.1
        lat2 = LatentPaths(f=lat.f, h=h2)
        total2 = log_joint_density(config, params, lat2, y, priors)
        w2 = residual_matrix(config, params, lat2, y)
        eps2 = w2 / np.exp(h2 / 2.0)
        eps2[:, :2] -= params.beta

        def series_block2(i):
            ll = np.sum(norm.logpdf(eps2[:, i]) - h2[:, i] / 2.0)
            ll += np.sum(
                norm.logpdf(
                    h2[1:, i],
                    params.mu[i] + params.phi[i] * (h2[:-1, i] - params.mu[i]),
                    math.sqrt(params.sigma2[i]),
                )
            )
            ll += norm.logpdf(
                h2[0, i], params.mu[i],
                math.sqrt(params.sigma2[i] / (1 - params.phi[i] ** 2)),
            )
            return ll

        blocks2 = sum(series_block2(i) for i in range(3))
        assert abs((total2 - total) - (blocks2 - blocks)) < 1e-10

    def test_nonstationary_rejected(self):
        config = config_for("DFSV", p=2, q=1, L=1)
        priors = PriorHyper(s2=np.ones(2))
        params = small_params(config, phi=np.array([1.0, 0.5, 0.5]))
        y = np.zeros((4, 2))
        lat = LatentPaths(f=np.zeros((4, 1)), h=np.zeros((4, 3)))
        with pytest.raises(NonStationaryParams):
            log_joint_density(config, params, lat, y, priors)

    def test_finite_at_generating_parameters(self):
        rng = np.random.default_rng(17)
        for name in ("DFSV", "DFSVL", "DFSVM", "DFSVML", "FSV", "FSVML"):
            config = config_for(name, p=3, q=1, L=1)
            params = small_params(config)
            if config.beta_len:
                params.beta = rng.normal(0, 0.3, config.beta_len)
            y, lat = simulate_model(config, params, 25, rng)
            val = log_joint_density(config, params, lat, y, PriorHyper(s2=np.ones(3)))
            assert np.isfinite(val)
