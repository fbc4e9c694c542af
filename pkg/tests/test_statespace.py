import numpy as np
import pytest
from scipy.stats import norm

from dfsvm.errors import SizeGuardExceeded
from dfsvm.statespace import (
    LinearGaussianSS,
    dense_gaussian_oracle,
    kalman_filter,
    simulation_smoother_draw,
    smoothed_state_means,
)


def random_system(rng, n=None, m=None, k=None, r=None, scale=1.0):
    n = n or int(rng.integers(2, 9))
    m = m or int(rng.integers(1, 3))
    k = k or int(rng.integers(1, 4))
    r = r or int(rng.integers(max(m, k), m + k + 1))
    Z = rng.standard_normal((n, m, k))
    c = rng.standard_normal((n, m))
    G = scale * rng.standard_normal((n, m, r))
    T = 0.5 * rng.standard_normal((n - 1, k, k))
    d = rng.standard_normal((n - 1, k))
    H = scale * rng.standard_normal((n - 1, k, r))
    a1 = rng.standard_normal(k)
    A = rng.standard_normal((k, k))
    P1 = A @ A.T + 0.2 * np.eye(k)
    sys = LinearGaussianSS(Z=Z, c=c, G=G, T=T, d=d, H=H, a1=a1, P1=P1)
    obs = rng.standard_normal((n, m))
    return sys, obs


class TestKalmanFilter:
    def test_empty_sample(self):
        sys = LinearGaussianSS.time_invariant(
            np.ones((1, 1)), np.zeros(1), np.ones((1, 1)),
            np.zeros((1, 1)), np.zeros(1), np.ones((1, 1)),
            np.zeros(1), np.eye(1), n=0,
        )
        res = kalman_filter(sys, np.zeros((0, 1)))
        assert res.loglik == 0.0
        assert res.filtered_means.shape == (0, 1)

    def test_iid_normal_closed_form(self):
        # Z=1, T=0, H=0 measurement noise sd 1: loglik = sum log phi(z; 0, 2)
        # with P1=1 contributing at t=1 only; use T=0,H=1,G=... simpler case:
        # static scalar system Z=1, T=0, H=1, G=0, a1=0, P1=1 -> y_t ~ N(0,1) iid
        n = 12
        rng = np.random.default_rng(5)
        obs = rng.standard_normal((n, 1))
        sys = LinearGaussianSS.time_invariant(
            np.ones((1, 1)), np.zeros(1), np.zeros((1, 1)),
            np.zeros((1, 1)), np.zeros(1), np.ones((1, 1)),
            np.zeros(1), np.eye(1), n=n,
        )
        expected = norm.logpdf(obs[:, 0]).sum()
        assert abs(kalman_filter(sys, obs).loglik - expected) < 1e-10

    def test_matches_oracle_on_random_systems(self):
        rng = np.random.default_rng(7)
        for _ in range(120):
            sys, obs = random_system(rng)
            res = kalman_filter(sys, obs)
            cm, _, ll = dense_gaussian_oracle(sys, obs)
            assert abs(res.loglik - ll) < 1e-8
            np.testing.assert_allclose(smoothed_state_means(sys, obs), cm, atol=1e-8)

    def test_orthogonal_disturbance_invariance(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            sys, obs = random_system(rng)
            ll = kalman_filter(sys, obs).loglik
            Q, _ = np.linalg.qr(rng.standard_normal((sys.r, sys.r)))
            sys2 = LinearGaussianSS(
                Z=sys.Z, c=sys.c, G=sys.G @ Q, T=sys.T, d=sys.d, H=sys.H @ Q,
                a1=sys.a1, P1=sys.P1,
            )
            assert abs(kalman_filter(sys2, obs).loglik - ll) < 1e-10


class TestSimulationSmoother:
    def test_degenerate_noise_gives_deterministic_path(self):
        # all state noise zero, P1 = 0: draw is the T-iterated path from a1
        n, k, m = 6, 2, 1
        rng = np.random.default_rng(1)
        T = 0.8 * np.eye(k)
        d = np.array([0.1, -0.2])
        sys = LinearGaussianSS.time_invariant(
            np.ones((m, k)), np.zeros(m), np.ones((m, 1)),
            T, d, np.zeros((k, 1)),
            np.array([1.0, 2.0]), np.zeros((k, k)), n=n,
        )
        obs = rng.standard_normal((n, m))
        expected = np.empty((n, k))
        expected[0] = sys.a1
        for t in range(n - 1):
            expected[t + 1] = d + T @ expected[t]
        for seed in (0, 1, 2):
            draw = simulation_smoother_draw(sys, obs, np.random.default_rng(seed))
            np.testing.assert_allclose(draw.states, expected, atol=1e-10)

    def test_moments_match_oracle(self):
        rng = np.random.default_rng(11)
        sys, obs = random_system(rng, n=5, m=2, k=2)
        cm, cc, _ = dense_gaussian_oracle(sys, obs)
        n_draws = 20000
        draws = np.empty((n_draws, sys.n, sys.k))
        g = np.random.default_rng(123)
        for i in range(n_draws):
            draws[i] = simulation_smoother_draw(sys, obs, g).states
        sd = np.sqrt(np.diag(cc)).reshape(sys.n, sys.k)
        err = np.abs(draws.mean(axis=0) - cm)
        assert np.all(err < 4.0 * sd / np.sqrt(n_draws))
        flat = draws.reshape(n_draws, -1)
        emp_cov = np.cov(flat.T)
        # moment se of a covariance entry, normal theory
        se = np.sqrt((np.outer(np.diag(cc), np.diag(cc)) + cc**2) / n_draws)
        assert np.all(np.abs(emp_cov - cc) < 4.5 * se)

    def test_loglik_equals_filter(self):
        rng = np.random.default_rng(13)
        sys, obs = random_system(rng)
        d = simulation_smoother_draw(sys, obs, np.random.default_rng(0))
        assert abs(d.loglik - kalman_filter(sys, obs).loglik) < 1e-10


class TestDenseOracle:
    def test_size_guard(self):
        sys = LinearGaussianSS.time_invariant(
            np.ones((1, 2)), np.zeros(1), np.ones((1, 2)),
            np.eye(2), np.zeros(2), np.eye(2),
            np.zeros(2), np.eye(2), n=300,
        )
        with pytest.raises(SizeGuardExceeded):
            dense_gaussian_oracle(sys, np.zeros((300, 1)))

    def test_noiseless_invertible_observation(self):
        # zero obs noise, Z invertible, k = m: states are implied exactly
        rng = np.random.default_rng(3)
        n, k = 5, 2
        Z = rng.standard_normal((n, k, k)) + 2 * np.eye(k)
        sys = LinearGaussianSS(
            Z=Z, c=np.zeros((n, k)), G=np.zeros((n, k, k)),
            T=0.5 * np.repeat(np.eye(k)[None], n - 1, axis=0),
            d=np.zeros((n - 1, k)),
            H=np.repeat(np.eye(k)[None], n - 1, axis=0),
            a1=np.zeros(k), P1=np.eye(k),
        )
        obs = rng.standard_normal((n, k))
        cm, _, _ = dense_gaussian_oracle(sys, obs)
        implied = np.stack([np.linalg.solve(Z[t], obs[t]) for t in range(n)])
        np.testing.assert_allclose(cm, implied, atol=1e-8)

    def test_uninformative_observations(self):
        # Z = 0 with disjoint disturbance blocks: conditional law equals the
        # unconditional state law
        n, k, m = 4, 2, 1
        rng = np.random.default_rng(4)
        T = 0.6 * rng.standard_normal((n - 1, k, k))
        d = rng.standard_normal((n - 1, k))
        H = np.zeros((n - 1, k, k + m))
        H[:, :, :k] = rng.standard_normal((n - 1, k, k))
        G = np.zeros((n, m, k + m))
        G[:, :, k:] = 1.0
        sys = LinearGaussianSS(
            Z=np.zeros((n, m, k)), c=np.zeros((n, m)), G=G,
            T=T, d=d, H=H, a1=np.ones(k), P1=np.eye(k),
        )
        cm, cc, _ = dense_gaussian_oracle(sys, rng.standard_normal((n, m)))
        mean = np.empty((n, k))
        mean[0] = sys.a1
        cov_t = np.eye(k)
        np.testing.assert_allclose(cm[0], mean[0], atol=1e-10)
        np.testing.assert_allclose(cc[:k, :k], cov_t, atol=1e-10)
        for t in range(n - 1):
            mean[t + 1] = d[t] + T[t] @ mean[t]
            cov_t = T[t] @ cov_t @ T[t].T + H[t] @ H[t].T
            np.testing.assert_allclose(cm[t + 1], mean[t + 1], atol=1e-10)
            blk = cc[(t + 1) * k : (t + 2) * k, (t + 1) * k : (t + 2) * k]
            np.testing.assert_allclose(blk, cov_t, atol=1e-10)

    def test_scalar_bayes_update(self):
        # one observation of an AR(1) state: hand-derived posterior
        prior_mean, prior_var = 0.5, 2.0
        z, g2 = 1.3, 0.7  # obs coefficient and noise variance
        y = 0.9
        sys = LinearGaussianSS(
            Z=np.array([[[z]]]), c=np.zeros((1, 1)),
            G=np.array([[[np.sqrt(g2)]]]),
            T=np.zeros((0, 1, 1)), d=np.zeros((0, 1)), H=np.zeros((0, 1, 1)),
            a1=np.array([prior_mean]), P1=np.array([[prior_var]]),
        )
        cm, cc, ll = dense_gaussian_oracle(sys, np.array([[y]]))
        post_prec = 1.0 / prior_var + z**2 / g2
        post_mean = (prior_mean / prior_var + z * y / g2) / post_prec
        assert abs(cm[0, 0] - post_mean) < 1e-12
        assert abs(cc[0, 0] - 1.0 / post_prec) < 1e-12
        assert abs(ll - norm.logpdf(y, z * prior_mean, np.sqrt(z**2 * prior_var + g2))) < 1e-12
