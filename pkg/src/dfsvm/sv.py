"""Univariate stochastic-volatility-in-mean block with leverage.

Conditioned on everything else, each series of the multivariate model reduces
to

    w_t     = exp(h_t/2) (beta + eps_t)
    h_{t+1} = mu + phi (h_t - mu) + eta_t
    (eps_t, eta_t) ~ N2(0, [[1, rho sigma], [rho sigma, sigma^2]])
    h_1 ~ N(mu, sigma^2 / (1 - phi^2))

This module updates (h_{1..n}, mu, phi, sigma^2, rho) with Markov kernels
that leave the exact conditional posterior invariant:

* h: single-site Metropolis-Hastings swept in an odd/even checkerboard, with
  a Gaussian proposal assembled from the two adjacent transitions;
* mu: exact Gaussian conditional;
* sigma^2: exact inverse-gamma conditional when the series has no leverage,
  otherwise random-walk MH on log sigma^2;
* phi: truncated-normal proposal from the transition likelihood, accepted
  against the prior and the stationary initial term;
* rho: random-walk MH on (-1, 1).

The in-mean coefficient beta is conditioned on here and sampled in its own
block.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DegenerateProposal, NumericalOverflow
from .model import PriorHyper

H_BOUND = 50.0
_SIGMA_RW_SCALE = 0.4
_RHO_RW_SCALE = 0.15
_PHI_RW_SCALE = 0.1


def truncnorm_draw(rng: np.random.Generator, mean: float, sd: float, lo: float, hi: float) -> float:
    """One draw from N(mean, sd^2) truncated to (lo, hi) by inverse CDF."""
    a = ndtr((lo - mean) / sd)
    b = ndtr((hi - mean) / sd)
    if b - a < 1e-14:
        return float(np.clip(mean, lo + 1e-9, hi - 1e-9))
    u = rng.uniform(a, b)
    return float(mean + sd * ndtri(u))


def sv_series_logpdf(h, w, mu, phi, sigma2, rho, beta) -> float:
    """Exact log density of (w, h) given the series parameters (up to the
    2*pi constants shared by every evaluation)."""
    h = np.asarray(h, dtype=float)
    w = np.asarray(w, dtype=float)
    eps = w * np.exp(-h / 2.0) - beta
    ll = float(np.sum(-h / 2.0 - eps**2 / 2.0))
    v2 = sigma2 * (1.0 - rho**2)
    if h.shape[0] > 1:
        resid = h[1:] - mu - phi * (h[:-1] - mu) - rho * math.sqrt(sigma2) * eps[:-1]
        ll += float(np.sum(-0.5 * np.log(v2) - resid**2 / (2.0 * v2)))
    stat_var = sigma2 / (1.0 - phi**2)
    ll += -0.5 * math.log(stat_var) - (h[0] - mu) ** 2 / (2.0 * stat_var)
    return ll


def _site_logtarget(x, wt, beta, mu, phi, v2, sigma2, a_in, has_prev, nxt, has_next, rho_sigma):
    """Vectorized log conditional of candidate site values x (one parity class)."""
    eps = wt * np.exp(-x / 2.0) - beta
    out = -x / 2.0 - eps**2 / 2.0
    prev_term = np.where(
        has_prev,
        -((x - a_in) ** 2) / (2.0 * v2),
        -(1.0 - phi**2) * (x - mu) ** 2 / (2.0 * sigma2),
    )
    next_resid = nxt - mu - phi * (x - mu) - rho_sigma * eps
    out = out + prev_term + np.where(has_next, -(next_resid**2) / (2.0 * v2), 0.0)
    return out


def update_h(h, w, mu, phi, sigma2, rho, beta, rng) -> np.ndarray:
    """One checkerboard sweep of single-site MH over the log-volatility path.

    Sites of one parity are conditionally independent given the other parity,
    so each half-sweep proposes and accepts in parallel.  Proposals combine
    the two adjacent AR(1) transitions (leverage shift of the incoming
    transition included; the outgoing one enters through the accept ratio).
    """
    h = np.asarray(h, dtype=float).copy()
    n = h.shape[0]
    if np.any(np.abs(h) > H_BOUND):
        raise NumericalOverflow("log-volatility exceeded the overflow guard")
    v2 = sigma2 * (1.0 - rho**2)
    rho_sigma = rho * math.sqrt(sigma2)
    for parity in (0, 1):
        idx = np.arange(parity, n, 2)
        if idx.size == 0:
            continue
        has_prev = idx > 0
        has_next = idx < n - 1
        prev = h[np.maximum(idx - 1, 0)]
        nxt = h[np.minimum(idx + 1, n - 1)]
        w_prev = w[np.maximum(idx - 1, 0)]
        eps_prev = w_prev * np.exp(-prev / 2.0) - beta
        a_in = mu + phi * (prev - mu) + rho_sigma * eps_prev
        prec_in = np.where(has_prev, 1.0 / v2, (1.0 - phi**2) / sigma2)
        mean_in = np.where(has_prev, a_in, mu)
        prec_out = np.where(has_next, phi**2 / v2, 0.0)
        pm_out = np.where(has_next, (phi * (nxt - mu) + phi**2 * mu) / v2, 0.0)
        prec = prec_in + prec_out
        mean = (prec_in * mean_in + pm_out) / prec
        cand = mean + rng.standard_normal(idx.size) / np.sqrt(prec)

        cur = h[idx]
        wt = w[idx]
        lt_cand = _site_logtarget(cand, wt, beta, mu, phi, v2, sigma2, a_in, has_prev, nxt, has_next, rho_sigma)
        lt_cur = _site_logtarget(cur, wt, beta, mu, phi, v2, sigma2, a_in, has_prev, nxt, has_next, rho_sigma)
        lq_cand = -prec * (cand - mean) ** 2 / 2.0
        lq_cur = -prec * (cur - mean) ** 2 / 2.0
        logr = (lt_cand - lq_cand) - (lt_cur - lq_cur)
        accept = (np.log(rng.uniform(size=idx.size)) < logr) & (np.abs(cand) <= H_BOUND)
        h[idx[accept]] = cand[accept]
    return h


def update_mu(h, w, phi, sigma2, rho, beta, priors: PriorHyper, rng) -> float:
    """Exact Gaussian conditional for the log-volatility mean."""
    n = h.shape[0]
    v2 = sigma2 * (1.0 - rho**2)
    prec = (1.0 - phi**2) / sigma2 + 1.0 / priors.v_mu2
    pm = h[0] * (1.0 - phi**2) / sigma2 + priors.m_mu / priors.v_mu2
    if n > 1:
        eps = w[:-1] * np.exp(-h[:-1] / 2.0) - beta
        u = h[1:] - phi * h[:-1] - rho * math.sqrt(sigma2) * eps
        prec += (n - 1) * (1.0 - phi) ** 2 / v2
        pm += (1.0 - phi) * float(np.sum(u)) / v2
    return float(pm / prec + rng.standard_normal() / math.sqrt(prec))


def update_sigma2(h, w, mu, phi, rho, beta, sigma2, priors: PriorHyper, rng, rho_free: bool) -> float:
    """Innovation variance update.

    Without leverage the conditional is inverse gamma and is drawn exactly;
    with leverage sigma also shifts the transition mean, so a random-walk MH
    step on log sigma^2 targets the exact conditional instead.
    """
    n = h.shape[0]
    if not rho_free:
        resid2 = float(np.sum((h[1:] - mu - phi * (h[:-1] - mu)) ** 2)) if n > 1 else 0.0
        shape = priors.sigma_shape + 0.5 * n
        scale = priors.sigma_scale + 0.5 * ((1.0 - phi**2) * (h[0] - mu) ** 2 + resid2)
        return float(scale / rng.gamma(shape))

    def logtarget(s2: float) -> float:
        val = -(priors.sigma_shape + 1.0) * math.log(s2) - priors.sigma_scale / s2
        val += -0.5 * math.log(s2 / (1.0 - phi**2)) - (h[0] - mu) ** 2 * (1.0 - phi**2) / (2.0 * s2)
        if n > 1:
            eps = w[:-1] * np.exp(-h[:-1] / 2.0) - beta
            v2 = s2 * (1.0 - rho**2)
            resid = h[1:] - mu - phi * (h[:-1] - mu) - rho * math.sqrt(s2) * eps
            val += float(np.sum(-0.5 * np.log(v2) - resid**2 / (2.0 * v2)))
        return val

    cand = sigma2 * math.exp(_SIGMA_RW_SCALE * rng.standard_normal())
    logr = logtarget(cand) - logtarget(sigma2) + math.log(cand) - math.log(sigma2)
    if math.log(rng.uniform()) < logr:
        return float(cand)
    return float(sigma2)


def update_phi(h, w, mu, sigma2, rho, beta, phi, priors: PriorHyper, rng) -> float:
    """Persistence update: truncated-normal proposal from the transition
    likelihood, accepted against the Beta prior and the stationary term."""
    n = h.shape[0]

    def log_prior_stat(x: float) -> float:
        return (
            (priors.a_phi - 1.0) * math.log1p(x)
            + (priors.b_phi - 1.0) * math.log1p(-x)
            + 0.5 * math.log1p(-x**2)
            - (1.0 - x**2) * (h[0] - mu) ** 2 / (2.0 * sigma2)
        )

    x_dev = h[:-1] - mu
    sxx = float(np.sum(x_dev**2)) if n > 1 else 0.0
    if sxx <= 0.0:
        # no transition information (n = 1 or a flat path): random walk on the
        # exact conditional
        cand = phi + _PHI_RW_SCALE * rng.standard_normal()
        if abs(cand) >= 1.0:
            return float(phi)
        logr = log_prior_stat(cand) - log_prior_stat(phi)
        if n > 1:
            v2 = sigma2 * (1.0 - rho**2)
            eps = w[:-1] * np.exp(-h[:-1] / 2.0) - beta
            rs = rho * math.sqrt(sigma2)
            resid_c = h[1:] - mu - cand * x_dev - rs * eps
            resid = h[1:] - mu - phi * x_dev - rs * eps
            logr += float(np.sum(resid**2 - resid_c**2)) / (2.0 * v2)
        return float(cand) if math.log(rng.uniform()) < logr else float(phi)

    v2 = sigma2 * (1.0 - rho**2)
    eps = w[:-1] * np.exp(-h[:-1] / 2.0) - beta
    resp = h[1:] - mu - rho * math.sqrt(sigma2) * eps
    m_hat = float(np.sum(x_dev * resp)) / sxx
    v_hat = math.sqrt(v2 / sxx)
    cand = truncnorm_draw(rng, m_hat, v_hat, -1.0, 1.0)
    logr = log_prior_stat(cand) - log_prior_stat(phi)
    if math.log(rng.uniform()) < logr:
        return float(cand)
    return float(phi)


def update_rho(h, w, mu, phi, sigma2, beta, rho, rng) -> float:
    """Leverage correlation update under the U(-1,1) prior.

    An equal mixture of a local random walk (sharp posteriors) and an
    independence proposal from the prior (diffuse posteriors); both accept
    with the exact target ratio.
    """
    n = h.shape[0]
    use_rw = rng.uniform() < 0.5
    if n < 2:
        # no observed transitions: the conditional is the flat prior
        cand = rho + _RHO_RW_SCALE * rng.standard_normal() if use_rw else rng.uniform(-1.0, 1.0)
        return float(cand) if abs(cand) < 1.0 else float(rho)

    eps = w[:-1] * np.exp(-h[:-1] / 2.0) - beta
    base = h[1:] - mu - phi * (h[:-1] - mu)
    sigma = math.sqrt(sigma2)

    def logtarget(r: float) -> float:
        v2 = sigma2 * (1.0 - r**2)
        resid = base - r * sigma * eps
        return float(np.sum(-0.5 * np.log(v2) - resid**2 / (2.0 * v2)))

    cand = rho + _RHO_RW_SCALE * rng.standard_normal() if use_rw else rng.uniform(-1.0, 1.0)
    if abs(cand) >= 1.0:
        return float(rho)
    if math.log(rng.uniform()) < logtarget(cand) - logtarget(rho):
        return float(cand)
    return float(rho)


def sv_block_step(
    h: np.ndarray,
    w: np.ndarray,
    mu: float,
    phi: float,
    sigma2: float,
    rho: float,
    beta: float,
    priors: PriorHyper,
    rng: np.random.Generator,
    mu_fixed: bool = False,
    rho_free: bool = True,
) -> tuple[np.ndarray, float, float, float, float]:
    """One full pass over (h, mu, phi, sigma^2, rho) for a single series.

    `mu_fixed` pins the level at its current value (factor volatilities are
    identified with mu = 0); `rho_free` distinguishes leverage series from
    those with the correlation structurally zero.
    """
    h = update_h(h, w, mu, phi, sigma2, rho, beta, rng)
    if not mu_fixed:
        mu = update_mu(h, w, phi, sigma2, rho, beta, priors, rng)
    sigma2 = update_sigma2(h, w, mu, phi, rho, beta, sigma2, priors, rng, rho_free)
    phi = update_phi(h, w, mu, sigma2, rho, beta, phi, priors, rng)
    if rho_free:
        rho = update_rho(h, w, mu, phi, sigma2, beta, rho, rng)
    return h, mu, phi, sigma2, rho
