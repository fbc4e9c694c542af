"""Posterior samplers for the factor models and the SV-VAR benchmark.

One Gibbs sweep of the factor-model sampler visits, in order: the in-mean
coefficients; each series' (log-volatility path, volatility parameters)
block; the loading and lag coefficients; the factor AR coefficients; the
factor mean; the factor path; and (optionally) the Minnesota shrinkage
scalars.  Every conjugate block draws from its exact conditional; the
non-conjugate pieces use Metropolis-Hastings kernels that leave the exact
conditional invariant (see `sv`).

The benchmark sampler shares the lag prior and the volatility block but has
a recursive contemporaneous matrix instead of factors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import sv
from .data_io import Panel
from .errors import (
    DegenerateProposal,
    DegenerateTrace,
    EmptyTrace,
    NonPositiveDefinitePosteriorCov,
    NonPositiveShrinkage,
    SingularDesign,
    TooShortTrace,
)
from .model import (
    InMean,
    LatentPaths,
    Leverage,
    LsvvarParams,
    ModelConfig,
    Params,
    PriorHyper,
    lagged_design,
    leverage_offset_matrices,
)
from .statespace import LinearGaussianSS, simulation_smoother_draw

_SHRINKAGE_RW_SCALE = 0.2


# ---------------------------------------------------------------------------
# priors
# ---------------------------------------------------------------------------

def minnesota_prior_covariance(pi1: float, pi2: float, s2: np.ndarray, p: int, L: int) -> np.ndarray:
    """Per-row diagonal prior variances for the stacked lag coefficients.

    Row i, column (ell-1)*p + j holds Var((B_ell)_{ij}): pi1/ell^2 on own
    lags and pi1*pi2*s_i^2/(ell^2 s_j^2) on cross lags, shrinking higher
    lags and cross effects.  Prior means are zero throughout.
    """
    if pi1 <= 0.0 or pi2 <= 0.0:
        raise NonPositiveShrinkage("shrinkage scalars must be positive")
    s2 = np.asarray(s2, dtype=float)
    if s2.shape != (p,) or np.any(s2 <= 0.0):
        raise NonPositiveShrinkage("s2 must be p positive residual variances")
    out = np.empty((p, p * L))
    for ell in range(1, L + 1):
        block = pi1 * pi2 * s2[:, None] / (ell**2 * s2[None, :])
        np.fill_diagonal(block, pi1 / ell**2)
        out[:, (ell - 1) * p : ell * p] = block
    return out


def estimate_ar_residual_variance(series: np.ndarray, L: int) -> float:
    """Residual variance of an AR(L) fit with intercept (OLS).

    Denominator is (effective sample size - L - 1).
    """
    y = np.asarray(series, dtype=float)
    n_full = y.shape[0]
    if n_full <= L + 1:
        raise SingularDesign("series too short for the AR order")
    resp = y[L:]
    D = np.column_stack([np.ones(n_full - L)] + [y[L - j : n_full - j] for j in range(1, L + 1)])
    if np.linalg.matrix_rank(D) < L + 1:
        raise SingularDesign("collinear AR design (constant series?)")
    dof = resp.shape[0] - L - 1
    if dof <= 0:
        raise SingularDesign("no residual degrees of freedom")
    coef, *_ = np.linalg.lstsq(D, resp, rcond=None)
    resid = resp - D @ coef
    return float(resid @ resid / dof)


def sample_prior_params(
    config: ModelConfig, priors: PriorHyper, rng: np.random.Generator, s2: np.ndarray
) -> tuple[Params, float, float]:
    """Draw parameters from the prior (shrinkage scalars included if sampled)."""
    p, q, L = config.p, config.q, config.L
    if priors.sample_shrinkage:
        pi1 = rng.uniform(0.0, 1.0)
        pi2 = rng.uniform(0.0, 1.0)
        pi1 = max(pi1, 1e-6)
        pi2 = max(pi2, 1e-6)
    else:
        pi1, pi2 = priors.minnesota_pi1, priors.minnesota_pi2
    minn = minnesota_prior_covariance(pi1, pi2, s2, p, L)
    params = Params(
        Bbar=rng.standard_normal((p, p * L)) * np.sqrt(minn),
        B=rng.standard_normal((p, q)) * math.sqrt(priors.loading_var),
        gamma=priors.m_gamma + math.sqrt(priors.s_gamma) * rng.standard_normal(q),
        psi=(2.0 * rng.beta(priors.a_psi, priors.b_psi, q) - 1.0) if config.factor_dynamics else np.zeros(q),
        beta=priors.m_beta + math.sqrt(priors.v_beta2) * rng.standard_normal(config.beta_len),
        mu=np.concatenate([
            priors.m_mu + math.sqrt(priors.v_mu2) * rng.standard_normal(p),
            np.zeros(q),
        ]),
        phi=2.0 * rng.beta(priors.a_phi, priors.b_phi, p + q) - 1.0,
        sigma2=priors.sigma_scale / rng.gamma(priors.sigma_shape, size=p + q),
        rho=np.where(config.leverage_free(), rng.uniform(-1.0, 1.0, p + q), 0.0),
    )
    return params, pi1, pi2


# ---------------------------------------------------------------------------
# chain state
# ---------------------------------------------------------------------------

@dataclass
class ChainState:
    """Mutable sampler state: data, parameters, latents, and cached
    leverage-adjusted moments of the mean innovations."""

    config: ModelConfig
    priors: PriorHyper
    y: np.ndarray
    y_init: np.ndarray
    params: Params
    f: np.ndarray
    h: np.ndarray
    pi1: float
    pi2: float
    s2: np.ndarray
    X_lag: np.ndarray = field(default=None)  # type: ignore[assignment]
    shift: np.ndarray = field(default=None)  # type: ignore[assignment]
    var: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.X_lag is None:
            self.rebuild_lags()
        if self.shift is None:
            self.refresh_offsets()

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def rebuild_lags(self) -> None:
        self.X_lag = lagged_design(np.vstack([self.y_init, self.y]), self.config.L)

    def refresh_offsets(self) -> None:
        self.shift, self.var = leverage_offset_matrices(
            self.h, self.params.mu, self.params.phi, self.params.sigma2, self.params.rho
        )

    def f_lagged(self) -> np.ndarray:
        """Factor lags with the pre-sample factor at its mean."""
        return np.vstack([self.params.gamma, self.f[:-1]])

    def obs_residual(self) -> np.ndarray:
        """y net of lags and factors (in-mean term not subtracted)."""
        return self.y - self.X_lag @ self.params.Bbar.T - self.f @ self.params.B.T

    def factor_residual(self) -> np.ndarray:
        """f net of its AR(1) mean (in-mean term not subtracted)."""
        g = self.params.gamma
        return self.f - g - (self.f_lagged() - g) * self.params.psi

    def in_mean_obs(self) -> np.ndarray:
        if self.config.in_mean is InMean.OBSERVATION:
            return np.exp(self.h[:, : self.config.p] / 2.0) * self.params.beta
        return np.zeros((self.n, self.config.p))

    def in_mean_fac(self) -> np.ndarray:
        if self.config.in_mean is InMean.FACTOR:
            return np.exp(self.h[:, self.config.p :] / 2.0) * self.params.beta
        return np.zeros((self.n, self.config.q))


def _chol_draw(prec: np.ndarray, pm: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Mean and one draw of N(prec^{-1} pm, prec^{-1})."""
    try:
        Lc = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        raise NonPositiveDefinitePosteriorCov("posterior precision not positive definite")
    mean = np.linalg.solve(prec, pm)
    z = rng.standard_normal(pm.shape[0])
    draw = mean + np.linalg.solve(Lc.T, z)
    return mean, draw


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------

def beta_posterior_moments(state: ChainState) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form (mean, variance) of each independent in-mean coefficient."""
    cfg, pr = state.config, state.priors
    p = cfg.p
    if cfg.in_mean is InMean.OBSERVATION:
        x = np.exp(state.h[:, :p] / 2.0)
        resp = state.obs_residual() - state.shift[:, :p]
        var = state.var[:, :p]
    elif cfg.in_mean is InMean.FACTOR:
        x = np.exp(state.h[:, p:] / 2.0)
        resp = state.factor_residual() - state.shift[:, p:]
        var = state.var[:, p:]
    else:
        return np.zeros(0), np.zeros(0)
    prec = np.sum(x**2 / var, axis=0) + 1.0 / pr.v_beta2
    pm = np.sum(x * resp / var, axis=0) + pr.m_beta / pr.v_beta2
    return pm / prec, 1.0 / prec


def sample_beta(state: ChainState, rng: np.random.Generator) -> np.ndarray:
    """Exact Gaussian draw of the in-mean coefficients."""
    mean, var = beta_posterior_moments(state)
    draw = mean + np.sqrt(var) * rng.standard_normal(mean.shape[0])
    state.params.beta = draw
    return draw


def sample_sv_block(state: ChainState, i: int, rng: np.random.Generator) -> None:
    """Update series i's log-volatility path and volatility parameters.

    Reduces the model to the univariate SV(-in-mean) form on the series'
    residual and delegates to the `sv` kernels.  Factor series keep their
    level pinned at zero; leverage-disabled series keep rho at zero.
    Offsets are NOT refreshed here; the sweep refreshes once after all
    series are updated.
    """
    cfg = state.config
    p = cfg.p
    if i < p:
        w = state.obs_residual()[:, i]
        beta_i = float(state.params.beta[i]) if cfg.in_mean is InMean.OBSERVATION else 0.0
        mu_fixed = False
    else:
        w = state.factor_residual()[:, i - p]
        beta_i = float(state.params.beta[i - p]) if cfg.in_mean is InMean.FACTOR else 0.0
        mu_fixed = True
    rho_free = bool(cfg.leverage_free()[i])
    h_i, mu_i, phi_i, sig2_i, rho_i = sv.sv_block_step(
        state.h[:, i],
        w,
        float(state.params.mu[i]),
        float(state.params.phi[i]),
        float(state.params.sigma2[i]),
        float(state.params.rho[i]),
        beta_i,
        state.priors,
        rng,
        mu_fixed=mu_fixed,
        rho_free=rho_free,
    )
    state.h[:, i] = h_i
    state.params.mu[i] = mu_i
    state.params.phi[i] = phi_i
    state.params.sigma2[i] = sig2_i
    state.params.rho[i] = rho_i


def var_row_posterior_moments(state: ChainState, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form (mean, covariance) for row i of (B, Bbar) jointly."""
    cfg, pr = state.config, state.priors
    D = np.hstack([state.f, state.X_lag])
    resp = state.y[:, i] - state.in_mean_obs()[:, i] - state.shift[:, i]
    wgt = 1.0 / state.var[:, i]
    minn = minnesota_prior_covariance(state.pi1, state.pi2, state.s2, cfg.p, cfg.L)
    prior_var = np.concatenate([np.full(cfg.q, pr.loading_var), minn[i]])
    A = D * wgt[:, None]
    prec = D.T @ A + np.diag(1.0 / prior_var)
    pm = A.T @ resp
    try:
        cov = np.linalg.inv(prec)
    except np.linalg.LinAlgError:
        raise NonPositiveDefinitePosteriorCov("row posterior precision singular")
    return cov @ pm, cov


def sample_var_coeffs(state: ChainState, rng: np.random.Generator) -> None:
    """Exact per-row Gaussian draw of the loading and lag coefficients."""
    cfg, pr = state.config, state.priors
    p, q = cfg.p, cfg.q
    D = np.hstack([state.f, state.X_lag])
    in_mean = state.in_mean_obs()
    minn = minnesota_prior_covariance(state.pi1, state.pi2, state.s2, p, cfg.L)
    for i in range(p):
        resp = state.y[:, i] - in_mean[:, i] - state.shift[:, i]
        wgt = 1.0 / state.var[:, i]
        prior_var = np.concatenate([np.full(q, pr.loading_var), minn[i]])
        A = D * wgt[:, None]
        prec = D.T @ A + np.diag(1.0 / prior_var)
        pm = A.T @ resp
        _, draw = _chol_draw(prec, pm, rng)
        state.params.B[i] = draw[:q]
        state.params.Bbar[i] = draw[q:]


def psi_proposal_moments(state: ChainState, j: int) -> tuple[float, float]:
    """(mean, variance) of the truncated-normal proposal for one factor AR
    coefficient, from the heteroskedastic transition likelihood."""
    p = state.config.p
    reg = state.f_lagged()[:, j] - state.params.gamma[j]
    num = state.f[:, j] - state.params.gamma[j] - state.shift[:, p + j] - state.in_mean_fac()[:, j]
    wgt = 1.0 / state.var[:, p + j]
    sxx = float(np.sum(reg**2 * wgt))
    if sxx <= 0.0:
        raise DegenerateProposal("no information about the factor AR coefficient")
    v_hat = 1.0 / sxx
    m_hat = v_hat * float(np.sum(reg * num * wgt))
    return m_hat, v_hat


def sample_psi(state: ChainState, rng: np.random.Generator) -> None:
    """MH update of each factor AR coefficient with a truncated-normal
    proposal; the transition likelihood cancels, leaving the prior ratio."""
    pr = state.priors
    for j in range(state.config.q):
        m_hat, v_hat = psi_proposal_moments(state, j)
        cur = float(state.params.psi[j])
        cand = sv.truncnorm_draw(rng, m_hat, math.sqrt(v_hat), -1.0, 1.0)
        logr = (pr.a_psi - 1.0) * (math.log1p(cand) - math.log1p(cur)) \
            + (pr.b_psi - 1.0) * (math.log1p(-cand) - math.log1p(-cur))
        if math.log(rng.uniform()) < logr:
            state.params.psi[j] = cand


def gamma_posterior_moments(state: ChainState) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form (mean, variance) per coordinate of the factor mean.

    The factor starts at its mean, so the first transition carries a unit
    coefficient on gamma and later ones carry (1 - psi_j).
    """
    cfg, pr = state.config, state.priors
    p = cfg.p
    im = state.in_mean_fac()
    mean = np.empty(cfg.q)
    var = np.empty(cfg.q)
    for j in range(cfg.q):
        psi_j = state.params.psi[j]
        s = state.shift[:, p + j]
        v = state.var[:, p + j]
        prec = 1.0 / v[0] + (1.0 - psi_j) ** 2 * float(np.sum(1.0 / v[1:])) + 1.0 / pr.s_gamma
        pm = (state.f[0, j] - s[0] - im[0, j]) / v[0] + pr.m_gamma / pr.s_gamma
        if state.n > 1:
            resid = state.f[1:, j] - psi_j * state.f[:-1, j] - s[1:] - im[1:, j]
            pm += (1.0 - psi_j) * float(np.sum(resid / v[1:]))
        mean[j] = pm / prec
        var[j] = 1.0 / prec
    return mean, var


def sample_gamma(state: ChainState, rng: np.random.Generator) -> np.ndarray:
    """Exact Gaussian draw of the factor mean."""
    mean, var = gamma_posterior_moments(state)
    draw = mean + np.sqrt(var) * rng.standard_normal(mean.shape[0])
    state.params.gamma = draw
    return draw


def factor_state_space(state: ChainState) -> tuple[LinearGaussianSS, np.ndarray]:
    """Assemble the linear Gaussian system whose states are the factor path.

    Observations are y net of the lag part; observation and state disturbances
    occupy disjoint blocks of one shared standard-normal vector, and the
    leverage adjustment enters through the offsets and variances.
    """
    cfg = state.config
    p, q, n = cfg.p, cfg.q, state.n
    z = state.y - state.X_lag @ state.params.Bbar.T
    Z = np.repeat(state.params.B[None], n, axis=0)
    c = state.in_mean_obs() + state.shift[:, :p]
    G = np.zeros((n, p, p + q))
    G[:, np.arange(p), np.arange(p)] = np.sqrt(state.var[:, :p])
    nt = n - 1
    T = np.zeros((nt, q, q))
    T[:, np.arange(q), np.arange(q)] = state.params.psi
    d = (1.0 - state.params.psi) * state.params.gamma + state.shift[1:, p:] + state.in_mean_fac()[1:]
    H = np.zeros((nt, q, p + q))
    H[:, np.arange(q), p + np.arange(q)] = np.sqrt(state.var[1:, p:])
    a1 = state.params.gamma + state.shift[0, p:] + state.in_mean_fac()[0]
    P1 = np.diag(state.var[0, p:])
    return LinearGaussianSS(Z=Z, c=c, G=G, T=T, d=d, H=H, a1=a1, P1=P1), z


def sample_factors(state: ChainState, rng: np.random.Generator) -> np.ndarray:
    """One exact joint draw of the factor path via the simulation smoother."""
    sys, z = factor_state_space(state)
    draw = simulation_smoother_draw(sys, z, rng)
    state.f = draw.states
    return state.f


def sample_shrinkage(state: ChainState, rng: np.random.Generator) -> tuple[float, float]:
    """Random-walk MH on the log shrinkage scalars under U(0,1] priors,
    targeting the Minnesota prior density of the current lag coefficients."""
    if not state.priors.sample_shrinkage:
        return state.pi1, state.pi2

    def logtarget(pi1: float, pi2: float) -> float:
        if not (0.0 < pi1 <= 1.0 and 0.0 < pi2 <= 1.0):
            return -np.inf
        V = minnesota_prior_covariance(pi1, pi2, state.s2, state.config.p, state.config.L)
        return float(np.sum(-0.5 * np.log(V) - state.params.Bbar**2 / (2.0 * V)))

    for which in (0, 1):
        cur = (state.pi1, state.pi2)
        scale = math.exp(_SHRINKAGE_RW_SCALE * rng.standard_normal())
        cand = (cur[0] * scale, cur[1]) if which == 0 else (cur[0], cur[1] * scale)
        logr = logtarget(*cand) - logtarget(*cur) + math.log(scale)
        if math.log(rng.uniform()) < logr:
            state.pi1, state.pi2 = cand
    return state.pi1, state.pi2


def gibbs_sweep(state: ChainState, rng: np.random.Generator) -> None:
    """One full sweep over the blocks, in the sampler's canonical order."""
    cfg = state.config
    if cfg.beta_len:
        sample_beta(state, rng)
    for i in range(cfg.p + cfg.q):
        sample_sv_block(state, i, rng)
    state.refresh_offsets()
    sample_var_coeffs(state, rng)
    if cfg.factor_dynamics:
        sample_psi(state, rng)
    sample_gamma(state, rng)
    sample_factors(state, rng)
    if state.priors.sample_shrinkage:
        sample_shrinkage(state, rng)


def simulate_obs_given_latents(state: ChainState, rng: np.random.Generator) -> np.ndarray:
    """Draw y from its exact conditional given parameters and latent paths.

    Used by the joint-distribution (successive-conditional) correctness test;
    sequential in t because of the lag feedback.
    """
    cfg = state.config
    p, L, n = cfg.p, cfg.L, state.n
    mean_extra = state.in_mean_obs() + state.shift[:, :p]
    sd = np.sqrt(state.var[:, :p])
    fB = state.f @ state.params.B.T
    buf = list(state.y_init)
    y = np.empty((n, p))
    for t in range(n):
        x_lag = np.concatenate(buf[::-1])
        y[t] = state.params.Bbar @ x_lag + fB[t] + mean_extra[t] + sd[t] * rng.standard_normal(p)
        buf.pop(0)
        buf.append(y[t])
    return y


# ---------------------------------------------------------------------------
# chain drivers
# ---------------------------------------------------------------------------

@dataclass
class ChainConfig:
    """Sampler run settings; `floor(n_draws / thin)` draws are retained."""

    n_draws: int
    n_burnin: int
    thin: int = 1
    seed: int = 0
    store_latents: str = "last"  # none | last | full

    def __post_init__(self):
        if self.thin < 1 or self.n_draws < 1 or self.n_burnin < 0:
            raise ValueError("need thin >= 1, n_draws >= 1, n_burnin >= 0")
        if self.store_latents not in ("none", "last", "full"):
            raise ValueError("store_latents must be none, last, or full")

    @property
    def n_retained(self) -> int:
        return self.n_draws // self.thin


@dataclass
class DrawSet:
    """Retained posterior draws, stacked along the first axis."""

    kind: str  # "factor" | "lsvvar"
    arrays: dict[str, np.ndarray]
    n_obs: int
    meta: dict

    @property
    def n_draws(self) -> int:
        return next(iter(self.arrays.values())).shape[0]

    def trace(self, name: str, *index: int) -> np.ndarray:
        arr = self.arrays[name]
        return arr[(slice(None),) + tuple(index)]

    def params_at(self, d: int):
        a = self.arrays
        if self.kind == "factor":
            return Params(
                Bbar=a["Bbar"][d], B=a["B"][d], gamma=a["gamma"][d], psi=a["psi"][d],
                beta=a["beta"][d], mu=a["mu"][d], phi=a["phi"][d],
                sigma2=a["sigma2"][d], rho=a["rho"][d],
            )
        return LsvvarParams(
            B0=a["B0"][d], b=a["b"][d], Bbar=a["Bbar"][d],
            mu=a["mu"][d], phi=a["phi"][d], sigma2=a["sigma2"][d],
        )

    def scalar_traces(self):
        """Yield (label, 1-d trace) for every scalar parameter."""
        skip = {"h_last", "f_last", "h_paths", "f_paths"}
        for name, arr in self.arrays.items():
            if name in skip:
                continue
            if arr.ndim == 1:
                yield name, arr
            else:
                flat = arr.reshape(arr.shape[0], -1)
                for j in range(flat.shape[1]):
                    idx = np.unravel_index(j, arr.shape[1:])
                    label = name + "[" + ",".join(str(i) for i in idx) + "]"
                    yield label, flat[:, j]

    def summary(self) -> pd.DataFrame:
        rows = []
        for label, trace in self.scalar_traces():
            s = posterior_summary(trace)
            rows.append({
                "param": label, "mean": s.mean, "q2.5": s.q025, "q97.5": s.q975,
                "pr_positive": s.prob_positive, "if": s.if_factor,
            })
        return pd.DataFrame(rows)


def _prepare_panel(panel, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a panel (or array) into presample and effective sample."""
    values = panel.values if isinstance(panel, Panel) else np.asarray(panel, dtype=float)
    if values.shape[0] <= L + 2:
        raise ValueError("panel too short for the lag order")
    return values[:L], values[L:]


def _default_s2(priors: PriorHyper, y_full: np.ndarray, L: int) -> np.ndarray:
    if priors.s2 is not None:
        return np.asarray(priors.s2, dtype=float)
    return np.maximum(
        [estimate_ar_residual_variance(y_full[:, j], L) for j in range(y_full.shape[1])],
        1e-12,
    )


def initial_chain_state(config: ModelConfig, priors: PriorHyper, panel) -> ChainState:
    """Deterministic starting point: principal-component factors, flat
    coefficients, and log-volatilities at their sample levels."""
    y_init, y = _prepare_panel(panel, config.L)
    p, q = config.p, config.q
    s2 = _default_s2(priors, np.vstack([y_init, y]), config.L)
    yc = y - y.mean(axis=0)
    _, _, vt = np.linalg.svd(yc, full_matrices=False)
    f0 = yc @ vt[:q].T
    sd_f = f0.std(axis=0, ddof=1)
    sd_f[sd_f == 0.0] = 1.0
    f0 = f0 / sd_f
    B0 = yc.T @ f0 / y.shape[0]
    mu0 = np.concatenate([np.log(np.maximum(y.var(axis=0), 1e-4)), np.zeros(q)])
    params = Params(
        Bbar=np.zeros((p, p * config.L)),
        B=B0,
        gamma=np.zeros(q),
        psi=np.full(q, 0.5) if config.factor_dynamics else np.zeros(q),
        beta=np.zeros(config.beta_len),
        mu=mu0,
        phi=np.full(p + q, 0.9),
        sigma2=np.full(p + q, 0.05),
        rho=np.zeros(p + q),
    )
    h0 = np.repeat(mu0[None], y.shape[0], axis=0)
    return ChainState(
        config=config, priors=priors, y=y, y_init=y_init, params=params,
        f=f0, h=h0, pi1=priors.minnesota_pi1, pi2=priors.minnesota_pi2, s2=s2,
    )


def _alloc_factor_arrays(config: ModelConfig, chain: ChainConfig, n: int) -> dict[str, np.ndarray]:
    D = chain.n_retained
    p, q, L = config.p, config.q, config.L
    arrays = {
        "Bbar": np.empty((D, p, p * L)),
        "B": np.empty((D, p, q)),
        "gamma": np.empty((D, q)),
        "psi": np.empty((D, q)),
        "beta": np.empty((D, config.beta_len)),
        "mu": np.empty((D, p + q)),
        "phi": np.empty((D, p + q)),
        "sigma2": np.empty((D, p + q)),
        "rho": np.empty((D, p + q)),
        "pi1": np.empty(D),
        "pi2": np.empty(D),
    }
    if chain.store_latents in ("last", "full"):
        arrays["h_last"] = np.empty((D, p + q))
        arrays["f_last"] = np.empty((D, q))
    if chain.store_latents == "full":
        arrays["h_paths"] = np.empty((D, n, p + q))
        arrays["f_paths"] = np.empty((D, n, q))
    return arrays


def _store_factor_draw(arrays: dict, d: int, state: ChainState, chain: ChainConfig) -> None:
    pr = state.params
    arrays["Bbar"][d] = pr.Bbar
    arrays["B"][d] = pr.B
    arrays["gamma"][d] = pr.gamma
    arrays["psi"][d] = pr.psi
    arrays["beta"][d] = pr.beta
    arrays["mu"][d] = pr.mu
    arrays["phi"][d] = pr.phi
    arrays["sigma2"][d] = pr.sigma2
    arrays["rho"][d] = pr.rho
    arrays["pi1"][d] = state.pi1
    arrays["pi2"][d] = state.pi2
    if chain.store_latents in ("last", "full"):
        arrays["h_last"][d] = state.h[-1]
        arrays["f_last"][d] = state.f[-1]
    if chain.store_latents == "full":
        arrays["h_paths"][d] = state.h
        arrays["f_paths"][d] = state.f


def _save_checkpoint(path, state_dict: dict, arrays: dict, latents: dict) -> None:
    path = str(path)
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(state_dict, fh)
    np.savez(path + ".npz", **latents, **{"draws_" + k: v for k, v in arrays.items()})


def _load_checkpoint(path) -> tuple[dict, dict, dict]:
    path = str(path)
    with open(path + ".json", encoding="utf-8") as fh:
        state_dict = json.load(fh)
    data = np.load(path + ".npz")
    latents = {k: data[k] for k in data.files if not k.startswith("draws_")}
    arrays = {k[len("draws_"):]: data[k].copy() for k in data.files if k.startswith("draws_")}
    return state_dict, latents, arrays


def run_chain(
    config: ModelConfig,
    chain: ChainConfig,
    panel,
    priors: PriorHyper | None = None,
    checkpoint_path=None,
    checkpoint_every: int | None = None,
    resume: bool = False,
    stop_after: int | None = None,
) -> DrawSet | None:
    """Run the full factor-model sampler and collect retained draws.

    The chain is a deterministic function of (config, chain settings, data):
    the same seed reproduces the same DrawSet bit for bit.  With
    `checkpoint_path` the sampler state is persisted every
    `checkpoint_every` iterations (and at `stop_after`), and `resume=True`
    continues an interrupted run to an identical result.  Returns None when
    stopped early by `stop_after`.
    """
    if config.benchmark_lsvvar:
        raise ValueError("use run_lsvvar_chain for the benchmark model")
    priors = priors or PriorHyper()
    state = initial_chain_state(config, priors, panel)
    rng = np.random.default_rng(chain.seed)
    total = chain.n_burnin + chain.n_draws
    arrays = _alloc_factor_arrays(config, chain, state.n)
    start_it = 0

    if resume:
        if checkpoint_path is None:
            raise ValueError("resume requires checkpoint_path")
        meta, latents, saved = _load_checkpoint(checkpoint_path)
        state.params = Params.from_dict(meta["params"])
        state.pi1, state.pi2 = meta["pi1"], meta["pi2"]
        state.f = latents["f"]
        state.h = latents["h"]
        state.refresh_offsets()
        for k, v in saved.items():
            arrays[k] = v  # checkpointed arrays are allocated full-size
        rng.bit_generator.state = meta["rng_state"]
        start_it = meta["iteration"]

    def checkpoint(it: int) -> None:
        meta = {
            "iteration": it,
            "params": state.params.to_dict(),
            "pi1": state.pi1,
            "pi2": state.pi2,
            "rng_state": rng.bit_generator.state,
        }
        _save_checkpoint(checkpoint_path, meta, arrays, {"f": state.f, "h": state.h})

    for it in range(start_it, total):
        if stop_after is not None and it >= stop_after:
            if checkpoint_path is not None:
                checkpoint(it)
            return None
        gibbs_sweep(state, rng)
        j = it - chain.n_burnin + 1
        if j >= 1 and j % chain.thin == 0:
            d = j // chain.thin - 1
            if d < chain.n_retained:
                _store_factor_draw(arrays, d, state, chain)
        if checkpoint_path is not None and checkpoint_every and (it + 1) % checkpoint_every == 0:
            checkpoint(it + 1)

    meta = {"config": config, "chain": chain, "priors": priors, "s2": state.s2,
            "y_tail": np.vstack([state.y_init, state.y])[-config.L:]}
    return DrawSet(kind="factor", arrays=arrays, n_obs=state.n, meta=meta)


# ---------------------------------------------------------------------------
# LSVVAR benchmark
# ---------------------------------------------------------------------------

@dataclass
class LsvvarState:
    priors: PriorHyper
    L: int
    y: np.ndarray
    y_init: np.ndarray
    X_lag: np.ndarray
    B0: np.ndarray
    b: np.ndarray
    Bbar: np.ndarray
    mu: np.ndarray
    phi: np.ndarray
    sigma2: np.ndarray
    h: np.ndarray
    pi1: float
    pi2: float
    s2: np.ndarray

    @property
    def p(self) -> int:
        return self.y.shape[1]

    def fitted_row(self, i: int) -> np.ndarray:
        out = self.b[i] + self.X_lag @ self.Bbar[i]
        if i > 0:
            out = out - self.y[:, :i] @ self.B0[i, :i]
        return out


def lsvvar_sweep(state: LsvvarState, rng: np.random.Generator) -> None:
    """One sweep of the benchmark sampler: per-equation coefficient rows
    (recursive contemporaneous terms treated as regressors) then one plain
    SV block per equation."""
    p = state.p
    minn = minnesota_prior_covariance(state.pi1, state.pi2, state.s2, p, state.L)
    for i in range(p):
        D = np.column_stack([np.ones(state.y.shape[0]), state.X_lag, state.y[:, :i]])
        prior_var = np.concatenate([
            [state.priors.intercept_var], minn[i], np.full(i, state.priors.b0_var),
        ])
        wgt = np.exp(-state.h[:, i])
        A = D * wgt[:, None]
        prec = D.T @ A + np.diag(1.0 / prior_var)
        pm = A.T @ state.y[:, i]
        _, draw = _chol_draw(prec, pm, rng)
        state.b[i] = draw[0]
        state.Bbar[i] = draw[1 : 1 + state.Bbar.shape[1]]
        if i > 0:
            state.B0[i, :i] = -draw[1 + state.Bbar.shape[1] :]
    for i in range(p):
        w = state.y[:, i] - state.fitted_row(i)
        h_i, mu_i, phi_i, sig2_i, _ = sv.sv_block_step(
            state.h[:, i], w, float(state.mu[i]), float(state.phi[i]),
            float(state.sigma2[i]), 0.0, 0.0, state.priors, rng,
            mu_fixed=False, rho_free=False,
        )
        state.h[:, i] = h_i
        state.mu[i] = mu_i
        state.phi[i] = phi_i
        state.sigma2[i] = sig2_i
    if state.priors.sample_shrinkage:
        _lsvvar_shrinkage(state, rng)


def _lsvvar_shrinkage(state: LsvvarState, rng: np.random.Generator) -> None:
    def logtarget(pi1, pi2):
        if not (0.0 < pi1 <= 1.0 and 0.0 < pi2 <= 1.0):
            return -np.inf
        V = minnesota_prior_covariance(pi1, pi2, state.s2, state.p, state.L)
        return float(np.sum(-0.5 * np.log(V) - state.Bbar**2 / (2.0 * V)))

    for which in (0, 1):
        cur = (state.pi1, state.pi2)
        scale = math.exp(_SHRINKAGE_RW_SCALE * rng.standard_normal())
        cand = (cur[0] * scale, cur[1]) if which == 0 else (cur[0], cur[1] * scale)
        logr = logtarget(*cand) - logtarget(*cur) + math.log(scale)
        if math.log(rng.uniform()) < logr:
            state.pi1, state.pi2 = cand


def run_lsvvar_chain(chain: ChainConfig, panel, priors: PriorHyper | None = None, L: int = 4) -> DrawSet:
    """Run the benchmark SV-VAR sampler and collect retained draws."""
    priors = priors or PriorHyper()
    y_init, y = _prepare_panel(panel, L)
    p = y.shape[1]
    n = y.shape[0]
    s2 = _default_s2(priors, np.vstack([y_init, y]), L)
    state = LsvvarState(
        priors=priors, L=L, y=y, y_init=y_init,
        X_lag=lagged_design(np.vstack([y_init, y]), L),
        B0=np.eye(p), b=np.zeros(p), Bbar=np.zeros((p, p * L)),
        mu=np.log(np.maximum(y.var(axis=0), 1e-4)), phi=np.full(p, 0.9),
        sigma2=np.full(p, 0.05),
        h=np.repeat(np.log(np.maximum(y.var(axis=0), 1e-4))[None], n, axis=0),
        pi1=priors.minnesota_pi1, pi2=priors.minnesota_pi2, s2=s2,
    )
    rng = np.random.default_rng(chain.seed)
    D = chain.n_retained
    arrays = {
        "B0": np.empty((D, p, p)), "b": np.empty((D, p)), "Bbar": np.empty((D, p, p * L)),
        "mu": np.empty((D, p)), "phi": np.empty((D, p)), "sigma2": np.empty((D, p)),
        "pi1": np.empty(D), "pi2": np.empty(D),
    }
    if chain.store_latents in ("last", "full"):
        arrays["h_last"] = np.empty((D, p))
    if chain.store_latents == "full":
        arrays["h_paths"] = np.empty((D, n, p))
    for it in range(chain.n_burnin + chain.n_draws):
        lsvvar_sweep(state, rng)
        j = it - chain.n_burnin + 1
        if j >= 1 and j % chain.thin == 0:
            d = j // chain.thin - 1
            if d < D:
                arrays["B0"][d] = state.B0
                arrays["b"][d] = state.b
                arrays["Bbar"][d] = state.Bbar
                arrays["mu"][d] = state.mu
                arrays["phi"][d] = state.phi
                arrays["sigma2"][d] = state.sigma2
                arrays["pi1"][d] = state.pi1
                arrays["pi2"][d] = state.pi2
                if chain.store_latents in ("last", "full"):
                    arrays["h_last"][d] = state.h[-1]
                if chain.store_latents == "full":
                    arrays["h_paths"][d] = state.h
    meta = {"config": {"p": p, "L": L, "benchmark_lsvvar": True}, "chain": chain,
            "priors": priors, "s2": s2, "y_tail": np.vstack([y_init, y])[-L:]}
    return DrawSet(kind="lsvvar", arrays=arrays, n_obs=n, meta=meta)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def inefficiency_factor(trace: np.ndarray) -> float:
    """1 + 2 * sum of sample autocorrelations up to an adaptive cutoff.

    The sum stops at the first lag whose autocorrelation falls below
    2/sqrt(n), capped at n/50.  Interpreted as the factor by which the
    chain's effective sample size is smaller than its length.
    """
    x = np.asarray(trace, dtype=float)
    n = x.shape[0]
    if n < 100:
        raise TooShortTrace(f"need at least 100 points, got {n}")
    x = x - x.mean()
    var = float(x @ x) / n
    if var <= 0.0 or not np.isfinite(var):
        raise DegenerateTrace("trace has zero variance")
    cap = max(1, n // 50)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    fx = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(fx * np.conj(fx), nfft)[: cap + 1].real / n
    rho = acov / acov[0]
    threshold = 2.0 / math.sqrt(n)
    total = 0.0
    for s in range(1, cap + 1):
        total += rho[s]
        if rho[s] < threshold:
            break
    return max(1.0 + 2.0 * total, 0.0)


@dataclass
class PosteriorSummary:
    mean: float
    q025: float
    q975: float
    prob_positive: float
    if_factor: float


def posterior_summary(trace: np.ndarray) -> PosteriorSummary:
    """Mean, central 95% interval (linear-interpolation quantiles),
    posterior positive probability, and inefficiency factor."""
    x = np.asarray(trace, dtype=float)
    if x.size == 0:
        raise EmptyTrace("empty trace")
    q025, q975 = np.percentile(x, [2.5, 97.5])
    try:
        if_factor = inefficiency_factor(x)
    except (TooShortTrace, DegenerateTrace):
        if_factor = float("nan")
    return PosteriorSummary(
        mean=float(x.mean()),
        q025=float(q025),
        q975=float(q975),
        prob_positive=float(np.mean(x > 0.0)),
        if_factor=if_factor,
    )
