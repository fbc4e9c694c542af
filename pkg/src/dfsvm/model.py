"""Model family definition, parameters, priors, and deterministic model algebra.

The observed p-vector y_t loads on a q-dimensional latent AR(1) factor f_t and
its own lags; every mean innovation and every factor innovation carries its
own stochastic log-volatility h_it following an AR(1).  The volatility's
standard deviation exp(h/2) can enter the conditional mean (in-mean effect),
and mean/volatility innovation pairs can be correlated (leverage).  The same
module provides a synthetic-data simulator and the joint posterior kernel.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import betaln, gammaln

from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    NonFiniteDensity,
    NonStationaryParams,
)


class InMean(enum.Enum):
    """Where exp(h/2) enters the conditional mean, if anywhere."""

    NONE = "none"
    OBSERVATION = "observation"
    FACTOR = "factor"


class Leverage(enum.Enum):
    """Which series have a free mean/volatility innovation correlation."""

    NONE = "none"
    FACTORS_ONLY = "factors_only"
    ALL = "all"


@dataclass(frozen=True)
class ModelConfig:
    """Model-family switch: dimensions plus the variant toggles.

    `factor_dynamics=False` pins the factor AR matrix at zero (static factor
    model); `benchmark_lsvvar` selects the separate large SV-VAR benchmark,
    which has no factor structure at all.
    """

    p: int
    q: int
    L: int
    factor_dynamics: bool = True
    in_mean: InMean = InMean.NONE
    leverage: Leverage = Leverage.NONE
    benchmark_lsvvar: bool = False

    def __post_init__(self):
        if self.benchmark_lsvvar:
            if self.q != 0 or self.factor_dynamics or self.in_mean is not InMean.NONE \
                    or self.leverage is not Leverage.NONE:
                raise ValueError("benchmark_lsvvar excludes factor/in-mean/leverage settings")
            if self.p < 1 or self.L < 1:
                raise ValueError("need p >= 1 and L >= 1")
            return
        if not (1 <= self.q < self.p):
            raise ValueError(f"need 1 <= q < p, got q={self.q}, p={self.p}")
        if self.L < 1:
            raise ValueError("need L >= 1")

    @property
    def n_vol(self) -> int:
        return self.p + self.q

    @property
    def beta_len(self) -> int:
        if self.in_mean is InMean.OBSERVATION:
            return self.p
        if self.in_mean is InMean.FACTOR:
            return self.q
        return 0

    def leverage_free(self) -> np.ndarray:
        """Boolean mask over the p+q volatility series: rho_i free vs fixed 0."""
        free = np.zeros(self.n_vol, dtype=bool)
        if self.leverage is Leverage.ALL:
            free[:] = True
        elif self.leverage is Leverage.FACTORS_ONLY:
            free[self.p :] = True
        return free


_GRID = {
    # name: (factor_dynamics, in_mean, leverage)
    "DFSV": (True, InMean.NONE, Leverage.NONE),
    "DFSVL": (True, InMean.NONE, Leverage.FACTORS_ONLY),
    "DFSVM": (True, InMean.OBSERVATION, Leverage.NONE),
    "DFSVML": (True, InMean.OBSERVATION, Leverage.FACTORS_ONLY),
    "FSV": (False, InMean.NONE, Leverage.NONE),
    "FSVL": (False, InMean.NONE, Leverage.FACTORS_ONLY),
    "FSVM": (False, InMean.OBSERVATION, Leverage.NONE),
    "FSVML": (False, InMean.OBSERVATION, Leverage.FACTORS_ONLY),
}


def config_for(name: str, p: int, q: int, L: int) -> ModelConfig:
    """ModelConfig for one of the named variants (model grid or LSVVAR).

    The leverage toggle of the *L variants frees only the factor-equation
    correlations; idiosyncratic leverage stays pinned at zero.  Full leverage
    is available by constructing ModelConfig directly.
    """
    if name.upper() == "LSVVAR":
        return ModelConfig(p=p, q=0, L=L, factor_dynamics=False, benchmark_lsvvar=True)
    try:
        dyn, in_mean, lev = _GRID[name.upper()]
    except KeyError:
        raise ValueError(f"unknown model name {name!r}; expected one of {sorted(_GRID)} or LSVVAR")
    return ModelConfig(p=p, q=q, L=L, factor_dynamics=dyn, in_mean=in_mean, leverage=lev)


@dataclass
class Params:
    """One point in parameter space for the factor models.

    Shapes: Bbar (p, p*L) stacking (B_1 .. B_L); B (p, q); gamma (q,);
    psi (q,); beta (beta_len,); mu, phi, sigma2, rho all (p+q,).
    Factor-volatility means mu[p:] are identically zero (identification).
    """

    Bbar: np.ndarray
    B: np.ndarray
    gamma: np.ndarray
    psi: np.ndarray
    beta: np.ndarray
    mu: np.ndarray
    phi: np.ndarray
    sigma2: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        for name in ("Bbar", "B", "gamma", "psi", "beta", "mu", "phi", "sigma2", "rho"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    def validate(self, config: ModelConfig, allow_degenerate_sigma: bool = False) -> None:
        p, q, L = config.p, config.q, config.L
        if self.Bbar.shape != (p, p * L) or self.B.shape != (p, q):
            raise DimensionMismatch("Bbar/B shapes inconsistent with config")
        for name, size in (("gamma", q), ("psi", q), ("beta", config.beta_len)):
            if getattr(self, name).shape != (size,):
                raise DimensionMismatch(f"{name} must have length {size}")
        for name in ("mu", "phi", "sigma2", "rho"):
            if getattr(self, name).shape != (config.n_vol,):
                raise DimensionMismatch(f"{name} must have length {config.n_vol}")
        if np.any(np.abs(self.phi) >= 1.0) or np.any(np.abs(self.psi) >= 1.0):
            raise NonStationaryParams("phi and psi must lie strictly inside (-1, 1)")
        low = 0.0 if allow_degenerate_sigma else np.nextafter(0.0, 1.0)
        if np.any(self.sigma2 < low):
            raise ValueError("sigma2 must be positive")
        if np.any(np.abs(self.rho) >= 1.0):
            raise ValueError("rho must lie strictly inside (-1, 1)")
        if q and np.any(self.mu[p:] != 0.0):
            raise ValueError("factor log-volatility means must be exactly 0")
        free = config.leverage_free()
        if np.any(self.rho[~free] != 0.0):
            raise ValueError("rho must be 0 where leverage is disabled")
        if not config.factor_dynamics and np.any(self.psi != 0.0):
            raise ValueError("psi must be 0 when factor dynamics are disabled")
        if config.in_mean is InMean.NONE and self.beta.size:
            raise DimensionMismatch("beta must be empty when in_mean is disabled")

    def lag_blocks(self) -> list[np.ndarray]:
        """[B_1, ..., B_L] split out of the stacked coefficient matrix."""
        p = self.Bbar.shape[0]
        L = self.Bbar.shape[1] // p
        return [self.Bbar[:, ell * p : (ell + 1) * p] for ell in range(L)]

    def to_dict(self) -> dict:
        return {
            "Bbar": self.Bbar.tolist(),
            "B": self.B.tolist(),
            "gamma": self.gamma.tolist(),
            "Psi": self.psi.tolist(),
            "beta": self.beta.tolist(),
            "mu": self.mu.tolist(),
            "Phi": self.phi.tolist(),
            "Sigma": self.sigma2.tolist(),
            "rho": self.rho.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Params":
        return cls(
            Bbar=np.asarray(d["Bbar"], dtype=float),
            B=np.asarray(d["B"], dtype=float),
            gamma=np.asarray(d["gamma"], dtype=float),
            psi=np.asarray(d["Psi"], dtype=float),
            beta=np.asarray(d["beta"], dtype=float),
            mu=np.asarray(d["mu"], dtype=float),
            phi=np.asarray(d["Phi"], dtype=float),
            sigma2=np.asarray(d["Sigma"], dtype=float),
            rho=np.asarray(d["rho"], dtype=float),
        )


@dataclass
class LatentPaths:
    """One draw of the latent factor path (n, q) and log-volatility path (n, p+q)."""

    f: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.h = np.asarray(self.h, dtype=float)

    def validate(self, config: ModelConfig, n: int) -> None:
        if self.f.shape != (n, config.q) or self.h.shape != (n, config.n_vol):
            raise DimensionMismatch(
                f"latents must be f {(n, config.q)}, h {(n, config.n_vol)}; "
                f"got {self.f.shape}, {self.h.shape}"
            )


@dataclass
class LsvvarParams:
    """Benchmark large SV-VAR: unit-lower-triangular contemporaneous matrix B0,
    intercept b, stacked lags Bbar, and one independent SV block per equation."""

    B0: np.ndarray
    b: np.ndarray
    Bbar: np.ndarray
    mu: np.ndarray
    phi: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        for name in ("B0", "b", "Bbar", "mu", "phi", "sigma2"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    def validate(self) -> None:
        p = self.b.shape[0]
        if self.B0.shape != (p, p) or not np.allclose(np.diag(self.B0), 1.0):
            raise ValueError("B0 must be p x p with unit diagonal")
        if np.any(np.triu(self.B0, 1) != 0.0):
            raise ValueError("B0 must be lower triangular")
        if np.any(np.abs(self.phi) >= 1.0):
            raise NonStationaryParams("phi must lie strictly inside (-1, 1)")
        if np.any(self.sigma2 <= 0.0):
            raise ValueError("sigma2 must be positive")

    def to_dict(self) -> dict:
        return {
            "B0": self.B0.tolist(),
            "b": self.b.tolist(),
            "Bbar": self.Bbar.tolist(),
            "mu": self.mu.tolist(),
            "Phi": self.phi.tolist(),
            "Sigma": self.sigma2.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LsvvarParams":
        return cls(
            B0=np.asarray(d["B0"], dtype=float),
            b=np.asarray(d["b"], dtype=float),
            Bbar=np.asarray(d["Bbar"], dtype=float),
            mu=np.asarray(d["mu"], dtype=float),
            phi=np.asarray(d["Phi"], dtype=float),
            sigma2=np.asarray(d["Sigma"], dtype=float),
        )


@dataclass
class PriorHyper:
    """Prior hyperparameters with the defaults used throughout.

    Beta priors act on (x+1)/2 so they cover (-1, 1); the inverse gamma is
    parameterized so its density is proportional to x^{-shape-1} exp(-scale/x).
    `s2` holds the per-series AR(L) residual variances that scale the
    cross-variable shrinkage; when None it is estimated from the data at
    chain setup.
    """

    minnesota_pi1: float = 0.04
    minnesota_pi2: float = 0.5
    sample_shrinkage: bool = True
    s2: np.ndarray | None = None
    m_beta: float = 0.0
    v_beta2: float = 0.25
    loading_var: float = 1.0
    m_gamma: float = 0.0
    s_gamma: float = 100.0
    a_psi: float = 1.0
    b_psi: float = 1.0
    m_mu: float = 0.0
    v_mu2: float = 100.0
    sigma_shape: float = 0.005
    sigma_scale: float = 0.005
    a_phi: float = 20.0
    b_phi: float = 1.5
    b0_var: float = 100.0
    intercept_var: float = 100.0


# ---------------------------------------------------------------------------
# deterministic model algebra
# ---------------------------------------------------------------------------

def lambda_matrix(h_row: np.ndarray) -> np.ndarray:
    """Diagonal matrix of volatility standard deviations exp(h_i / 2).

    This is the in-mean regressor block: the mean effect is scaled by the
    standard deviation, not the variance, to match the outcome's units.
    """
    h_row = np.asarray(h_row, dtype=float)
    return np.diag(np.exp(h_row / 2.0))


def volatility_matrices(h_row: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """(V1, V2) diagonal covariance blocks from one log-volatility row."""
    h_row = np.asarray(h_row, dtype=float)
    return np.diag(np.exp(h_row[:p])), np.diag(np.exp(h_row[p:]))


def leverage_adjusted_moments(
    h_series: np.ndarray,
    mu_i: float,
    phi_i: float,
    sigma2_i: float,
    rho_i: float,
    t: int,
) -> tuple[float, float]:
    """Mean shift and variance of a series' scaled mean innovation at time t.

    Conditioning the mean innovation on the volatility innovation gives

        mu_it     = exp(h_it/2) rho_i sigma_i^{-1} (h_{i,t+1} - mu_i - phi_i (h_it - mu_i))
        sigma2_it = exp(h_it) (1 - rho_i^2)

    for t < n, and (0, exp(h_in)) at the final period where no volatility
    innovation is observed.  `t` is 1-based.
    """
    h_series = np.asarray(h_series, dtype=float)
    n = h_series.shape[0]
    if not 1 <= t <= n:
        raise IndexOutOfRange(f"t must be in 1..{n}, got {t}")
    h_t = h_series[t - 1]
    if t == n:
        return 0.0, float(np.exp(h_t))
    resid = h_series[t] - mu_i - phi_i * (h_t - mu_i)
    mu_it = math.exp(h_t / 2.0) * rho_i * resid / math.sqrt(sigma2_i)
    return float(mu_it), float(math.exp(h_t) * (1.0 - rho_i**2))


def leverage_offset_matrices(h: np.ndarray, mu, phi, sigma2, rho) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized leverage-adjusted moments over a whole (n, p+q) path.

    Returns (mean shifts, variances), each (n, p+q); row n carries zero shift
    and unadjusted variance.
    """
    h = np.asarray(h, dtype=float)
    mu, phi, sigma2, rho = (np.asarray(x, dtype=float) for x in (mu, phi, sigma2, rho))
    n = h.shape[0]
    shift = np.zeros_like(h)
    if n > 1:
        resid = h[1:] - mu - phi * (h[:-1] - mu)
        shift[:-1] = np.exp(h[:-1] / 2.0) * rho / np.sqrt(sigma2) * resid
    var = np.exp(h) * (1.0 - rho**2)
    var[-1] = np.exp(h[-1])
    return shift, var


def lagged_design(y_full: np.ndarray, L: int) -> np.ndarray:
    """Stacked lag regressors (y_{t-1}', ..., y_{t-L}')' for each row of the
    last n-L rows of `y_full` (the first L rows serve as the presample)."""
    n_full, p = y_full.shape
    n = n_full - L
    if n < 1:
        raise DimensionMismatch("sample too short for the lag order")
    cols = [y_full[L - ell : n_full - ell] for ell in range(1, L + 1)]
    return np.concatenate(cols, axis=1)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def simulate_model(
    config: ModelConfig,
    params: Params,
    n: int,
    seed,
    y_init: np.ndarray | None = None,
) -> tuple[np.ndarray, LatentPaths]:
    """Simulate n observations from the model.

    Initial log-volatilities are drawn from their stationary laws, the factor
    starts at its mean, and the presample `y_init` ((L, p), oldest row first)
    defaults to zeros, which is the natural choice for standardized data.
    The mean/volatility innovation pair is drawn through the conditional
    factorization eta | eps ~ N(rho sigma eps, sigma^2 (1 - rho^2)).
    """
    params.validate(config, allow_degenerate_sigma=True)
    if n <= config.L:
        raise ValueError("need n > L")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p, q, L = config.p, config.q, config.L
    if y_init is None:
        y_init = np.zeros((L, p))
    y_init = np.asarray(y_init, dtype=float)
    if y_init.shape != (L, p):
        raise DimensionMismatch(f"y_init must have shape {(L, p)}")

    mu, phi, sigma2, rho = params.mu, params.phi, params.sigma2, params.rho
    sigma = np.sqrt(sigma2)
    h = np.zeros((n, p + q))
    f = np.zeros((n, q))
    y = np.zeros((n, p))
    with np.errstate(divide="ignore", invalid="ignore"):
        stat_sd = np.where(sigma2 > 0.0, np.sqrt(sigma2 / (1.0 - phi**2)), 0.0)
    h[0] = mu + stat_sd * rng.standard_normal(p + q)

    lag_buf = list(y_init)  # oldest first; len L
    f_prev = params.gamma.copy()
    for t in range(n):
        eps = rng.standard_normal(p + q)
        v1h = np.exp(h[t, :p] / 2.0)
        v2h = np.exp(h[t, p:] / 2.0)
        f[t] = params.gamma + params.psi * (f_prev - params.gamma) + v2h * eps[p:]
        if config.in_mean is InMean.FACTOR:
            f[t] += v2h * params.beta
        x_lag = np.concatenate(lag_buf[::-1]) if L else np.zeros(0)
        y[t] = params.Bbar @ x_lag + params.B @ f[t] + v1h * eps[:p]
        if config.in_mean is InMean.OBSERVATION:
            y[t] += v1h * params.beta
        z = rng.standard_normal(p + q)
        if t < n - 1:
            eta = rho * sigma * eps + sigma * np.sqrt(1.0 - rho**2) * z
            h[t + 1] = mu + phi * (h[t] - mu) + eta
        lag_buf.pop(0)
        lag_buf.append(y[t])
        f_prev = f[t]
    return y, LatentPaths(f=f, h=h)


def simulate_lsvvar(params: LsvvarParams, L: int, n: int, seed, y_init=None) -> tuple[np.ndarray, np.ndarray]:
    """Simulate from the benchmark SV-VAR; returns (y (n,p), h (n,p))."""
    params.validate()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = params.b.shape[0]
    if y_init is None:
        y_init = np.zeros((L, p))
    y_init = np.asarray(y_init, dtype=float)
    B0_inv = np.linalg.inv(params.B0)
    h = np.zeros((n, p))
    y = np.zeros((n, p))
    h[0] = params.mu + np.sqrt(params.sigma2 / (1.0 - params.phi**2)) * rng.standard_normal(p)
    lag_buf = list(y_init)
    for t in range(n):
        x_lag = np.concatenate(lag_buf[::-1])
        eps = np.exp(h[t] / 2.0) * rng.standard_normal(p)
        y[t] = B0_inv @ (params.b + params.Bbar @ x_lag + eps)
        if t < n - 1:
            h[t + 1] = params.mu + params.phi * (h[t] - params.mu) \
                + np.sqrt(params.sigma2) * rng.standard_normal(p)
        lag_buf.pop(0)
        lag_buf.append(y[t])
    return y, h


# ---------------------------------------------------------------------------
# joint posterior kernel
# ---------------------------------------------------------------------------

_LOG_2PI = math.log(2.0 * math.pi)


def _norm_logpdf(x, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def _beta_transformed_logpdf(x, a, b):
    """log density of x on (-1,1) when (x+1)/2 ~ Beta(a, b)."""
    u = (np.asarray(x, dtype=float) + 1.0) / 2.0
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        return -np.inf
    return np.sum((a - 1.0) * np.log(u) + (b - 1.0) * np.log1p(-u) - betaln(a, b) - math.log(2.0))


def _invgamma_logpdf(x, shape, scale):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        return -np.inf
    return np.sum(shape * math.log(scale) - gammaln(shape) - (shape + 1.0) * np.log(x) - scale / x)


def residual_matrix(config: ModelConfig, params: Params, latents: LatentPaths, y: np.ndarray, y_init=None) -> np.ndarray:
    """Per-series reduced observations w_it (n, p+q).

    Columns 1..p are observation residuals net of lags and factors; columns
    p+1..p+q are factor innovations net of the factor AR(1) mean (factor
    starts at its own mean).  The in-mean term stays inside the reduced
    univariate model and is NOT subtracted here.
    """
    p, q, L = config.p, config.q, config.L
    n = y.shape[0]
    if y_init is None:
        y_init = np.zeros((L, p))
    y_full = np.vstack([y_init, y])
    X = lagged_design(y_full, L)
    w = np.zeros((n, p + q))
    w[:, :p] = y - X @ params.Bbar.T - latents.f @ params.B.T
    f_lag = np.vstack([params.gamma, latents.f[:-1]])
    w[:, p:] = latents.f - params.gamma - (f_lag - params.gamma) * params.psi
    return w


def log_joint_density(
    config: ModelConfig,
    params: Params,
    latents: LatentPaths,
    y: np.ndarray,
    priors: PriorHyper,
    y_init: np.ndarray | None = None,
) -> float:
    """Log of the unnormalized joint posterior kernel at one point.

    Likelihood of (y, f, h) through the conditional factorization of the
    correlated innovation pairs, the stationary density of the initial
    log-volatilities, and all parameter priors.  Raises if the result is not
    finite for structurally valid input.
    """
    from .mcmc import minnesota_prior_covariance  # avoids a module cycle

    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    params.validate(config)
    latents.validate(config, n)
    if y.shape[1] != config.p:
        raise DimensionMismatch("y has wrong width")
    p, q = config.p, config.q
    h, f = latents.h, latents.f

    w = residual_matrix(config, params, latents, y, y_init)
    beta_full = np.zeros(p + q)
    if config.in_mean is InMean.OBSERVATION:
        beta_full[:p] = params.beta
    elif config.in_mean is InMean.FACTOR:
        beta_full[p:] = params.beta
    eps = w * np.exp(-h / 2.0) - beta_full

    # measurement terms: w_it = exp(h/2) (beta_i + eps_it), eps ~ N(0, 1)
    ll = np.sum(-0.5 * _LOG_2PI - h / 2.0 - eps**2 / 2.0)
    # volatility transitions conditioned on the paired mean innovation
    if n > 1:
        sigma = np.sqrt(params.sigma2)
        cond_mean = params.mu + params.phi * (h[:-1] - params.mu) + params.rho * sigma * eps[:-1]
        cond_var = params.sigma2 * (1.0 - params.rho**2)
        ll += np.sum(_norm_logpdf(h[1:], cond_mean, cond_var))
    # stationary initial states
    ll += np.sum(_norm_logpdf(h[0], params.mu, params.sigma2 / (1.0 - params.phi**2)))

    # priors
    lp = 0.0
    s2 = np.ones(p) if priors.s2 is None else np.asarray(priors.s2, dtype=float)
    minn = minnesota_prior_covariance(priors.minnesota_pi1, priors.minnesota_pi2, s2, p, config.L)
    lp += np.sum(_norm_logpdf(params.Bbar, 0.0, minn))
    lp += np.sum(_norm_logpdf(params.B, 0.0, priors.loading_var))
    lp += np.sum(_norm_logpdf(params.gamma, priors.m_gamma, priors.s_gamma))
    if config.factor_dynamics:
        lp += _beta_transformed_logpdf(params.psi, priors.a_psi, priors.b_psi)
    if config.beta_len:
        lp += np.sum(_norm_logpdf(params.beta, priors.m_beta, priors.v_beta2))
    lp += np.sum(_norm_logpdf(params.mu[:p], priors.m_mu, priors.v_mu2))
    lp += _invgamma_logpdf(params.sigma2, priors.sigma_shape, priors.sigma_scale)
    lp += _beta_transformed_logpdf(params.phi, priors.a_phi, priors.b_phi)
    lp += -math.log(2.0) * int(np.sum(config.leverage_free()))  # uniform rho

    total = float(ll + lp)
    if not np.isfinite(total):
        raise NonFiniteDensity("joint kernel is not finite at this point")
    return total
