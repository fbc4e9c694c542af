"""Posterior predictive distributions and the expanding-window backtest.

Multi-step forecasts condition on a simulated future log-volatility path;
given that path the model is a linear VAR(1) in the stacked vector
(y_t', ..., y_{t-L+1}', f_{t+1}')', so predictive moments come from an exact
forward recursion instead of simulating future factors.  Moments are then
averaged over posterior draws (and their volatility paths): point forecasts
are the mixture mean and the predictive density at a realization is the
mixture of per-draw normal densities.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .data_io import Panel, Quarter, WindowPlan, standardize_panel
from .errors import DimensionMismatch, NoDraws
from .mcmc import ChainConfig, DrawSet, run_chain, run_lsvvar_chain
from .model import InMean, LsvvarParams, ModelConfig, Params, PriorHyper

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class CompanionSystem:
    """One step of the stacked VAR(1): z_s = intercept + A z_{s-1} + noise,
    noise ~ N(0, noise_cov)."""

    intercept: np.ndarray
    A: np.ndarray
    noise_cov: np.ndarray

    @property
    def dim(self) -> int:
        return self.A.shape[0]


def simulate_volatility_path(h_n: np.ndarray, params, k: int, rng: np.random.Generator) -> np.ndarray:
    """Iterate the log-volatility AR(1) k steps past its current state.

    Fresh independent innovations are used; the in-sample leverage
    correlation does not enter because future mean innovations are
    integrated out analytically by the companion recursion.
    """
    if k < 1:
        raise ValueError("need k >= 1")
    h_n = np.asarray(h_n, dtype=float)
    mu, phi = np.asarray(params.mu, dtype=float), np.asarray(params.phi, dtype=float)
    sigma = np.sqrt(np.asarray(params.sigma2, dtype=float))
    out = np.empty((k, h_n.shape[0]))
    prev = h_n
    for s in range(k):
        prev = mu + phi * (prev - mu) + sigma * rng.standard_normal(h_n.shape[0])
        out[s] = prev
    return out


def build_companion(params: Params, h_now: np.ndarray, h_next: np.ndarray,
                    in_mean: InMean = InMean.NONE) -> CompanionSystem:
    """Companion step producing (y_s, ..., f_{s+1}) from (y_{s-1}, ..., f_s).

    `h_now` is the log-volatility row at the produced time s (driving the
    observation noise V_1s and the in-mean offset), `h_next` the row at s+1
    (driving the factor-innovation block V_{2,s+1}).
    """
    p, q = params.B.shape
    L = params.Bbar.shape[1] // p
    if h_now.shape != (p + q,) or h_next.shape != (p + q,):
        raise DimensionMismatch("log-volatility rows must have length p+q")
    dim = p * L + q
    A = np.zeros((dim, dim))
    A[:p, : p * L] = params.Bbar
    A[:p, p * L :] = params.B
    if L > 1:
        A[p : p * L, : p * (L - 1)] = np.eye(p * (L - 1))
    if q:
        A[p * L :, p * L :] = np.diag(params.psi)
    intercept = np.zeros(dim)
    if in_mean is InMean.OBSERVATION:
        intercept[:p] = np.exp(h_now[:p] / 2.0) * params.beta
    if q:
        intercept[p * L :] = (1.0 - params.psi) * params.gamma
        if in_mean is InMean.FACTOR:
            intercept[p * L :] += np.exp(h_next[p:] / 2.0) * params.beta
    noise = np.zeros((dim, dim))
    noise[np.arange(p), np.arange(p)] = np.exp(h_now[:p])
    if q:
        idx = p * L + np.arange(q)
        noise[idx, idx] = np.exp(h_next[p:])
    return CompanionSystem(intercept=intercept, A=A, noise_cov=noise)


def build_lsvvar_companion(params: LsvvarParams, h_now: np.ndarray) -> CompanionSystem:
    """Companion step for the benchmark model (state is the lag stack)."""
    p = params.b.shape[0]
    L = params.Bbar.shape[1] // p
    dim = p * L
    B0_inv = np.linalg.inv(params.B0)
    A = np.zeros((dim, dim))
    A[:p] = B0_inv @ params.Bbar
    if L > 1:
        A[p:, : p * (L - 1)] = np.eye(p * (L - 1))
    intercept = np.zeros(dim)
    intercept[:p] = B0_inv @ params.b
    noise = np.zeros((dim, dim))
    noise[:p, :p] = B0_inv @ np.diag(np.exp(h_now)) @ B0_inv.T
    return CompanionSystem(intercept=intercept, A=A, noise_cov=noise)


def predictive_moments(z_mean: np.ndarray, companions: list[CompanionSystem],
                       z_cov: np.ndarray | None = None,
                       obs_dim: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the observation block (leading `obs_dim`
    coordinates) after iterating the supplied companion steps, the
    volatility path held fixed."""
    means, covs = predictive_moment_path(z_mean, companions, z_cov, obs_dim)
    return means[-1], covs[-1]


def predictive_moment_path(z_mean: np.ndarray, companions: list[CompanionSystem],
                           z_cov: np.ndarray | None = None,
                           obs_dim: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Observation-block moments after each companion step.

    The state starts at `z_mean` with covariance `z_cov` (zero when omitted)
    and iterates m -> intercept + A m, P -> A P A' + noise.  Returns
    (means (k, obs_dim), covs (k, obs_dim, obs_dim)).
    """
    m = np.asarray(z_mean, dtype=float)
    dim = m.shape[0]
    P = np.zeros((dim, dim)) if z_cov is None else np.asarray(z_cov, dtype=float)
    p = dim if obs_dim is None else obs_dim
    means = np.empty((len(companions), p))
    covs = np.empty((len(companions), p, p))
    for s, comp in enumerate(companions):
        m = comp.intercept + comp.A @ m
        P = comp.A @ P @ comp.A.T + comp.noise_cov
        means[s] = m[:p]
        covs[s] = P[:p, :p]
    return means, covs


def _initial_state_factor(params: Params, y_tail: np.ndarray, f_last: np.ndarray,
                          h_next: np.ndarray, in_mean: InMean) -> tuple[np.ndarray, np.ndarray]:
    """Mean/cov of (y_t, ..., y_{t-L+1}, f_{t+1}) given the draw and h_{t+1}."""
    p, q = params.B.shape
    L = params.Bbar.shape[1] // p
    dim = p * L + q
    m = np.zeros(dim)
    for ell in range(L):
        m[ell * p : (ell + 1) * p] = y_tail[-1 - ell]
    f_mean = params.gamma + params.psi * (f_last - params.gamma)
    if in_mean is InMean.FACTOR:
        f_mean = f_mean + np.exp(h_next[p:] / 2.0) * params.beta
    m[p * L :] = f_mean
    P = np.zeros((dim, dim))
    idx = p * L + np.arange(q)
    P[idx, idx] = np.exp(h_next[p:])
    return m, P


def posterior_predictive(
    draws: DrawSet,
    data: np.ndarray,
    k: int,
    rng: np.random.Generator,
    realizations: np.ndarray | None = None,
    n_vol_paths: int = 1,
    standardization: tuple[np.ndarray, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Predictive moments, point forecasts, and log predictive densities.

    `data` is the (standardized) sample the chain was fit on; its last rows
    provide the lag state.  Each retained draw contributes `n_vol_paths`
    simulated volatility paths with analytically computed conditional
    moments.  When `standardization` (means, sds) is given, point forecasts
    and density evaluations are mapped back to pre-standardization units;
    `realizations` (k, p) are expected in those units.

    Returns a dict with "point" (k, p) and, when realizations are given,
    "log_density" and "sq_error" (k, p).
    """
    if draws.n_draws == 0:
        raise NoDraws("empty draw set")
    data = np.asarray(data, dtype=float)
    kind = draws.kind
    p = data.shape[1]
    D = draws.n_draws
    R = max(1, n_vol_paths)
    means = np.empty((D * R, k, p))
    variances = np.empty((D * R, k, p))
    for d in range(D):
        params = draws.params_at(d)
        h_last = draws.arrays["h_last"][d]
        for r in range(R):
            row = d * R + r
            if kind == "factor":
                in_mean = draws.meta["config"].in_mean
                L = draws.meta["config"].L
                hpath = simulate_volatility_path(h_last, params, k + 1, rng)
                comps = [
                    build_companion(params, hpath[s], hpath[s + 1], in_mean)
                    for s in range(k)
                ]
                z0, P0 = _initial_state_factor(
                    params, data[-L:], draws.arrays["f_last"][d], hpath[0], in_mean
                )
            else:
                L = draws.meta["config"]["L"]
                hpath = simulate_volatility_path(h_last, params, k, rng)
                comps = [build_lsvvar_companion(params, hpath[s]) for s in range(k)]
                z0 = np.concatenate([data[-1 - ell] for ell in range(L)])
                P0 = None
            mpath, cpath = predictive_moment_path(z0, comps, P0, obs_dim=p)
            means[row] = mpath
            variances[row] = np.einsum("sii->si", cpath)

    if standardization is not None:
        smean, ssd = standardization
        means = means * ssd + smean
        variances = variances * ssd**2

    out = {"point": means.mean(axis=0)}
    if realizations is not None:
        realizations = np.asarray(realizations, dtype=float)
        if realizations.shape != (k, p):
            raise DimensionMismatch(f"realizations must have shape {(k, p)}")
        logpdf = (
            -0.5 * (_LOG_2PI + np.log(variances))
            - (realizations[None] - means) ** 2 / (2.0 * variances)
        )
        out["log_density"] = logsumexp(logpdf, axis=0) - np.log(D * R)
        out["sq_error"] = (out["point"] - realizations) ** 2
    return out


@dataclass
class ForecastResult:
    """Tidy per-(origin, horizon, variable) forecast scores."""

    table: pd.DataFrame

    COLUMNS = ("origin", "horizon", "variable", "point", "realized", "sq_error", "log_pred_density")

    def __post_init__(self):
        missing = [c for c in self.COLUMNS if c not in self.table.columns]
        if missing:
            raise ValueError(f"forecast table missing columns {missing}")
        bad = ~np.isfinite(self.table[["point", "realized", "sq_error", "log_pred_density"]].to_numpy())
        if bad.any():
            raise ValueError("forecast table contains non-finite entries")

    def to_csv(self, path) -> None:
        self.table.to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path) -> "ForecastResult":
        return cls(pd.read_csv(path))

    def losses(self, variable: str, horizon: int) -> pd.DataFrame:
        t = self.table
        sel = t[(t["variable"] == variable) & (t["horizon"] == horizon)]
        return sel.sort_values("origin")


def _fit_window(config: ModelConfig, chain: ChainConfig, window: Panel, priors: PriorHyper) -> DrawSet:
    if config.benchmark_lsvvar:
        return run_lsvvar_chain(chain, window, priors, L=config.L)
    return run_chain(config, chain, window, priors)


def _backtest_window(args) -> list[dict]:
    config, chain, priors, panel, plan, oi, n_vol_paths = args
    origin = plan.origins[oi]
    i_origin = next(i for i, t in enumerate(panel.times) if t == origin)
    window = Panel(
        names=panel.names,
        times=panel.times[: i_origin + 1],
        values=panel.values[: i_origin + 1],
        transform=panel.transform,
    )
    std = standardize_panel(window)
    seed = np.random.SeedSequence(entropy=chain.seed, spawn_key=(oi,))
    fit = _fit_window(config, replace(chain, seed=seed), std, priors)
    horizons = plan.horizons_for(origin)
    k = max(horizons)
    realized = panel.values[i_origin + 1 : i_origin + 1 + k]
    pred_rng = np.random.default_rng(np.random.SeedSequence(entropy=chain.seed, spawn_key=(oi, 1)))
    res = posterior_predictive(
        fit, std.values, k, pred_rng,
        realizations=realized, n_vol_paths=n_vol_paths,
        standardization=std.standardization,
    )
    records = []
    for hz in horizons:
        for j, name in enumerate(panel.names):
            records.append({
                "origin": str(origin),
                "horizon": hz,
                "variable": name,
                "point": res["point"][hz - 1, j],
                "realized": realized[hz - 1, j],
                "sq_error": res["sq_error"][hz - 1, j],
                "log_pred_density": res["log_density"][hz - 1, j],
            })
    return records


def run_backtest(
    config: ModelConfig,
    chain: ChainConfig,
    panel: Panel,
    plan: WindowPlan,
    priors: PriorHyper | None = None,
    n_vol_paths: int = 1,
    threads: int = 1,
) -> ForecastResult:
    """Expanding-window backtest: refit, forecast, and score at each origin.

    The panel must already be transformed to the units being modeled but NOT
    standardized: each window is standardized on its own data, and forecasts
    are mapped back before scoring, so losses are in the panel's units.
    Windows are independent given their spawned seeds, so results do not
    depend on `threads`.
    """
    priors = priors or PriorHyper()
    jobs = [
        (config, chain, priors, panel, plan, oi, n_vol_paths)
        for oi in range(len(plan.origins))
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_backtest_window, jobs))
    else:
        chunks = [_backtest_window(j) for j in jobs]
    records = [rec for chunk in chunks for rec in chunk]
    return ForecastResult(pd.DataFrame.from_records(records, columns=list(ForecastResult.COLUMNS)))
