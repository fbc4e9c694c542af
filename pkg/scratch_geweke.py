"""Scratch Geweke run (not part of the deliverable)."""
import time

import numpy as np
from scipy.stats import ks_2samp

from dfsvm.mcmc import ChainState, gibbs_sweep, sample_prior_params, simulate_obs_given_latents
from dfsvm.model import InMean, Leverage, ModelConfig, PriorHyper, simulate_model, config_for

P, Q, L, N = 2, 1, 1, 20
config = config_for("DFSVML", p=P, q=Q, L=L)
priors = PriorHyper(
    sample_shrinkage=False, minnesota_pi1=0.2, minnesota_pi2=0.5,
    s2=np.ones(P), v_beta2=0.25, s_gamma=0.25, v_mu2=0.25,
    sigma_shape=5.0, sigma_scale=0.5,
)
S2 = np.ones(P)


def functionals(params, f, h, y, pi1, pi2):
    return np.array([
        params.beta[0], params.gamma[0], params.psi[0], params.B[0, 0],
        params.Bbar[0, 0], params.mu[0], params.phi[0], params.sigma2[0],
        params.rho[P], h.mean(), f.mean(), np.mean(y[:, 0] ** 2),
    ])


NAMES = ["beta0", "gamma0", "psi0", "B00", "Bbar00", "mu0", "phi0", "sigma2_0",
         "rho_fac", "mean_h", "mean_f", "mean_y0sq"]


def marginal_conditional(n_samp, seed):
    rng = np.random.default_rng(seed)
    out = np.empty((n_samp, len(NAMES)))
    for i in range(n_samp):
        params, pi1, pi2 = sample_prior_params(config, priors, rng, S2)
        y, lat = simulate_model(config, params, N, rng)
        out[i] = functionals(params, lat.f, lat.h, y, pi1, pi2)
    return out


def successive_conditional(n_sweeps, thin, seed):
    rng = np.random.default_rng(seed)
    params, pi1, pi2 = sample_prior_params(config, priors, rng, S2)
    y, lat = simulate_model(config, params, N, rng)
    state = ChainState(config=config, priors=priors, y=y, y_init=np.zeros((L, P)),
                       params=params, f=lat.f, h=lat.h, pi1=pi1, pi2=pi2, s2=S2)
    out = np.empty((n_sweeps // thin, len(NAMES)))
    kept = 0
    for s in range(n_sweeps):
        gibbs_sweep(state, rng)
        state.y = simulate_obs_given_latents(state, rng)
        state.rebuild_lags()
        if (s + 1) % thin == 0:
            out[kept] = functionals(state.params, state.f, state.h, state.y, state.pi1, state.pi2)
            kept += 1
    return out[:kept]


if __name__ == "__main__":
    import sys
    n_mc = int(sys.argv[1]) if len(sys.argv) > 1 else 4000
    n_sweep = int(sys.argv[2]) if len(sys.argv) > 2 else 20000
    thin = int(sys.argv[3]) if len(sys.argv) > 3 else 4
    t0 = time.perf_counter()
    mc = marginal_conditional(n_mc, 11)
    t1 = time.perf_counter()
    sc = successive_conditional(n_sweep, thin, 22)
    t2 = time.perf_counter()
    print(f"MC {t1-t0:.1f}s  SC {t2-t1:.1f}s ({(t2-t1)/n_sweep*1e3:.2f} ms/sweep)")
    print(f"{'func':>10} {'ks_p':>8} {'mc_mean':>9} {'sc_mean':>9} {'mc_sd':>8} {'sc_sd':>8}")
    for j, nm in enumerate(NAMES):
        ks = ks_2samp(mc[:, j], sc[:, j])
        print(f"{nm:>10} {ks.pvalue:8.4f} {mc[:, j].mean():9.4f} {sc[:, j].mean():9.4f} "
              f"{mc[:, j].std():8.4f} {sc[:, j].std():8.4f}")
