"""Time-varying linear Gaussian state-space machinery.

The model is

    y_t     = c_t + Z_t a_t + G_t u_t,          t = 1..n
    a_{t+1} = d_t + T_t a_t + H_t u_t,          t = 1..n-1
    a_1 ~ N(a1, P1),   u_t ~ iid N(0, I_r)

with a single shared disturbance vector per period, so the observation and
state noises may be cross-correlated through G_t H_t'.  Provided here:

* `kalman_filter` — exact log-likelihood by prediction-error decomposition
  plus filtered/predicted moments,
* `simulation_smoother_draw` — one exact draw from p(a_{1..n} | y_{1..n})
  via the mean-correction (simulate, then re-center) construction,
* `dense_gaussian_oracle` — a brute-force joint-Gaussian conditioning used
  to verify the two above on small systems.

The per-period recursions are numba-compiled; everything else is numpy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import SingularCovariance, SingularInnovationCovariance, SizeGuardExceeded

_JITTER_REL = 1e-10


@dataclass
class LinearGaussianSS:
    """System matrices, stacked over time.

    Shapes: Z (n,m,k), c (n,m), G (n,m,r), T (n-1,k,k), d (n-1,k),
    H (n-1,k,r), a1 (k,), P1 (k,k).
    """

    Z: np.ndarray
    c: np.ndarray
    G: np.ndarray
    T: np.ndarray
    d: np.ndarray
    H: np.ndarray
    a1: np.ndarray
    P1: np.ndarray

    def __post_init__(self):
        for name in ("Z", "c", "G", "T", "d", "H", "a1", "P1"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=float))
        n, m, k = self.Z.shape
        r = self.G.shape[2]
        if self.c.shape != (n, m) or self.G.shape != (n, m, r):
            raise ValueError("observation matrices inconsistent")
        nt = max(n - 1, 0)
        if self.T.shape != (nt, k, k) or self.d.shape != (nt, k) or self.H.shape != (nt, k, r):
            raise ValueError("transition matrices inconsistent")
        if self.a1.shape != (k,) or self.P1.shape != (k, k):
            raise ValueError("initial state inconsistent")

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def m(self) -> int:
        return self.Z.shape[1]

    @property
    def k(self) -> int:
        return self.Z.shape[2]

    @property
    def r(self) -> int:
        return self.G.shape[2]

    @classmethod
    def time_invariant(cls, Z, c, G, T, d, H, a1, P1, n: int) -> "LinearGaussianSS":
        """Replicate constant system matrices over an n-period horizon."""
        Z, c, G, T, d, H = (np.asarray(x, dtype=float) for x in (Z, c, G, T, d, H))
        nt = max(n - 1, 0)
        return cls(
            Z=np.repeat(Z[None], n, axis=0),
            c=np.repeat(c[None], n, axis=0),
            G=np.repeat(G[None], n, axis=0),
            T=np.repeat(T[None], nt, axis=0),
            d=np.repeat(d[None], nt, axis=0),
            H=np.repeat(H[None], nt, axis=0),
            a1=a1,
            P1=P1,
        )


@dataclass
class FilterResult:
    loglik: float
    filtered_means: np.ndarray
    filtered_covs: np.ndarray
    predicted_means: np.ndarray
    predicted_covs: np.ndarray


@dataclass
class SmootherDraw:
    states: np.ndarray
    loglik: float


@njit(cache=True)
def _chol_lower(A, L):
    """Lower Cholesky of A into L; returns False on non-PD pivot."""
    m = A.shape[0]
    for i in range(m):
        for j in range(i + 1):
            s = A[i, j]
            for t in range(j):
                s -= L[i, t] * L[j, t]
            if i == j:
                if s <= 0.0:
                    return False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
        for j in range(i + 1, m):
            L[i, j] = 0.0
    return True


@njit(cache=True)
def _chol_solve(L, B):
    """B <- (L L')^{-1} B in place for lower-triangular L; B is (m, nb)."""
    m, nb = B.shape
    for col in range(nb):
        for i in range(m):
            s = B[i, col]
            for t in range(i):
                s -= L[i, t] * B[t, col]
            B[i, col] = s / L[i, i]
        for i in range(m - 1, -1, -1):
            s = B[i, col]
            for t in range(i + 1, m):
                s -= L[t, i] * B[t, col]
            B[i, col] = s / L[i, i]


@njit(cache=True)
def _filter_smoother_batch(Z, c, G, T, d, H, a1, P1, Y):
    """Batched filter + state smoother sharing one set of system matrices.

    Y has shape (n, m, B): B observation sets run through identical F_t/K_t.
    Returns (status, logliks, smoothed, filt_m, filt_P, pred_m, pred_P);
    status 1 flags an innovation covariance that stayed non-PD after jitter.
    """
    n, m, k = Z.shape
    rd = G.shape[2]
    B = Y.shape[2]
    logliks = np.zeros(B)
    pred_m = np.zeros((n, k, B))
    pred_P = np.zeros((n, k, k))
    filt_m = np.zeros((n, k, B))
    filt_P = np.zeros((n, k, k))
    smoothed = np.zeros((n, k, B))
    fv_all = np.zeros((n, m, B))
    L_all = np.zeros((n, k, k))
    F = np.zeros((m, m))
    Lc = np.zeros((m, m))
    V = np.zeros((m, B))
    PZt = np.zeros((k, m))
    FiPZ = np.zeros((m, k))
    M = np.zeros((k, m))
    KtT = np.zeros((m, k))
    K = np.zeros((k, m))
    KF = np.zeros((k, m))
    TP = np.zeros((k, k))
    log2pi = np.log(2.0 * np.pi)

    for b in range(B):
        for i in range(k):
            pred_m[0, i, b] = a1[i]
    for i in range(k):
        for j in range(k):
            pred_P[0, i, j] = P1[i, j]

    for t in range(n):
        # PZt = P Z', F = Z P Z' + G G'
        for i in range(k):
            for j in range(m):
                s = 0.0
                for l in range(k):
                    s += pred_P[t, i, l] * Z[t, j, l]
                PZt[i, j] = s
        for i in range(m):
            for j in range(m):
                s = 0.0
                for l in range(k):
                    s += Z[t, i, l] * PZt[l, j]
                for l in range(rd):
                    s += G[t, i, l] * G[t, j, l]
                F[i, j] = s
        ok = _chol_lower(F, Lc)
        if not ok:
            tr = 0.0
            for i in range(m):
                tr += F[i, i]
            eps = _JITTER_REL * tr / m
            if eps <= 0.0:
                eps = _JITTER_REL
            for i in range(m):
                F[i, i] += eps
            ok = _chol_lower(F, Lc)
            if not ok:
                return 1, logliks, smoothed, filt_m, filt_P, pred_m, pred_P
        # innovations and F^{-1} v
        for b in range(B):
            for i in range(m):
                s = Y[t, i, b] - c[t, i]
                for l in range(k):
                    s -= Z[t, i, l] * pred_m[t, l, b]
                V[i, b] = s
                fv_all[t, i, b] = s
        _chol_solve(Lc, fv_all[t])
        ld = 0.0
        for i in range(m):
            ld += np.log(Lc[i, i])
        for b in range(B):
            q = 0.0
            for i in range(m):
                q += V[i, b] * fv_all[t, i, b]
            logliks[b] += -0.5 * (m * log2pi + q) - ld
        # filtered moments
        for i in range(m):
            for j in range(k):
                FiPZ[i, j] = PZt[j, i]
        _chol_solve(Lc, FiPZ)
        for b in range(B):
            for i in range(k):
                s = pred_m[t, i, b]
                for l in range(m):
                    s += PZt[i, l] * fv_all[t, l, b]
                filt_m[t, i, b] = s
        for i in range(k):
            for j in range(k):
                s = pred_P[t, i, j]
                for l in range(m):
                    s -= PZt[i, l] * FiPZ[l, j]
                filt_P[t, i, j] = s
        # one-step prediction with cross term H G'
        if t < n - 1:
            for i in range(k):
                for j in range(m):
                    s = 0.0
                    for l in range(k):
                        s += T[t, i, l] * PZt[l, j]
                    for l in range(rd):
                        s += H[t, i, l] * G[t, j, l]
                    M[i, j] = s
                    KtT[j, i] = s
            _chol_solve(Lc, KtT)
            for i in range(k):
                for j in range(m):
                    K[i, j] = KtT[j, i]
            for b in range(B):
                for i in range(k):
                    s = d[t, i]
                    for l in range(k):
                        s += T[t, i, l] * pred_m[t, l, b]
                    for l in range(m):
                        s += K[i, l] * V[l, b]
                    pred_m[t + 1, i, b] = s
            for i in range(k):
                for j in range(k):
                    s = 0.0
                    for l in range(k):
                        s += T[t, i, l] * pred_P[t, l, j]
                    TP[i, j] = s
            for i in range(k):
                for j in range(m):
                    s = 0.0
                    for l in range(m):
                        s += K[i, l] * F[l, j]
                    KF[i, j] = s
            for i in range(k):
                for j in range(k):
                    s = 0.0
                    for l in range(k):
                        s += TP[i, l] * T[t, j, l]
                    for l in range(rd):
                        s += H[t, i, l] * H[t, j, l]
                    for l in range(m):
                        s -= KF[i, l] * K[j, l]
                    pred_P[t + 1, i, j] = s
            for i in range(k):
                for j in range(k):
                    s = T[t, i, j]
                    for l in range(m):
                        s -= K[i, l] * Z[t, l, j]
                    L_all[t, i, j] = s

    # backward recursion for E[a_t | all y]
    r = np.zeros((k, B))
    rn = np.zeros((k, B))
    for t in range(n - 1, -1, -1):
        for b in range(B):
            for i in range(k):
                s = 0.0
                for l in range(m):
                    s += Z[t, l, i] * fv_all[t, l, b]
                if t < n - 1:
                    for l in range(k):
                        s += L_all[t, l, i] * r[l, b]
                rn[i, b] = s
        for b in range(B):
            for i in range(k):
                s = pred_m[t, i, b]
                for l in range(k):
                    s += pred_P[t, i, l] * rn[l, b]
                smoothed[t, i, b] = s
            for i in range(k):
                r[i, b] = rn[i, b]

    return 0, logliks, smoothed, filt_m, filt_P, pred_m, pred_P


@njit(cache=True)
def _simulate_ss(Z, c, G, T, d, H, a1, sqrtP1, zeta, U):
    """Draw one unconditional path (states, obs) with shared disturbances U."""
    n, m, k = Z.shape
    rd = G.shape[2]
    states = np.zeros((n, k))
    obs = np.zeros((n, m))
    for i in range(k):
        s = a1[i]
        for l in range(k):
            s += sqrtP1[i, l] * zeta[l]
        states[0, i] = s
    for t in range(n):
        for i in range(m):
            s = c[t, i]
            for l in range(k):
                s += Z[t, i, l] * states[t, l]
            for l in range(rd):
                s += G[t, i, l] * U[t, l]
            obs[t, i] = s
        if t < n - 1:
            for i in range(k):
                s = d[t, i]
                for l in range(k):
                    s += T[t, i, l] * states[t, l]
                for l in range(rd):
                    s += H[t, i, l] * U[t, l]
                states[t + 1, i] = s
    return states, obs


def _psd_sqrt(P: np.ndarray) -> np.ndarray:
    """Matrix square root of a PSD matrix (Cholesky, eigen fallback)."""
    if not np.any(P):
        return np.zeros_like(P)
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(P)
        w = np.clip(w, 0.0, None)
        return V * np.sqrt(w)


def _run_batch(sys: LinearGaussianSS, Y: np.ndarray):
    status, logliks, smoothed, fm, fP, pm, pP = _filter_smoother_batch(
        sys.Z, sys.c, sys.G, sys.T, sys.d, sys.H, sys.a1, sys.P1,
        np.ascontiguousarray(Y, dtype=float),
    )
    if status != 0:
        raise SingularInnovationCovariance(
            "innovation covariance not positive definite (after jitter retry)"
        )
    return logliks, smoothed, fm, fP, pm, pP


def kalman_filter(sys: LinearGaussianSS, obs: np.ndarray) -> FilterResult:
    """Exact Gaussian log-likelihood and filtered moments.

    `obs` has shape (n, m).  The G_t H_t' cross term between observation and
    state disturbances is handled exactly.
    """
    obs = np.asarray(obs, dtype=float)
    if sys.n == 0:
        z = np.zeros((0, sys.k))
        zc = np.zeros((0, sys.k, sys.k))
        return FilterResult(0.0, z, zc, z.copy(), zc.copy())
    if obs.shape != (sys.n, sys.m):
        raise ValueError(f"obs must have shape {(sys.n, sys.m)}, got {obs.shape}")
    logliks, _, fm, fP, pm, pP = _run_batch(sys, obs[:, :, None])
    return FilterResult(float(logliks[0]), fm[:, :, 0], fP, pm[:, :, 0], pP)


def smoothed_state_means(sys: LinearGaussianSS, obs: np.ndarray) -> np.ndarray:
    """E[a_t | y_{1..n}] for t = 1..n, shape (n, k)."""
    obs = np.asarray(obs, dtype=float)
    if sys.n == 0:
        return np.zeros((0, sys.k))
    _, smoothed, *_ = _run_batch(sys, obs[:, :, None])
    return smoothed[:, :, 0]


def simulation_smoother_draw(sys: LinearGaussianSS, obs: np.ndarray, rng: np.random.Generator) -> SmootherDraw:
    """One exact draw from the joint conditional of the state path given obs.

    Mean-correction construction: simulate an unconditional path (a+, y+),
    smooth both y and y+, and return a+ + E[a|y] - E[a|y+].  Both smoothing
    passes share one filter sweep.
    """
    obs = np.asarray(obs, dtype=float)
    if sys.n == 0:
        return SmootherDraw(np.zeros((0, sys.k)), 0.0)
    if obs.shape != (sys.n, sys.m):
        raise ValueError(f"obs must have shape {(sys.n, sys.m)}, got {obs.shape}")
    zeta = rng.standard_normal(sys.k)
    U = rng.standard_normal((sys.n, sys.r))
    a_plus, y_plus = _simulate_ss(
        sys.Z, sys.c, sys.G, sys.T, sys.d, sys.H, sys.a1, _psd_sqrt(sys.P1), zeta, U
    )
    Y = np.stack([obs, y_plus], axis=2)
    logliks, smoothed, *_ = _run_batch(sys, Y)
    states = a_plus + smoothed[:, :, 0] - smoothed[:, :, 1]
    return SmootherDraw(states, float(logliks[0]))


def dense_gaussian_oracle(sys: LinearGaussianSS, obs: np.ndarray):
    """Exact conditional moments of the stacked state path by brute force.

    Assembles the joint Gaussian of (a_1..a_n, y_1..y_n) explicitly and
    conditions with a Schur complement.  Returns (cond_mean (n,k),
    cond_cov (nk,nk), loglik).  Guarded to n*k <= 512.
    """
    obs = np.asarray(obs, dtype=float)
    n, m, k, r = sys.n, sys.m, sys.k, sys.r
    if n * k > 512:
        raise SizeGuardExceeded(f"oracle limited to n*k <= 512, got {n * k}")
    if n == 0:
        return np.zeros((0, k)), np.zeros((0, 0)), 0.0
    nu = k + n * r  # stacked noise: initial-state deviation, then u_1..u_n
    mean_a = np.zeros((n, k))
    coef_a = np.zeros((n, k, nu))
    mean_a[0] = sys.a1
    coef_a[0, :, :k] = np.eye(k)
    for t in range(n - 1):
        mean_a[t + 1] = sys.d[t] + sys.T[t] @ mean_a[t]
        coef_a[t + 1] = sys.T[t] @ coef_a[t]
        coef_a[t + 1, :, k + t * r : k + (t + 1) * r] += sys.H[t]
    mean_y = np.zeros((n, m))
    coef_y = np.zeros((n, m, nu))
    for t in range(n):
        mean_y[t] = sys.c[t] + sys.Z[t] @ mean_a[t]
        coef_y[t] = sys.Z[t] @ coef_a[t]
        coef_y[t, :, k + t * r : k + (t + 1) * r] += sys.G[t]

    A = coef_a.reshape(n * k, nu)
    B = coef_y.reshape(n * m, nu)
    W = np.zeros((nu, nu))
    W[:k, :k] = sys.P1
    W[k:, k:] = np.eye(n * r)
    S_aa = A @ W @ A.T
    S_ay = A @ W @ B.T
    S_yy = B @ W @ B.T

    resid = (obs - mean_y).reshape(n * m)
    sign, logdet = np.linalg.slogdet(S_yy)
    if sign <= 0:
        raise SingularCovariance("stacked observation covariance is singular")
    Syy_inv_resid = np.linalg.solve(S_yy, resid)
    Syy_inv_Sya = np.linalg.solve(S_yy, S_ay.T)
    cond_mean = mean_a.reshape(n * k) + S_ay @ Syy_inv_resid
    cond_cov = S_aa - S_ay @ Syy_inv_Sya
    loglik = -0.5 * (n * m * np.log(2.0 * np.pi) + logdet + resid @ Syy_inv_resid)
    return cond_mean.reshape(n, k), cond_cov, float(loglik)
