"""Forecast-loss aggregation and formal accuracy comparisons.

Cumulative squared forecast errors and log predictive likelihoods (both
optionally relative to a benchmark's running sum), percentage accuracy
gains, the Diebold-Mariano test with a Newey-West long-run variance, and
the Model Confidence Set via the T_max statistic with a moving-block
bootstrap.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import norm, t as student_t

from .errors import (
    DegenerateDifferential,
    InsufficientModels,
    LengthMismatch,
    ZeroBenchmark,
)


def cumulative_series(losses: np.ndarray, mode: str, benchmark: np.ndarray | None = None) -> np.ndarray:
    """Running sum of forecast losses, optionally relative to a benchmark.

    mode "SFE": inputs are forecast errors and are squared before summing;
    mode "LPL": inputs are log predictive likelihood values, summed as-is.
    With a benchmark the benchmark's running sum (same treatment) is
    subtracted, giving the zero-line convention where negative relative SFE
    (positive relative LPL) means the model beats the benchmark.
    """
    x = np.asarray(losses, dtype=float)
    if x.size == 0:
        raise ValueError("empty loss vector")
    if mode.upper() == "SFE":
        x = x**2
    elif mode.upper() != "LPL":
        raise ValueError("mode must be SFE or LPL")
    out = np.cumsum(x)
    if benchmark is not None:
        b = np.asarray(benchmark, dtype=float)
        if b.shape != x.shape:
            raise LengthMismatch("benchmark series must match the model series length")
        if mode.upper() == "SFE":
            b = b**2
        out = out - np.cumsum(b)
    return out


def percentage_gain(csfe_model: float, csfe_benchmark: float) -> float:
    """100 * (1 - CSFE_model / CSFE_benchmark); positive means the model wins."""
    if csfe_benchmark <= 0.0:
        raise ZeroBenchmark("benchmark cumulative squared error must be positive")
    return 100.0 * (1.0 - csfe_model / csfe_benchmark)


def dm_test(
    loss_model: np.ndarray,
    loss_benchmark: np.ndarray,
    horizon: int,
    harvey_correction: bool = False,
) -> tuple[float, float]:
    """Diebold-Mariano test of equal predictive accuracy.

    The loss differential (model minus benchmark) gets a Newey-West long-run
    variance with Bartlett weights truncated at horizon - 1 lags.  The
    p-value is one-sided against "model more accurate than benchmark", so
    small values favor the model.  The optional Harvey-Leybourne-Newbold
    small-sample correction rescales the statistic and switches to a t(n-1)
    reference distribution.
    """
    d = np.asarray(loss_model, dtype=float) - _check_lengths(loss_model, loss_benchmark)
    n = d.shape[0]
    if n < 10:
        raise ValueError("need at least 10 loss observations")
    dbar = d.mean()
    dc = d - dbar
    lag = max(int(horizon) - 1, 0)
    lrv = float(dc @ dc) / n
    for s in range(1, lag + 1):
        w = 1.0 - s / (lag + 1.0)
        lrv += 2.0 * w * float(dc[s:] @ dc[:-s]) / n
    if lrv <= 0.0:
        raise DegenerateDifferential("loss differential has no (positive) long-run variance")
    stat = dbar / math.sqrt(lrv / n)
    if harvey_correction:
        h = int(horizon)
        stat *= math.sqrt((n + 1 - 2 * h + h * (h - 1) / n) / n)
        pval = float(student_t.cdf(stat, df=n - 1))
    else:
        pval = float(norm.cdf(stat))
    return float(stat), pval


def _check_lengths(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch("loss vectors must have equal length")
    return b


def model_confidence_set(
    losses: dict[str, np.ndarray],
    alpha: float = 0.1,
    n_boot: int = 5000,
    block_len: int | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[dict[str, float], set[str]]:
    """Model Confidence Set by iterative T_max elimination.

    `losses` maps model names to aligned loss vectors (lower is better).
    Pairwise mean differentials are bootstrapped with a circular moving-block
    bootstrap (block length defaults to ceil(n^(1/3))); at each round the
    model with the largest studentized relative loss is eliminated until the
    max statistic is no longer extreme at level `alpha`.  Returns the
    per-model MCS p-values (monotone along the elimination order) and the
    set of models retained at confidence 1 - alpha.
    """
    names = list(losses)
    if len(names) < 2:
        raise InsufficientModels("need at least two models")
    mat = np.column_stack([np.asarray(losses[k], dtype=float) for k in names])
    n, M = mat.shape
    for k in names:
        if np.asarray(losses[k]).shape != (n,):
            raise LengthMismatch("all loss vectors must share one length")
    rng = rng or np.random.default_rng()
    if block_len is None:
        block_len = max(1, math.ceil(n ** (1.0 / 3.0)))

    # circular moving-block bootstrap indices, shared by all rounds
    n_blocks = math.ceil(n / block_len)
    starts = rng.integers(0, n, size=(n_boot, n_blocks))
    offsets = np.arange(block_len)
    idx = (starts[:, :, None] + offsets[None, None, :]).reshape(n_boot, -1)[:, :n] % n

    full_means = mat.mean(axis=0)                       # (M,)
    boot_means = mat[idx].mean(axis=1)                  # (n_boot, M)

    # full elimination sequence; each round's equivalence-test p-value is the
    # bootstrap tail probability of the max studentized relative loss
    active = list(range(M))
    elim_order: list[int] = []
    p_rounds: list[float] = []
    while len(active) > 1:
        sub = np.array(active)
        d_i = full_means[sub] - full_means[sub].mean()
        dev = boot_means[:, sub] - full_means[sub]
        d_boot = dev - dev.mean(axis=1, keepdims=True)
        var_i = np.mean(d_boot**2, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_i = d_i / np.sqrt(var_i)
            t_boot = d_boot / np.sqrt(var_i)
        t_i = np.nan_to_num(t_i, nan=0.0, posinf=np.inf, neginf=-np.inf)
        t_boot = np.nan_to_num(t_boot, nan=0.0, posinf=np.inf, neginf=-np.inf)
        t_max = float(np.max(t_i))
        p_rounds.append(float(np.mean(t_boot.max(axis=1) >= t_max)))
        worst = active[int(np.argmax(t_i))]
        elim_order.append(worst)
        active.remove(worst)

    pvalues: dict[str, float] = {}
    running = 0.0
    for r, j in enumerate(elim_order):
        running = max(running, p_rounds[r])
        pvalues[names[j]] = running
    pvalues[names[active[0]]] = 1.0
    included = {k for k, v in pvalues.items() if v > alpha}
    return pvalues, included
