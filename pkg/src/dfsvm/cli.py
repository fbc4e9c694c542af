"""Batch entry points: simulate, fit, backtest, evaluate.

One binary with subcommands.  Settings come from a JSON config file; flags
override config values (``--seed``, ``--threads``, ``--out-dir``, and generic
``--set KEY=VALUE``).  Every command is a pure function of its config, input
files, and seed.  Exit codes: 0 success, 2 validation error, 3 numeric
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import evaluation
from .data_io import (
    Panel,
    Quarter,
    TransformCode,
    load_csv_panel,
    plan_expanding_windows,
    standardize_panel,
    transform_panel,
    write_csv_panel,
)
from .errors import (
    DfsvmError,
    MissingSeries,
    NonFiniteDensity,
    NonPositiveDefinitePosteriorCov,
    NonStationaryParams,
    NumericalOverflow,
    SingularCovariance,
    SingularInnovationCovariance,
)
from .forecast import ForecastResult, run_backtest
from .mcmc import ChainConfig, DrawSet, run_chain, run_lsvvar_chain
from .model import InMean, Leverage, ModelConfig, Params, PriorHyper, config_for, simulate_model

_NUMERIC_ERRORS = (
    NonStationaryParams,
    NonFiniteDensity,
    SingularInnovationCovariance,
    SingularCovariance,
    NonPositiveDefinitePosteriorCov,
    NumericalOverflow,
    FloatingPointError,
)

_KEYS = {
    "simulate": {
        "model", "p", "q", "L", "n", "seed", "out_dir", "params",
    },
    "fit": {
        "data", "series", "transform", "standardize", "model", "q", "L",
        "n_draws", "n_burnin", "thin", "seed", "store_latents", "out_dir",
        "priors", "checkpoint_path", "checkpoint_every", "resume", "stop_after",
    },
    "backtest": {
        "data", "series", "transform", "model", "q", "L", "first_origin",
        "max_horizon", "n_draws", "n_burnin", "thin", "seed", "out_dir",
        "n_vol_paths", "threads", "priors",
    },
    "evaluate": {
        "forecasts", "benchmark", "alpha", "n_boot", "block_len", "seed",
        "out_dir",
    },
}

_PRIOR_KEYS = {
    "minnesota_pi1", "minnesota_pi2", "sample_shrinkage", "m_beta", "v_beta2",
    "loading_var", "m_gamma", "s_gamma", "a_psi", "b_psi", "m_mu", "v_mu2",
    "sigma_shape", "sigma_scale", "a_phi", "b_phi", "b0_var", "intercept_var",
}


class ConfigError(ValueError):
    pass


def _load_config(args) -> dict:
    cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            cfg[key] = json.loads(raw)
        except json.JSONDecodeError:
            cfg[key] = raw
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out_dir is not None:
        cfg["out_dir"] = args.out_dir
    if args.threads is not None:
        cfg["threads"] = args.threads
    return cfg


def _validate_keys(cfg: dict, command: str) -> None:
    allowed = set(_KEYS[command])
    if command == "backtest":
        allowed = allowed | {"threads"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
    if "priors" in cfg:
        bad = set(cfg["priors"]) - _PRIOR_KEYS
        if bad:
            raise ConfigError(f"unknown prior keys: {sorted(bad)}")


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"missing required config keys: {missing}")


def _priors_from(cfg: dict) -> PriorHyper:
    return PriorHyper(**cfg.get("priors", {}))


def _model_config(cfg: dict, p: int) -> ModelConfig:
    name = cfg.get("model", "DFSVML")
    return config_for(name, p=p, q=int(cfg.get("q", 1)), L=int(cfg.get("L", 4)))


def _chain_config(cfg: dict) -> ChainConfig:
    return ChainConfig(
        n_draws=int(cfg.get("n_draws", 1000)),
        n_burnin=int(cfg.get("n_burnin", 200)),
        thin=int(cfg.get("thin", 1)),
        seed=int(cfg.get("seed", 0)),
        store_latents=cfg.get("store_latents", "last"),
    )


def _read_panel(cfg: dict) -> Panel:
    _require(cfg, "data")
    codes = {"none": TransformCode.NONE, "log": TransformCode.LOG,
             "diff_log_100": TransformCode.DIFF_LOG_100}
    header = pd.read_csv(cfg["data"], nrows=0).columns.tolist()[1:]
    series = cfg.get("series", header)
    tmap = cfg.get("transform", {})
    if not isinstance(tmap, dict):
        raise ConfigError("transform must map series name -> code")
    spec = []
    for name in series:
        code = tmap.get(name, "none")
        if code not in codes:
            raise ConfigError(f"unknown transform code {code!r} for {name!r}")
        spec.append((name, codes[code]))
    raw = load_csv_panel(cfg["data"], spec)
    return transform_panel(raw)


def _default_params(config: ModelConfig) -> Params:
    p, q, L = config.p, config.q, config.L
    Bbar = np.zeros((p, p * L))
    Bbar[:, :p] = 0.3 * np.eye(p)
    B = np.full((p, q), 0.3)
    B[:q, :q] += 0.4 * np.eye(q)
    free = config.leverage_free()
    return Params(
        Bbar=Bbar,
        B=B,
        gamma=np.zeros(q),
        psi=np.full(q, 0.6) if config.factor_dynamics else np.zeros(q),
        beta=np.full(config.beta_len, -0.2),
        mu=np.concatenate([np.full(p, -1.0), np.zeros(q)]),
        phi=np.full(p + q, 0.9),
        sigma2=np.full(p + q, 0.05),
        rho=np.where(free, -0.3, 0.0),
    )


def cmd_simulate(cfg: dict) -> int:
    _require(cfg, "p", "q", "n")
    config = _model_config(cfg, int(cfg["p"]))
    n = int(cfg["n"])
    params = Params.from_dict(cfg["params"]) if "params" in cfg else _default_params(config)
    params.validate(config, allow_degenerate_sigma=True)
    y, latents = simulate_model(config, params, n, int(cfg.get("seed", 0)))
    out = Path(cfg.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    times = [Quarter(1960, 1) + t for t in range(n)]
    names = [f"y{j + 1}" for j in range(config.p)]
    panel = Panel(names=names, times=times, values=y,
                  transform=[TransformCode.NONE] * config.p)
    write_csv_panel(panel, out / "y.csv")
    lat = pd.DataFrame(
        np.hstack([latents.f, latents.h]),
        columns=[f"f{j + 1}" for j in range(config.q)]
        + [f"h{j + 1}" for j in range(config.p + config.q)],
    )
    lat.insert(0, "date", [str(t) for t in times])
    lat.to_csv(out / "latents.csv", index=False)
    with open(out / "params.json", "w", encoding="utf-8") as fh:
        json.dump(params.to_dict(), fh, indent=1)
    print(f"simulated {n} x {config.p} panel -> {out}")
    return 0


def _save_drawset(draws: DrawSet, out: Path) -> None:
    np.savez(out / "draws.npz", kind=draws.kind, n_obs=draws.n_obs, **draws.arrays)
    draws.summary().to_csv(out / "summary.csv", index=False)


def cmd_fit(cfg: dict) -> int:
    panel = _read_panel(cfg)
    if cfg.get("standardize", True):
        panel = standardize_panel(panel)
    chain = _chain_config(cfg)
    priors = _priors_from(cfg)
    out = Path(cfg.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    name = cfg.get("model", "DFSVML")
    if name.upper() == "LSVVAR":
        draws = run_lsvvar_chain(chain, panel, priors, L=int(cfg.get("L", 4)))
    else:
        config = _model_config(cfg, panel.p)
        draws = run_chain(
            config, chain, panel, priors,
            checkpoint_path=cfg.get("checkpoint_path"),
            checkpoint_every=cfg.get("checkpoint_every"),
            resume=bool(cfg.get("resume", False)),
            stop_after=cfg.get("stop_after"),
        )
        if draws is None:
            print("stopped early at checkpoint")
            return 0
    _save_drawset(draws, out)
    print(f"retained {draws.n_draws} draws -> {out}")
    return 0


def cmd_backtest(cfg: dict) -> int:
    panel = _read_panel(cfg)
    _require(cfg, "first_origin")
    plan = plan_expanding_windows(
        panel, Quarter.parse(cfg["first_origin"]), int(cfg.get("max_horizon", 4))
    )
    chain = _chain_config(cfg)
    priors = _priors_from(cfg)
    name = cfg.get("model", "DFSVML")
    if name.upper() == "LSVVAR":
        config = config_for("LSVVAR", p=panel.p, q=0, L=int(cfg.get("L", 4)))
    else:
        config = _model_config(cfg, panel.p)
    result = run_backtest(
        config, chain, panel, plan, priors,
        n_vol_paths=int(cfg.get("n_vol_paths", 1)),
        threads=int(cfg.get("threads", 1)),
    )
    out = Path(cfg.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    result.to_csv(out / "forecast.csv")
    print(f"scored {len(result.table)} forecasts -> {out}")
    return 0


def cmd_evaluate(cfg: dict) -> int:
    _require(cfg, "forecasts", "benchmark")
    forecasts = {name: ForecastResult.from_csv(path) for name, path in cfg["forecasts"].items()}
    bench = cfg["benchmark"]
    if bench not in forecasts:
        raise MissingSeries(f"benchmark {bench!r} not among the forecast files")
    alpha = float(cfg.get("alpha", 0.1))
    n_boot = int(cfg.get("n_boot", 5000))
    block_len = cfg.get("block_len")
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    out = Path(cfg.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)

    base = forecasts[bench].table
    variables = sorted(base["variable"].unique())
    horizons = sorted(base["horizon"].unique())
    models = [m for m in forecasts if m != bench]

    for hz in horizons:
        gains, dms, mcs_se_rows, mcs_lpl_rows = [], [], [], []
        for var in variables:
            series = {}
            lpls = {}
            for name, res in forecasts.items():
                sel = res.losses(var, hz)
                series[name] = sel["sq_error"].to_numpy()
                lpls[name] = sel["log_pred_density"].to_numpy()
            nref = len(series[bench])
            if any(len(v) != nref for v in series.values()):
                raise MissingSeries(f"forecast files disagree on support for {var!r}")
            row_g, row_d = {"variable": var}, {"variable": var}
            for name in models:
                row_g[name] = evaluation.percentage_gain(series[name].sum(), series[bench].sum())
                _, pval = evaluation.dm_test(series[name], series[bench], horizon=hz)
                row_d[name] = pval
            gains.append(row_g)
            dms.append(row_d)
            pv_se, _ = evaluation.model_confidence_set(series, alpha, n_boot, block_len, rng)
            pv_lpl, _ = evaluation.model_confidence_set(
                {k: -v for k, v in lpls.items()}, alpha, n_boot, block_len, rng
            )
            mcs_se_rows.append({"variable": var, **pv_se})
            mcs_lpl_rows.append({"variable": var, **pv_lpl})
        pd.DataFrame(gains).to_csv(out / f"gains_h{hz}.csv", index=False)
        pd.DataFrame(dms).to_csv(out / f"dm_h{hz}.csv", index=False)
        pd.DataFrame(mcs_se_rows).to_csv(out / f"mcs_se_h{hz}.csv", index=False)
        pd.DataFrame(mcs_lpl_rows).to_csv(out / f"mcs_lpl_h{hz}.csv", index=False)
    print(f"evaluation tables -> {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dfsvm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "fit", "backtest", "evaluate"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (JSON-parsed value)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--out-dir")
    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "fit": cmd_fit,
        "backtest": cmd_backtest,
        "evaluate": cmd_evaluate,
    }
    try:
        cfg = _load_config(args)
        if "threads" not in _KEYS[args.command] and args.command != "backtest":
            cfg.pop("threads", None)  # --threads is global; only backtest uses it
        _validate_keys(cfg, args.command)
        return handlers[args.command](cfg)
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (OSError, IOError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    except (ConfigError, DfsvmError, ValueError, KeyError, TypeError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
