"""Command-line interface: ``simulate``, ``fit``, ``forecast`` and ``diagnose``.

Failures print a JSON error record on stderr and exit with status 2.
"""

import argparse
import json
import os
import sys
import warnings

import numpy as np

from . import diagnostics as dg
from . import forecast as fc
from .archive import (
    load_archive, load_dataset, read_table, write_dataset, write_fit_archive, write_matrix,
    write_subdir,
)
from .config import load_config
from .design import Dataset, assemble_design, drop_incomplete_rows, transform_response
from .errors import ArpsplineError, DataError
from .numerics import rng_stream
from .sampler import run_chains
from .simulate import simulate


def cmd_simulate(n, seed, out):
    data = simulate(n, seed)
    write_dataset(out, data)
    return data


def cmd_fit(config, data, out, seed=None, chains=1):
    raw, (spec, opts, _) = load_config(config)
    if seed is not None:
        spec = spec.with_seed(seed)
    dataset = load_dataset(data, opts["time_column"], opts["response_column"], opts["time_step"],
                           opts["missing_tokens"], required=spec.covariates)
    filtered, kept = drop_incomplete_rows(dataset, spec.lag_set, spec.covariates)
    ledger = assemble_design(spec, filtered)[2]
    draws = run_chains(spec, filtered, n_chains=chains)
    write_fit_archive(out, raw, spec.mcmc.seed, chains, dataset, kept, filtered, ledger, draws, opts)
    return draws


def _forecast_tables(dist):
    s = dist.summary()
    cols = {"time": dist.time_index, "horizon": dist.horizon}
    if dist.issued is not None:
        cols["issued"] = dist.issued
    cols.update(mean=s["mean"], q025=s["q025"], median=s["median"], q975=s["q975"])
    cols["mu_mean"] = dist.mu.mean(axis=0)
    if dist.observed is not None:
        cols["observed"] = dist.observed
    return cols


def cmd_forecast(archive, future_data, rolling=False, seed=None):
    arc = load_archive(archive)
    opts, spec = arc.data_options, arc.spec
    future = load_dataset(future_data, opts["time_column"], opts["response_column"], opts["time_step"],
                          opts["missing_tokens"], required=spec.covariates)
    seed = spec.mcmc.seed if seed is None else seed
    protocol = arc.protocol
    last = int(arc.data.time_index[-1])
    if future.time_index[0] <= last:
        raise DataError(f"future data must start after the training data (time {last})")
    if rolling:
        both = _concat(arc.data, future)
        S = protocol.steps_per_day
        origin = int(both.time_index[0])
        start = int(future.time_index[0])
        start += (-(start - origin)) % S
        proto = fc.RollingProtocol(protocol.refit_interval, protocol.forecast_window,
                                   protocol.residual_history, protocol.issue_time, S, start, origin)
        dist = fc.rolling_forecast_study(spec, both, proto, seed, initial_fit=(arc.draws, arc.ledger))
        tables = {"rolling.csv": _forecast_tables(dist)}
    else:
        first = int(future.time_index[0])
        times = np.arange(first, int(future.time_index[-1]) + 1)
        hist_times = np.arange(first - protocol.residual_history, first)
        hist = fc.residual_history(arc.draws, arc.ledger, arc.data, hist_times, spec.response_transform)
        X = fc.future_design(arc.ledger, future, times)
        path, _ = fc.propagate_errors(arc.draws.phi, arc.draws.sigma2, hist, spec.lag_set.lags,
                                      times.size, rng_stream(seed, (2, 0)))
        keep = np.all(np.isfinite(X), axis=1)
        eps = path[:, hist_times.size:][:, keep]
        mu = arc.draws.beta @ X[keep].T
        obs = dict(zip(future.time_index.tolist(),
                       transform_response(future.response, spec.response_transform).tolist()))
        dist = fc.ForecastDistribution(
            times[keep], mu + eps, mu, (times[keep] - first + 1).astype(str), None,
            np.array([obs.get(int(v), np.nan) for v in times[keep]]),
        )
        tables = {
            "forecast.csv": _forecast_tables(dist),
            "samples.csv": lambda p: write_matrix(
                p, {"chain": arc.draws.chain, "iteration": arc.draws.iteration},
                [f"t{v}" for v in dist.time_index], dist.samples),
        }
    if dist.observed is not None and np.isfinite(dist.observed).any() and dist.samples.shape[0] >= 100:
        ok = np.isfinite(dist.observed)
        tables["pit.csv"] = {
            "time": dist.time_index[ok], "horizon": dist.horizon[ok],
            "pit": dg.pit_values(dist.samples[:, ok], dist.observed[ok]),
        }
    tables["sharpness.csv"] = {"time": dist.time_index, "horizon": dist.horizon,
                               "variance": dg.sharpness(dist).variance}
    write_subdir(archive, os.path.join("forecast", "rolling" if rolling else "single"), tables)
    return dist


def _concat(a, b):
    keys = [k for k in a.covariates if k in b.covariates]
    return Dataset(
        np.concatenate([a.time_index, b.time_index]), np.concatenate([a.response, b.response]),
        {k: np.concatenate([a.covariates[k], b.covariates[k]]) for k in keys},
    )


def cmd_diagnose(archive, term=None, grid=50):
    arc = load_archive(archive)
    draws, ledger = arc.draws, arc.ledger
    tables = {}
    edf = dg.effective_df(draws, arc.X, ledger, arc.spec.priors.fixed_precision)
    rows = edf.summary()
    tables["edf.csv"] = {k: [r[k] for r in rows] for k in rows[0]}
    dic_value, p_d = dg.dic(draws, arc.X, arc.y, arc.spec.lag_set, arc.filtered.time_index)
    tables["dic.csv"] = {"dic": [dic_value], "p_d": [p_d], "edf_total": [edf.total.mean()]}
    if draws.u.shape[0]:
        u_mean = np.full(len(arc.filtered), np.nan)
        u_mean[draws.target_rows] = draws.u.mean(axis=0)
        max_lag = min(672, int(np.isfinite(u_mean).sum()) - 2)
        if max_lag >= 1:
            a = dg.acf(u_mean, max_lag)
            tables["acf_u.csv"] = {"lag": a.lags, "acf": a.values, "band": np.full(a.values.size, a.band)}
    names = [term] if term else [b.name for b in ledger.blocks if b.kind != "intercept"]
    for name in names:
        me = dg.marginal_effect(draws, name, ledger, resolution=grid)
        tables[f"effect_{name}.csv"] = me.table()
    for mode in ("single", "rolling"):
        fpath = os.path.join(archive, "forecast", mode, "pit.csv")
        if os.path.isfile(fpath):
            header, rows = read_table(fpath)
            vals = np.array([float(r[header.index("pit")]) for r in rows])
            counts, edges = np.histogram(vals, bins=20, range=(0, 1))
            tables[f"pit_histogram_{mode}.csv"] = {"lower": edges[:-1], "upper": edges[1:], "count": counts}
    write_subdir(archive, "diagnostics", tables)
    return tables


def build_parser():
    p = argparse.ArgumentParser(prog="arpspline", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a synthetic dataset")
    s.add_argument("--n", type=int, default=2400, help="number of hourly rows")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    f = sub.add_parser("fit", help="run the sampler and write an archive")
    f.add_argument("--config", required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int, default=None, help="overrides mcmc.seed")
    f.add_argument("--chains", type=int, default=1)

    g = sub.add_parser("forecast", help="forecast from a fit archive")
    g.add_argument("archive")
    g.add_argument("--future-data", required=True)
    g.add_argument("--rolling", action="store_true", help="daily runs over the future data")
    g.add_argument("--seed", type=int, default=None)

    d = sub.add_parser("diagnose", help="edf, DIC, ACF and marginal effects")
    d.add_argument("archive")
    d.add_argument("--term", default=None)
    d.add_argument("--grid", type=int, default=50)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if args.command == "simulate":
                cmd_simulate(args.n, args.seed, args.out)
            elif args.command == "fit":
                if args.chains < 1:
                    raise DataError("--chains must be at least 1")
                cmd_fit(args.config, args.data, args.out, args.seed, args.chains)
            elif args.command == "forecast":
                if not os.path.isdir(args.archive):
                    raise DataError(f"no fit archive at {args.archive}")
                cmd_forecast(args.archive, args.future_data, args.rolling, args.seed)
            else:
                if not os.path.isdir(args.archive):
                    raise DataError(f"no fit archive at {args.archive}")
                cmd_diagnose(args.archive, args.term, args.grid)
        for w in caught:
            print(json.dumps({"warning": str(w.message)}), file=sys.stderr)
    except ArpsplineError as exc:
        print(json.dumps(exc.to_record()), file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
