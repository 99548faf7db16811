"""Delimited-text input and the on-disk run archive.

Archive layout (all tables are comma-separated with a header row)::

    config.yaml          resolved configuration, seed included
    seed.json            seed, chain count and generator
    rows.csv             per input row: time, used as a likelihood target
    training_data.csv    the data the model was fitted to
    draws/beta.csv       chain, iteration, one column per coefficient
    draws/phi.csv        chain, iteration, one column per lag
    draws/sigma2.csv     chain, iteration, sigma2
    draws/lambda.csv     chain, iteration, one column per smoothing parameter
    draws/eps.csv        thinned residuals, one column per fitted row
    draws/u.csv          thinned innovations, one column per target row
    summary.csv          posterior summaries of every scalar parameter
    acceptance.csv       Metropolis acceptance per tensor term
    forecast/single/     written by ``forecast``
    forecast/rolling/    written by ``forecast --rolling``
    diagnostics/         written by ``diagnose``

Floats are written with 17 significant digits so they read back exactly.
"""

import csv
import json
import os
import shutil
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
import yaml

from .config import parse_config
from .design import Dataset, assemble_design, drop_incomplete_rows
from .errors import DataError
from .numerics import RNG_ALGORITHM
from .sampler import PosteriorDraws


def fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "NaN" if np.isnan(v) else "%.17g" % v
    return str(v)


def write_table(path, columns):
    """Write ``{name: 1-D sequence}`` as a CSV table."""
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    n = len(cols[0]) if cols else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(n):
            w.writerow([fmt(c[i]) for c in cols])


def write_matrix(path, lead, labels, values):
    """Leading id columns plus a 2-D block of values, one row per record."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(lead) + list(labels))
        lead_cols = [np.asarray(v) for v in lead.values()]
        for i in range(values.shape[0]):
            w.writerow([fmt(c[i]) for c in lead_cols] + ["%.17g" % v for v in values[i]])


def read_table(path):
    """Read a CSV table written by :func:`write_table` into ``(header, rows)``."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = list(r)
    return header, rows


def read_matrix(path, n_lead=2):
    header, rows = read_table(path)
    lead = np.array([[int(v) for v in row[:n_lead]] for row in rows], dtype=np.int64).reshape(-1, n_lead)
    vals = np.array([[float(v) for v in row[n_lead:]] for row in rows], dtype=np.float64)
    return header[n_lead:], lead, vals.reshape(len(rows), len(header) - n_lead)


def _parse_time(values, step, path, column):
    try:
        t = np.array([float(v) for v in values])
    except ValueError:
        try:
            stamps = [datetime.fromisoformat(v) for v in values]
        except ValueError as exc:
            raise DataError(f"{path}: cannot parse time column {column!r}: {exc}") from exc
        # hours since the epoch; naive stamps are read as UTC so DST cannot shift them
        stamps = [s if s.tzinfo else s.replace(tzinfo=timezone.utc) for s in stamps]
        t = np.array([s.timestamp() / 3600.0 for s in stamps])
    idx = t / step
    if np.any(np.abs(idx - np.round(idx)) > 1e-9 * np.maximum(1.0, np.abs(idx))):
        bad = int(np.flatnonzero(np.abs(idx - np.round(idx)) > 1e-9 * np.maximum(1.0, np.abs(idx)))[0])
        raise DataError(f"{path}: time {values[bad]!r} in row {bad + 1} is off the {step} step grid")
    idx = np.round(idx).astype(np.int64)
    d = np.diff(idx)
    if np.any(d <= 0):
        bad = int(np.flatnonzero(d <= 0)[0]) + 1
        what = "duplicate" if d[bad - 1] == 0 else "decreasing"
        raise DataError(f"{path}: {what} time {values[bad]!r} in row {bad + 1}")
    return idx


def load_dataset(path, time_column="time", response_column="response", time_step=1,
                 missing_tokens=("NaN", "NA", ""), required=None):
    """Read a delimited file into a :class:`Dataset`.

    Missing tokens become NaN. Time is mapped to an integer index on a
    ``time_step`` grid and must be strictly increasing. Columns other than
    time and response become covariates.
    """
    with open(path, newline="") as fh:
        sample = fh.read(4096)
        fh.seek(0)
        try:
            dialect = csv.Sniffer().sniff(sample, delimiters=",;\t")
        except csv.Error:
            dialect = csv.excel
        rows = list(csv.reader(fh, dialect))
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = [h.strip() for h in rows[0]], [r for r in rows[1:] if r]
    for col in (time_column, response_column, *(required or ())):
        if col not in header:
            raise DataError(f"{path}: missing column {col!r}")
    missing = set(missing_tokens)
    cols = {}
    for j, name in enumerate(header):
        vals = []
        for i, row in enumerate(body):
            if len(row) != len(header):
                raise DataError(f"{path}: row {i + 1} has {len(row)} cells, expected {len(header)}")
            cell = row[j].strip()
            if name == time_column:
                vals.append(cell)
                continue
            if cell in missing:
                vals.append(np.nan)
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(f"{path}: unparseable value {cell!r} in row {i + 1}, column {name!r}") from None
        cols[name] = vals
    t = _parse_time(cols.pop(time_column), time_step, path, time_column)
    y = np.array(cols.pop(response_column), dtype=np.float64)
    return Dataset(t, y, {k: np.array(v, dtype=np.float64) for k, v in cols.items()})


def write_dataset(path, data, time_column="time", response_column="response"):
    write_table(path, {time_column: data.time_index, response_column: data.response, **data.covariates})


@dataclass
class Archive:
    path: str
    raw_config: dict
    spec: object
    data_options: dict
    protocol: object
    data: Dataset
    filtered: Dataset
    X: np.ndarray
    y: np.ndarray
    ledger: object
    draws: PosteriorDraws


def _atomic_dir(target):
    """Create a temporary sibling of ``target`` to be swapped in later."""
    parent = os.path.dirname(os.path.abspath(target))
    os.makedirs(parent, exist_ok=True)
    return tempfile.mkdtemp(prefix=".tmp-", dir=parent)


def _swap_in(tmp, target):
    old = None
    if os.path.exists(target):
        old = tmp + ".old"
        os.rename(target, old)
    os.rename(tmp, target)
    if old:
        shutil.rmtree(old)


def _summary(draws, ledger):
    rows = {"parameter": [], "mean": [], "sd": [], "q025": [], "q50": [], "q975": []}

    def add(name, x):
        q = np.quantile(x, (0.025, 0.5, 0.975))
        for k, v in zip(rows, (name, x.mean(), x.std(ddof=1) if x.size > 1 else 0.0, *q)):
            rows[k].append(v)

    for j, lab in enumerate(ledger.column_labels()):
        add(f"beta:{lab}", draws.beta[:, j])
    for j, lag in enumerate(draws.lags):
        add(f"phi:{lag}", draws.phi[:, j])
    add("sigma2", draws.sigma2)
    for j, lab in enumerate(draws.lambda_labels):
        add(f"lambda:{lab}", draws.lambdas[:, j])
    return rows


def write_fit_archive(out, raw_config, seed, chains, data, kept, filtered, ledger, draws, data_options):
    tmp = _atomic_dir(out)
    try:
        cfg = dict(raw_config)
        cfg["mcmc"] = {**cfg.get("mcmc", {}), "seed": int(seed)}
        with open(os.path.join(tmp, "config.yaml"), "w") as fh:
            yaml.safe_dump(cfg, fh, sort_keys=False)
        with open(os.path.join(tmp, "seed.json"), "w") as fh:
            json.dump({"seed": int(seed), "chains": int(chains), "rng": RNG_ALGORITHM}, fh, indent=2)
            fh.write("\n")
        write_table(os.path.join(tmp, "rows.csv"), {"time": data.time_index, "kept": kept.astype(int)})
        write_dataset(os.path.join(tmp, "training_data.csv"), data,
                      data_options["time_column"], data_options["response_column"])
        d = os.path.join(tmp, "draws")
        os.makedirs(d)
        lead = {"chain": draws.chain, "iteration": draws.iteration}
        write_matrix(os.path.join(d, "beta.csv"), lead, ledger.column_labels(), draws.beta)
        write_matrix(os.path.join(d, "phi.csv"), lead, [f"lag{v}" for v in draws.lags], draws.phi)
        write_matrix(os.path.join(d, "sigma2.csv"), lead, ["sigma2"], draws.sigma2[:, None])
        write_matrix(os.path.join(d, "lambda.csv"), lead, list(draws.lambda_labels), draws.lambdas)
        rlead = {"chain": draws.residual_chain, "iteration": draws.residual_iteration}
        write_matrix(os.path.join(d, "eps.csv"), rlead, [f"t{v}" for v in filtered.time_index], draws.eps)
        write_matrix(os.path.join(d, "u.csv"), rlead,
                     [f"t{v}" for v in filtered.time_index[draws.target_rows]], draws.u)
        write_table(os.path.join(tmp, "summary.csv"), _summary(draws, ledger))
        names = list(draws.proposed)
        write_table(os.path.join(tmp, "acceptance.csv"), {
            "term": names,
            "accepted": [draws.accepted[n] for n in names],
            "proposed": [draws.proposed[n] for n in names],
            "rate": [draws.accepted[n] / draws.proposed[n] if draws.proposed[n] else np.nan for n in names],
        })
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    _swap_in(tmp, out)


def write_subdir(archive_path, name, tables):
    """Atomically (re)write ``archive_path/name`` from ``{file: columns}``."""
    target = os.path.join(archive_path, name)
    parent = os.path.dirname(target)
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".tmp-", dir=parent)
    try:
        for fname, cols in tables.items():
            if callable(cols):
                cols(os.path.join(tmp, fname))
            else:
                write_table(os.path.join(tmp, fname), cols)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    _swap_in(tmp, target)


def load_archive(path):
    """Read a fit archive back, rebuilding the design from the stored data."""
    cfg_path = os.path.join(path, "config.yaml")
    if not os.path.isfile(cfg_path):
        raise DataError(f"{path} is not a fit archive (no config.yaml)")
    with open(cfg_path) as fh:
        raw = yaml.safe_load(fh)
    spec, opts, protocol = parse_config(raw)
    data = load_dataset(os.path.join(path, "training_data.csv"), opts["time_column"],
                        opts["response_column"], 1, ("NaN",))
    filtered, _ = drop_incomplete_rows(data, spec.lag_set, spec.covariates)
    X, y, ledger = assemble_design(spec, filtered)
    d = os.path.join(path, "draws")
    _, lead, beta = read_matrix(os.path.join(d, "beta.csv"))
    _, _, phi = read_matrix(os.path.join(d, "phi.csv"))
    _, _, sigma2 = read_matrix(os.path.join(d, "sigma2.csv"))
    _, _, lam = read_matrix(os.path.join(d, "lambda.csv"))
    _, rlead, eps = read_matrix(os.path.join(d, "eps.csv"))
    ulab, _, u = read_matrix(os.path.join(d, "u.csv"))
    pos = {int(v): i for i, v in enumerate(filtered.time_index)}
    targets = np.array([pos[int(lab[1:])] for lab in ulab], dtype=np.intp)
    acc_header, acc_rows = read_table(os.path.join(path, "acceptance.csv"))
    accepted = {r[0]: int(r[1]) for r in acc_rows}
    proposed = {r[0]: int(r[2]) for r in acc_rows}
    draws = PosteriorDraws(
        beta, sigma2[:, 0], phi, lam, lead[:, 1], lead[:, 0], eps, u, rlead[:, 1], rlead[:, 0],
        ledger.lambda_labels, spec.lag_set.lags, targets, accepted, proposed,
    )
    return Archive(path, raw, spec, opts, protocol, data, filtered, X, y, ledger, draws)
