"""Posterior-predictive forecasts with autoregressive error propagation.

Per retained draw the errors are run forward with that draw's AR
coefficients and innovation variance, starting from the draw's residuals
``y - X beta`` on a history window; the forecast is the draw's mean
``X_future beta`` plus the propagated error.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .design import assemble_design, drop_incomplete_rows, transform_response
from .errors import ArpsplineError, DataError, ShapeError
from .numerics import rng_stream
from .sampler import run_gibbs


@dataclass
class ForecastDistribution:
    """Predictive samples, one column per forecast record.

    ``samples`` and ``mu`` have shape ``(n_draws, n_records)``; the error
    component is ``samples - mu``.
    """

    time_index: np.ndarray
    samples: np.ndarray
    mu: np.ndarray
    horizon: np.ndarray
    issued: np.ndarray = None
    observed: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def eps(self):
        return self.samples - self.mu

    @property
    def n_records(self):
        return self.samples.shape[1]

    def quantiles(self, q=(0.025, 0.5, 0.975)):
        return np.quantile(self.samples, q, axis=0)

    def summary(self):
        lo, med, hi = self.quantiles()
        return {"mean": self.samples.mean(axis=0), "q025": lo, "median": med, "q975": hi}

    def select(self, mask):
        mask = np.asarray(mask)
        pick = lambda a: None if a is None else a[..., mask]  # noqa: E731
        return replace(
            self, time_index=self.time_index[mask], samples=self.samples[:, mask],
            mu=self.mu[:, mask], horizon=self.horizon[mask], issued=pick(self.issued),
            observed=pick(self.observed),
        )

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        cat = lambda name, ax=0: np.concatenate([getattr(p, name) for p in parts], axis=ax)  # noqa: E731
        has = lambda name: all(getattr(p, name) is not None for p in parts)  # noqa: E731
        return cls(
            cat("time_index"), cat("samples", 1), cat("mu", 1), cat("horizon"),
            cat("issued") if has("issued") else None,
            cat("observed") if has("observed") else None,
            dict(parts[0].meta) if parts else {},
        )


@dataclass(frozen=True)
class RollingProtocol:
    """Daily forecast runs with periodic refits.

    Times are in steps of the data's time index; ``steps_per_day`` steps
    make a day. ``issue_time`` is the step of the day from which residuals
    are no longer available, so a run covering ``[M, M + forecast_window)``
    for a day starting at ``M`` only sees observations before
    ``M - steps_per_day + issue_time``.
    """

    refit_interval: float = 20       # days; math.inf never refits
    forecast_window: int = 48
    residual_history: int = 168
    issue_time: int = 12
    steps_per_day: int = 24
    start: int = None                # first run's day start; default after one refit interval
    origin: int = None               # a day start; default first time in the data

    def __post_init__(self):
        if self.forecast_window < 1:
            raise ValueError("forecast window must be at least one step")
        if not 0 <= self.issue_time <= self.steps_per_day:
            raise ValueError("issue time must lie within the day")
        if not self.refit_interval > 0:
            raise ValueError("refit interval must be positive")


def propagate_errors(phi, sigma2, history, lags, n_steps, rng):
    """Run the AR recursion forward from per-draw residual histories.

    Parameters
    ----------
    phi : ndarray, shape (S, p)
    sigma2 : ndarray, shape (S,)
    history : ndarray, shape (S, L)
        Residuals before the first forecast step, oldest first. NaN
        entries are bridged by the recursion with fresh innovations.
    lags : sequence of int
    n_steps : int
    rng : numpy.random.Generator

    Returns
    -------
    path : ndarray, shape (S, L + n_steps)
        History with gaps filled, followed by the forecast errors.
    u : ndarray, shape (S, L + n_steps)
        Innovations; only entries that were filled are used.
    """
    history = np.asarray(history, dtype=np.float64)
    if history.ndim == 1:
        history = np.broadcast_to(history, (phi.shape[0], history.shape[0]))
    s, n_hist = history.shape
    max_lag = max(lags) if len(lags) else 0
    if n_hist < max_lag:
        raise DataError(f"residual history of {n_hist} steps is shorter than the largest lag {max_lag}")
    if np.isnan(history[:, :max_lag]).any():
        raise DataError(f"the first {max_lag} steps of the residual history must be observed")
    path = np.full((s, n_hist + n_steps), np.nan)
    path[:, :n_hist] = history
    u = rng.standard_normal(path.shape) * np.sqrt(sigma2)[:, None]
    _kernels.ar_fill(path, np.ascontiguousarray(phi, dtype=np.float64),
                     np.asarray(lags, dtype=np.intp), u)
    return path, u


def innovations(path, phi, lags):
    """Apply ``1 - sum_j phi_j L^{lag_j}`` to each row of ``path``.

    The first ``max(lags)`` columns are returned as NaN.
    """
    path = np.asarray(path, dtype=np.float64)
    out = path.copy()
    m = max(lags) if len(lags) else 0
    for j, lag in enumerate(lags):
        out[:, m:] -= phi[:, j:j + 1] * path[:, m - lag:path.shape[1] - lag]
    out[:, :m] = np.nan
    return out


def forecast(draws, future_X, residual_history, lag_set, horizon=None, rng=None,
             time_index=None):
    """Sequential predictive samples for the rows of ``future_X``.

    ``residual_history`` is ``(S, L)`` (or ``(L,)`` shared by all draws) and
    ends immediately before the first forecast step.
    """
    future_X = np.atleast_2d(np.asarray(future_X, dtype=np.float64))
    if future_X.shape[1] != draws.beta.shape[1]:
        raise ShapeError(
            f"future design has {future_X.shape[1]} columns, the fit has {draws.beta.shape[1]}"
        )
    if horizon is None:
        horizon = future_X.shape[0]
    if horizon > future_X.shape[0]:
        raise ShapeError(f"horizon {horizon} exceeds the {future_X.shape[0]} future rows")
    rng = rng_stream(0, 0) if rng is None else rng
    future_X = future_X[:horizon]
    path, u = propagate_errors(draws.phi, draws.sigma2, residual_history, lag_set.lags, horizon, rng)
    eps = path[:, path.shape[1] - horizon:]
    mu = draws.beta @ future_X.T
    steps = np.arange(1, horizon + 1)
    times = steps if time_index is None else np.asarray(time_index)[:horizon]
    return ForecastDistribution(
        times, mu + eps, mu, steps.astype(str), meta={"path": path, "u": u},
    )


def residual_history(draws, ledger, data, times, transform="identity"):
    """Per-draw residuals ``y - X beta`` at ``times`` (NaN where unobserved)."""
    times = np.asarray(times, dtype=np.int64)
    out = np.full((draws.n_draws, times.shape[0]), np.nan)
    pos = np.searchsorted(data.time_index, times)
    pos = np.clip(pos, 0, max(len(data) - 1, 0))
    present = (len(data) > 0) & (data.time_index[pos] == times)
    if not present.any():
        return out
    rows = data.subset(pos[present])
    y = transform_response(rows.response, transform)
    ok = np.isfinite(y)
    for c in ledger_covariates(ledger):
        ok &= np.isfinite(rows.covariates[c])
    if ok.any():
        rows = rows.subset(ok)
        X = ledger.design(rows.covariates, len(rows))
        idx = np.flatnonzero(present)[ok]
        out[:, idx] = y[ok][None, :] - draws.beta @ X.T
    return out


def ledger_covariates(ledger):
    out = []
    for b in ledger.blocks:
        out += [m.spec.covariate for m in b.margins if m.spec.covariate not in out]
    return out


def fit(spec, data, rng=None):
    """Filter ``data`` and run one chain; returns ``(draws, ledger)``."""
    filtered, _ = drop_incomplete_rows(data, spec.lag_set, spec.covariates)
    design = assemble_design(spec, filtered)
    return run_gibbs(spec, filtered, rng=rng, design=design), design[2]


def future_design(ledger, data, times):
    """Design rows at ``times``; NaN rows where covariates are unavailable."""
    X = np.full((times.shape[0], ledger.n_columns), np.nan)
    pos = np.clip(np.searchsorted(data.time_index, times), 0, len(data) - 1)
    present = data.time_index[pos] == times
    rows = data.subset(pos[present])
    ok = np.ones(len(rows), dtype=bool)
    for c in ledger_covariates(ledger):
        ok &= np.isfinite(rows.covariates[c])
    if ok.any():
        sub = rows.subset(ok)
        X[np.flatnonzero(present)[ok]] = ledger.design(sub.covariates, len(sub))
    return X


def rolling_forecast_study(spec, data, protocol=RollingProtocol(), seed=0, initial_fit=None,
                           pair_horizons=True):
    """Daily 48-hour forecasts with refits; keeps targets seen at both horizons.

    Each refit is a cold start on all observations before the run's issue
    point. ``initial_fit`` may supply ``(draws, ledger)`` for the first run.
    Returns a :class:`ForecastDistribution` whose records are labelled
    ``"24h"`` (first day of a run) and ``"48h"`` (second day). With
    ``pair_horizons`` targets lacking either label are dropped.
    """
    S = protocol.steps_per_day
    t = data.time_index
    origin = int(t[0]) if protocol.origin is None else int(protocol.origin)
    refit_steps = protocol.refit_interval * S
    start = protocol.start
    if start is None:
        start = origin + int(protocol.refit_interval * S) if math.isfinite(refit_steps) else None
        if start is None:
            raise DataError("an explicit start is needed when the model is never refitted")
    if (start - origin) % S:
        raise DataError(f"start time {start} is not at the start of a day")
    W, L = protocol.forecast_window, protocol.residual_history
    if L < spec.lag_set.max_lag:
        raise DataError("residual history is shorter than the largest lag")
    lead = S - protocol.issue_time
    runs = np.arange(start, int(t[-1]) - W + 2, S)
    if runs.size == 0:
        raise DataError("data too short for a single forecast window")

    current, last_refit, n_refits = initial_fit, None, 0
    y_all = transform_response(data.response, spec.response_transform)
    obs_lookup = dict(zip(t.tolist(), y_all.tolist()))
    parts = []
    for k, m in enumerate(runs):
        issue = int(m) - lead
        if current is None or (last_refit is not None and m - last_refit >= refit_steps):
            train = data.subset(t < issue)
            try:
                current = fit(spec, train, rng=rng_stream(seed, (1, n_refits)))
            except ArpsplineError as exc:
                raise type(exc)(f"refit at time {issue} failed: {exc}") from exc
            n_refits += 1
            last_refit = m
        elif last_refit is None:
            last_refit = m
        draws, ledger = current
        hist_times = np.arange(issue - L, issue)
        hist = residual_history(draws, ledger, data.subset(t < issue), hist_times, spec.response_transform)
        n_steps = int(m) + W - issue
        path, _ = propagate_errors(draws.phi, draws.sigma2, hist, spec.lag_set.lags, n_steps,
                                   rng_stream(seed, (2, k)))
        times = np.arange(int(m), int(m) + W)
        X = future_design(ledger, data, times)
        keep = np.all(np.isfinite(X), axis=1)
        mu = draws.beta @ X[keep].T
        eps = path[:, path.shape[1] - W:][:, keep]
        label = np.where(times - m < S, "24h", "48h")[keep]
        obs = np.array([obs_lookup.get(int(v), np.nan) for v in times[keep]])
        parts.append(ForecastDistribution(
            times[keep], mu + eps, mu, label, np.full(keep.sum(), issue), obs,
        ))
    out = ForecastDistribution.concat(parts)
    out.meta = {"refits": n_refits, "runs": int(runs.size)}
    if not pair_horizons:
        return out
    both = set(out.time_index[out.horizon == "24h"].tolist()) & set(out.time_index[out.horizon == "48h"].tolist())
    out = out.select(np.isin(out.time_index, list(both)))
    out.meta = {"refits": n_refits, "runs": int(runs.size)}
    return out
