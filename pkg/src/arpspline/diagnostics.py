"""Posterior and forecast checks: edf, DIC, PIT, sharpness, ACF, residual
covariance and marginal effects."""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from . import basis as bs
from .design import assemble_prior_precision, lag_index
from .errors import ConfigurationError, DataError, DiagnosticsError

QUANTILES = (0.025, 0.5, 0.975)


def _summarise(x):
    q = np.quantile(x, QUANTILES)
    return {"mean": float(np.mean(x)), "sd": float(np.std(x, ddof=1)) if x.size > 1 else 0.0,
            "q025": float(q[0]), "q50": float(q[1]), "q975": float(q[2])}


@dataclass
class EdfReport:
    terms: tuple
    per_draw: np.ndarray     # (draws, terms)
    total: np.ndarray        # (draws,) trace of the full hat matrix

    def summary(self):
        rows = [dict(term=t, **_summarise(self.per_draw[:, j])) for j, t in enumerate(self.terms)]
        rows.append(dict(term="total", **_summarise(self.total)))
        return rows

    def __getitem__(self, term):
        return self.per_draw[:, self.terms.index(term)]


def hat_penalty(ledger, lambdas, fixed_precision=1e-6):
    """Penalty matrix of the hat matrix: ``lambda K`` blocks, zero for the intercept."""
    lam = assemble_prior_precision(ledger, lambdas, fixed_precision)
    s = ledger.intercept.columns
    lam[s, s] = 0.0
    return lam


def effective_df(draws, X, ledger, fixed_precision=1e-6, thin=1):
    """Per-draw traces of the hat-matrix blocks ``(X'X + Lambda)^{-1} X'X``.

    The diagonal is computed as ``1 - diag((X'X + Lambda)^{-1} Lambda)``, so
    unpenalised columns whose penalty column is zero get exactly 1.
    """
    X = np.asarray(X, dtype=np.float64)
    xtx = X.T @ X
    idx = np.arange(0, draws.n_draws, thin)
    per, total = np.empty((idx.size, len(ledger.blocks))), np.empty(idx.size)
    for r, s in enumerate(idx):
        lam = hat_penalty(ledger, draws.lambdas[s], fixed_precision)
        try:
            cf = cho_factor(xtx + lam, lower=True, check_finite=False)
        except LinAlgError as exc:
            raise DiagnosticsError(f"X'X + Lambda is singular at draw {s}") from exc
        diag = 1.0 - np.diag(cho_solve(cf, lam, check_finite=False))
        per[r] = [diag[b.columns].sum() for b in ledger.blocks]
        total[r] = diag.sum()
    return EdfReport(tuple(b.name for b in ledger.blocks), per, total)


def _deviance(beta, phi, sigma2, X, y, lags):
    eps = y[None, :] - beta @ X.T
    u = eps[:, lags.targets]
    for j in range(lags.lag_rows.shape[1]):
        u = u - phi[:, j:j + 1] * eps[:, lags.lag_rows[:, j]]
    n = u.shape[1]
    return n * np.log(2 * np.pi * sigma2) + (u ** 2).sum(axis=1) / sigma2


def dic(draws, X, y, lag_set, time_index=None, chunk=500):
    """Deviance information criterion from the innovations likelihood.

    Returns ``(DIC, p_D)`` with ``p_D = mean deviance - deviance at the
    posterior mean`` and ``DIC = D(mean) + 2 p_D``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != y.shape[0] or X.shape[1] != draws.beta.shape[1]:
        raise DataError("design, response and draws do not line up")
    t = np.arange(y.shape[0]) if time_index is None else time_index
    lags = lag_index(t, lag_set)
    devs = np.concatenate([
        _deviance(draws.beta[s:s + chunk], draws.phi[s:s + chunk], draws.sigma2[s:s + chunk], X, y, lags)
        for s in range(0, draws.n_draws, chunk)
    ])
    d_hat = _deviance(draws.beta.mean(0)[None], draws.phi.mean(0)[None],
                      np.array([draws.sigma2.mean()]), X, y, lags)[0]
    p_d = devs.mean() - d_hat
    return float(d_hat + 2 * p_d), float(p_d)


@dataclass
class AcfResult:
    values: np.ndarray
    band: float

    @property
    def lags(self):
        return np.arange(self.values.shape[0])


def acf(series, max_lag):
    """Sample autocorrelation to ``max_lag`` with pairwise handling of NaN."""
    x = np.asarray(series, dtype=np.float64)
    ok = np.isfinite(x)
    n = int(ok.sum())
    if n < max_lag + 2:
        raise DiagnosticsError(f"need at least {max_lag + 2} finite values, got {n}")
    d = np.where(ok, x - x[ok].mean(), 0.0)
    c0 = (d ** 2).sum() / n
    if c0 == 0:
        raise DiagnosticsError("series has zero variance")
    vals = np.array([(d[:x.size - k] * d[k:]).sum() / n for k in range(max_lag + 1)]) / c0
    return AcfResult(vals, 1.96 / np.sqrt(n))


@dataclass
class PitResult:
    values: np.ndarray
    time_index: np.ndarray
    horizon: np.ndarray
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    acf: AcfResult = None


def pit_values(samples, observed):
    """``F(v) = #(samples <= v) / N`` per column."""
    return (np.asarray(samples) <= np.asarray(observed)[None, :]).mean(axis=0)


def pit(forecasts, observed=None, bins=20, window=48, min_samples=100):
    """Probability integral transform of each observed value under its forecast.

    Records with a missing observation are dropped.
    """
    obs = forecasts.observed if observed is None else np.asarray(observed, dtype=np.float64)
    if obs is None or obs.shape[0] != forecasts.n_records:
        raise DataError("observed values do not match the forecast records")
    if forecasts.samples.shape[0] < min_samples:
        raise DataError(f"need at least {min_samples} predictive samples per forecast")
    ok = np.isfinite(obs)
    vals = pit_values(forecasts.samples[:, ok], obs[ok])
    counts, edges = np.histogram(vals, bins=bins, range=(0.0, 1.0))
    horizon = forecasts.horizon[ok]
    order = np.lexsort((forecasts.time_index[ok], horizon))
    a = None
    n_lag = min(2 * window, vals.size - 2)
    if n_lag >= 1 and np.ptp(vals) > 0:
        a = acf(vals[order], n_lag)
    return PitResult(vals, forecasts.time_index[ok], horizon, counts, edges, a)


@dataclass
class Sharpness:
    variance: np.ndarray
    summary: dict = field(default_factory=dict)


def sharpness(forecasts, bins=30):
    """Variance implied by each 95% interval: ``((q975 - q025) / 2 / 1.96)^2``."""
    lo, hi = np.quantile(forecasts.samples, (0.025, 0.975), axis=0)
    var = ((hi - lo) / 2.0 / 1.96) ** 2
    dens, edges = np.histogram(var, bins=bins, density=True)
    summary = _summarise(var) if var.size else {}
    summary.update(density=dens, edges=edges)
    return Sharpness(var, summary)


def interval_variance(width):
    return (np.asarray(width) / 2.0 / 1.96) ** 2


def residual_covariance(draws, window):
    """Across-draw covariance matrices of stored ``eps`` and ``u`` on ``window``.

    ``window`` is a ``(start, stop)`` pair of row positions in the fitted
    data; every row in it must be a likelihood target.
    """
    start, stop = window
    n_rows = draws.eps.shape[1]
    if not 0 <= start < stop <= n_rows:
        raise DataError(f"window {window} outside the stored range [0, {n_rows})")
    targets = draws.target_rows
    if targets is None:
        targets = np.arange(n_rows - draws.u.shape[1], n_rows)
    pos = np.searchsorted(targets, np.arange(start, stop))
    if np.any(pos >= targets.size) or np.any(targets[np.minimum(pos, targets.size - 1)] != np.arange(start, stop)):
        raise DataError("window includes rows without innovations")
    if draws.eps.shape[0] < 2:
        raise DataError("need at least two stored residual draws")
    c_eps = np.atleast_2d(np.cov(draws.eps[:, start:stop], rowvar=False))
    c_u = np.atleast_2d(np.cov(draws.u[:, pos], rowvar=False))
    return c_eps, c_u


def mean_abs_offdiag(c):
    c = np.asarray(c)
    m = c.shape[0]
    if m < 2:
        return 0.0
    return float((np.abs(c).sum() - np.abs(np.diag(c)).sum()) / (m * (m - 1)))


@dataclass
class MarginalEffect:
    term: str
    covariates: tuple
    grid: tuple              # one 1-D array per axis
    mean: np.ndarray         # shape of the grid, axis order as ``covariates``
    lower: np.ndarray
    upper: np.ndarray

    def table(self):
        mesh = np.meshgrid(*self.grid, indexing="ij")
        cols = {c: g.ravel() for c, g in zip(self.covariates, mesh)}
        cols.update(mean=self.mean.ravel(), q025=self.lower.ravel(), q975=self.upper.ravel())
        return cols


def _axis_grid(mb, resolution):
    m = mb.spec
    if m.kind == "factor":
        return np.arange(1.0, m.num_levels + 1)
    lo, hi = mb.data_range if mb.data_range is not None else mb.grid_range
    return np.linspace(lo, hi, resolution)


def _summarise_effect(basis_values, beta, offset, chunk=256):
    n = basis_values.shape[0]
    mean, lo, hi = np.empty(n), np.empty(n), np.empty(n)
    for s in range(0, n, chunk):
        eff = basis_values[s:s + chunk] @ beta.T + offset[None, :]
        mean[s:s + chunk] = eff.mean(axis=1)
        lo[s:s + chunk], hi[s:s + chunk] = np.quantile(eff, (0.025, 0.975), axis=1)
    return mean, lo, hi


def marginal_effect(draws, term, ledger, resolution=50, points=None, average_over=None,
                    include_intercept=False):
    """Posterior partial effect of ``term`` on an even grid.

    Parameters
    ----------
    points : sequence of arrays, optional
        Explicit grid values per covariate, overriding ``resolution``.
    average_over : str, optional
        For tensor terms, a covariate to average the effect over.
    include_intercept : bool
        Add the intercept draw to every effect sample.
    """
    block = ledger[term]
    if block.kind == "intercept":
        raise ConfigurationError(f"term {term!r} has no covariate")
    margins = block.margins
    covs = tuple(m.spec.covariate for m in margins)
    if points is not None:
        grids = [np.asarray(p, dtype=np.float64) for p in points]
    else:
        grids = [_axis_grid(mb, resolution) for mb in margins]
    if len(grids) != len(margins):
        raise ConfigurationError(f"term {term!r} needs {len(margins)} grid axes")
    beta = draws.beta[:, block.columns]
    offset = draws.beta[:, ledger.intercept.start] if include_intercept else np.zeros(draws.n_draws)
    if block.kind != "tensor":
        vals = block.evaluate({covs[0]: grids[0]})
        mean, lo, hi = _summarise_effect(vals, beta, offset)
        return MarginalEffect(term, covs, (grids[0],), mean, lo, hi)
    mesh = np.meshgrid(*grids, indexing="ij")
    b1 = margins[0].evaluate(mesh[0].ravel())
    b2 = margins[1].evaluate(mesh[1].ravel())
    vals = bs.tensor_basis(b1, b2).values
    shape = mesh[0].shape
    if average_over is None:
        mean, lo, hi = _summarise_effect(vals, beta, offset)
        return MarginalEffect(term, covs, tuple(grids), mean.reshape(shape), lo.reshape(shape),
                              hi.reshape(shape))
    if average_over not in covs:
        raise ConfigurationError(f"term {term!r} has no covariate {average_over!r}")
    ax = covs.index(average_over)
    avg = vals.reshape(shape + (-1,)).mean(axis=ax)
    keep = 1 - ax
    mean, lo, hi = _summarise_effect(avg, beta, offset)
    return MarginalEffect(term, (covs[keep],), (grids[keep],), mean, lo, hi)
