"""Blocked Gibbs sampler for the additive model with autoregressive errors.

Error convention: ``eps[i] = sum_j phi[j] * eps[i - lag_j] + u[i]``, so the
lag-transformed data are ``y* = y - sum_j phi[j] * L^{lag_j} y`` and the
same for every column of ``X``.

One iteration draws, in order: beta (then re-centres the smooth blocks),
phi, sigma^2 and the smoothing parameters. Tensor-product terms update their
two smoothing parameters jointly with a random-walk Metropolis step on the
log scale; every other penalised term has a conjugate Gamma update.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import numerics as nm
from .design import (
    assemble_design, assemble_prior_precision, lag_index, LagIndex,
)
from .errors import ArpsplineError, DataError, DomainError, SamplerError

ACCEPT_RANGE = (0.05, 0.95)


class TuningWarning(UserWarning):
    """Metropolis acceptance rate outside the useful range."""


@dataclass
class ChainState:
    beta: np.ndarray
    sigma2: float
    phi: np.ndarray
    lambdas: np.ndarray
    eps: np.ndarray
    u: np.ndarray

    def to_dict(self):
        return {
            "beta": self.beta.tolist(), "sigma2": float(self.sigma2),
            "phi": self.phi.tolist(), "lambdas": self.lambdas.tolist(),
        }


@dataclass
class GibbsWorkspace:
    """Fixed data for one chain plus the lag-transformed copies."""

    X: np.ndarray
    y: np.ndarray
    lags: LagIndex
    x_star: np.ndarray = None
    y_star: np.ndarray = None

    def update(self, phi):
        self.x_star, self.y_star = _lag_apply(self.X, self.y, phi, self.lags)

    def lagged_residuals(self, eps):
        """Residuals at the targets and the matrix E of their lagged values."""
        return eps[self.lags.targets], eps[self.lags.lag_rows]


@dataclass
class PosteriorDraws:
    beta: np.ndarray
    sigma2: np.ndarray
    phi: np.ndarray
    lambdas: np.ndarray
    iteration: np.ndarray
    chain: np.ndarray
    eps: np.ndarray
    u: np.ndarray
    residual_iteration: np.ndarray
    residual_chain: np.ndarray
    lambda_labels: tuple = ()
    lags: tuple = ()
    target_rows: np.ndarray = None   # rows of the fitted data that index the columns of u
    accepted: dict = field(default_factory=dict)
    proposed: dict = field(default_factory=dict)

    @property
    def n_draws(self):
        return self.beta.shape[0]

    def acceptance_rates(self):
        return {k: self.accepted[k] / self.proposed[k] for k in self.proposed if self.proposed[k]}

    @classmethod
    def merge(cls, parts):
        parts = list(parts)
        first = parts[0]
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
        acc = {k: sum(p.accepted[k] for p in parts) for k in first.accepted}
        prop = {k: sum(p.proposed[k] for p in parts) for k in first.proposed}
        return cls(
            cat("beta"), cat("sigma2"), cat("phi"), cat("lambdas"), cat("iteration"),
            cat("chain"), cat("eps"), cat("u"), cat("residual_iteration"),
            cat("residual_chain"), first.lambda_labels, first.lags, first.target_rows, acc, prop,
        )


def _lag_apply(X, y, phi, lags):
    t, rows = lags.targets, lags.lag_rows
    xs, ys = X[t].copy(), y[t].copy()
    for j in range(rows.shape[1]):
        xs -= phi[j] * X[rows[:, j]]
        ys -= phi[j] * y[rows[:, j]]
    return xs, ys


def lag_transform(X, y, phi, lag_set, time_index=None):
    """Apply ``1 - sum_j phi_j L^{lag_j}`` to the rows of ``X`` and ``y``.

    Without ``time_index`` rows are taken as consecutive and the first
    ``max(lag)`` rows are lost. With it, lags are found by time arithmetic
    and only rows whose lags are all present are returned.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if lag_set.max_lag >= n:
        raise DataError(f"lag {lag_set.max_lag} exceeds the series length {n}")
    if time_index is None:
        time_index = np.arange(n)
    return _lag_apply(X, y, np.asarray(phi, dtype=np.float64), lag_index(time_index, lag_set))


def sample_beta(x_star, y_star, a0, beta_mean, sigma2, rng):
    """Draw from N(Lb (A0 b0 + X*'y*), sigma2 Lb) with Lb = (A0 + X*'X*)^-1."""
    k = a0.shape[0]
    b0 = np.broadcast_to(np.asarray(beta_mean, dtype=np.float64), (k,))
    prec = (a0 + x_star.T @ x_star) / sigma2
    rhs = (a0 @ b0 + x_star.T @ y_star) / sigma2
    return nm.sample_mvn_precision(rhs, prec, rng)


def center_spline_blocks(beta, X, ledger):
    """Shift each centred block so its data-summed effect is zero.

    The shift is moved onto the intercept, so for blocks whose rows sum to
    one the fitted values are unchanged.
    """
    beta = np.array(beta, dtype=np.float64)
    i0 = ledger.intercept.start
    for b in ledger.blocks:
        if not b.centered:
            continue
        xb = X[:, b.columns]
        denom = xb.sum()
        if denom == 0:
            raise SamplerError(f"cannot centre block {b.name!r}: its columns sum to zero")
        delta = (xb @ beta[b.columns]).sum() / denom
        beta[b.columns] -= delta
        beta[i0] += delta
    return beta


def sample_sigma2(y_star, x_star, beta, a0, beta_mean, v0, delta0, rng):
    """Inverse-gamma update; with ``v0 = -k`` the shape is ``n_targets / 2``."""
    n_t, k = x_star.shape
    diff = beta - beta_mean
    q_beta = float(diff @ a0 @ diff)
    resid = y_star - x_star @ beta
    shape = 0.5 * (n_t + v0 + k)
    scale = 0.5 * (delta0 + q_beta + float(resid @ resid))
    if not shape > 0 or not scale > 0:
        raise SamplerError(f"degenerate sigma^2 conditional (shape={shape}, scale={scale})")
    return float(nm.sample_inverse_gamma(shape, scale, rng))


def is_stationary(phi, lags):
    """Root check: all roots of ``1 - sum phi_j z^lag_j`` outside the unit circle."""
    m = max(lags)
    comp = np.zeros((m, m))
    for p, lag in zip(phi, lags):
        comp[0, lag - 1] = p
    comp[1:, :-1] = np.eye(m - 1)
    return bool(np.max(np.abs(np.linalg.eigvals(comp))) < 1)


def sample_phi(eps_target, e_mat, sigma2, phi_precision, phi_mean, rng,
               max_rejections=1000, strict=False, lags=None):
    """Draw phi from its normal conditional restricted to ``|sum(phi)| < 1``."""
    p = e_mat.shape[1]
    q0 = np.eye(p) * phi_precision if np.ndim(phi_precision) == 0 else np.asarray(phi_precision)
    m0 = np.broadcast_to(np.asarray(phi_mean, dtype=np.float64), (p,))
    prec = q0 + e_mat.T @ e_mat / sigma2
    rhs = q0 @ m0 + e_mat.T @ eps_target / sigma2
    factor = nm.cholesky(prec)
    for _ in range(max_rejections):
        phi = nm.sample_mvn_precision(rhs, prec, rng, factor=factor)
        if abs(phi.sum()) < 1 and (not strict or is_stationary(phi, lags)):
            return phi
    mean = factor.solve(rhs)
    raise SamplerError(
        f"{max_rejections} consecutive AR proposals violated the stationarity "
        f"constraint (proposal mean {mean.tolist()})"
    )


def sample_lambda_univariate(beta_block, K, b, rng, a=1.0):
    """Conjugate update Gamma(d/2 + a, b + beta'K beta / 2) (shape, rate)."""
    K = np.asarray(getattr(K, "values", K))
    d = beta_block.shape[0]
    rate = b + 0.5 * float(beta_block @ K @ beta_block)
    return float(nm.sample_gamma(0.5 * d + a, rate, rng))


def tensor_log_density(lam1, lam2, beta_block, pair, b, a=1.0):
    """Log of the joint conditional of a tensor term's two smoothing parameters,
    up to a constant, on the ``(lambda1, lambda2)`` scale."""
    if not (lam1 > 0 and lam2 > 0):
        return -np.inf
    prec = pair.combined(lam1, lam2)
    logdet = nm.log_det_from_factor(nm.cholesky(prec))
    quad = float(beta_block @ prec @ beta_block)
    return (0.5 * logdet + (a - 1.0) * (np.log(lam1) + np.log(lam2))
            - 0.5 * quad - b * (lam1 + lam2))


def sample_lambda_tensor(beta_block, pair, b, step, current, rng, a=1.0):
    """Random-walk Metropolis on ``log(lambda)``; returns ``((l1, l2), accepted)``."""
    l1, l2 = current
    if not (l1 > 0 and l2 > 0):
        raise DomainError("current smoothing parameters must be positive")
    z = rng.standard_normal(2)
    n1, n2 = l1 * np.exp(step * z[0]), l2 * np.exp(step * z[1])
    log_u = np.log(rng.uniform())
    cur = tensor_log_density(l1, l2, beta_block, pair, b, a)
    new = tensor_log_density(n1, n2, beta_block, pair, b, a)
    if not np.isfinite(cur) or np.isnan(new):
        raise SamplerError("non-finite smoothing-parameter log density")
    # Jacobian of the log transform
    ratio = (new + np.log(n1) + np.log(n2)) - (cur + np.log(l1) + np.log(l2))
    if log_u < ratio:
        return (n1, n2), True
    return (l1, l2), False


def _initial_state(ws, ledger):
    k = ws.X.shape[1]
    beta = np.zeros(k)
    eps = ws.y - ws.X @ beta
    p = ws.lags.lag_rows.shape[1]
    phi = np.zeros(p)
    sigma2 = float(np.var(ws.y[ws.lags.targets]))
    if not sigma2 > 0:
        sigma2 = 1.0
    lambdas = np.ones(ledger.n_lambdas)
    et, _ = ws.lagged_residuals(eps)
    return ChainState(beta, sigma2, phi, lambdas, eps, et.copy())


def gibbs_step(state, ws, ledger, spec, rng, iteration=None, callback=None):
    """One full sweep; mutates and returns ``state``."""
    pr, mc = spec.priors, spec.mcmc
    k = ws.X.shape[1]
    v0 = -k if pr.v0 is None else pr.v0

    a0 = assemble_prior_precision(ledger, state.lambdas, pr.fixed_precision)
    ws.update(state.phi)
    raw = sample_beta(ws.x_star, ws.y_star, a0, pr.beta_mean, state.sigma2, rng)
    state.beta = center_spline_blocks(raw, ws.X, ledger)
    state.eps = ws.y - ws.X @ state.beta

    et, e_mat = ws.lagged_residuals(state.eps)
    if e_mat.shape[1]:
        state.phi = sample_phi(
            et, e_mat, state.sigma2, pr.phi_precision, pr.phi_mean, rng,
            mc.max_phi_rejections, mc.strict_stationarity, spec.lag_set.lags,
        )
    state.u = et - e_mat @ state.phi
    ws.update(state.phi)

    beta_mean = np.broadcast_to(np.asarray(pr.beta_mean, dtype=np.float64), (k,))
    state.sigma2 = sample_sigma2(ws.y_star, ws.x_star, state.beta, a0, beta_mean, v0, pr.delta0, rng)

    accepted = {}
    lambdas = state.lambdas.copy()
    for b in ledger.blocks:
        if not b.penalised:
            continue
        beta_b = state.beta[b.columns]
        if b.kind == "tensor":
            i1, i2 = b.lambda_index
            (lambdas[i1], lambdas[i2]), accepted[b.name] = sample_lambda_tensor(
                beta_b, b.penalties[0], b.gamma_rate[0], mc.mh_step,
                (lambdas[i1], lambdas[i2]), rng, pr.gamma_shape,
            )
        else:
            lambdas[b.lambda_index[0]] = sample_lambda_univariate(
                beta_b, b.penalties[0], b.gamma_rate[0], rng, pr.gamma_shape
            )
    state.lambdas = lambdas
    if callback is not None:
        callback(iteration, state, {"beta_raw": raw, "accepted": accepted})
    return state, accepted


def run_gibbs(spec, data, rng=None, chain=0, callback=None, design=None):
    """Run one chain on pre-filtered ``data``.

    ``rng`` defaults to stream ``chain`` of ``spec.mcmc.seed``. ``callback``
    is called after every sweep with ``(iteration, state, info)``.
    ``design`` may carry a precomputed ``(X, y, ledger)``.
    """
    if rng is None:
        rng = nm.rng_stream(spec.mcmc.seed, chain)
    X, y, ledger = design if design is not None else assemble_design(spec, data)
    lags = lag_index(data.time_index, spec.lag_set)
    if lags.n_targets == 0:
        raise DataError("no rows have all their lags present")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise DataError("data must be filtered for missing values before sampling")
    ws = GibbsWorkspace(X, y, lags)
    mc = spec.mcmc
    state = _initial_state(ws, ledger)

    n_keep = mc.iterations - mc.burn_in
    n_res = len(range(0, n_keep, mc.residual_thin))
    k, p = X.shape[1], spec.lag_set.p
    out = dict(
        beta=np.empty((n_keep, k)), sigma2=np.empty(n_keep), phi=np.empty((n_keep, p)),
        lambdas=np.empty((n_keep, ledger.n_lambdas)), eps=np.empty((n_res, X.shape[0])),
        u=np.empty((n_res, lags.n_targets)),
    )
    res_iter = []
    tensors = [b.name for b in ledger.blocks if b.kind == "tensor"]
    acc = dict.fromkeys(tensors, 0)
    prop = dict.fromkeys(tensors, 0)
    for it in range(mc.iterations):
        last_good = replace(state)   # fields are rebound, never mutated in place
        try:
            state, accepted = gibbs_step(state, ws, ledger, spec, rng, it, callback)
        except ArpsplineError as exc:
            msg = str(exc) if isinstance(exc, SamplerError) else f"{type(exc).__name__}: {exc}"
            raise SamplerError(msg, iteration=it, state=last_good) from exc
        if it < mc.burn_in:
            continue
        for name, ok in accepted.items():
            acc[name] += int(ok)
            prop[name] += 1
        s = it - mc.burn_in
        out["beta"][s] = state.beta
        out["sigma2"][s] = state.sigma2
        out["phi"][s] = state.phi
        out["lambdas"][s] = state.lambdas
        if s % mc.residual_thin == 0:
            r = s // mc.residual_thin
            out["eps"][r] = state.eps
            out["u"][r] = state.u
            res_iter.append(it)

    for name in tensors:
        rate = acc[name] / prop[name] if prop[name] else float("nan")
        if not ACCEPT_RANGE[0] < rate < ACCEPT_RANGE[1]:
            warnings.warn(
                f"smoothing-parameter acceptance rate {rate:.3f} for term {name!r} is outside "
                f"{ACCEPT_RANGE}; consider changing the MH step", TuningWarning, stacklevel=2,
            )
    iters = np.arange(mc.burn_in, mc.iterations)
    res_iter = np.asarray(res_iter, dtype=np.int64)
    return PosteriorDraws(
        out["beta"], out["sigma2"], out["phi"], out["lambdas"], iters,
        np.full(n_keep, chain), out["eps"], out["u"], res_iter,
        np.full(res_iter.shape[0], chain), ledger.lambda_labels, spec.lag_set.lags, lags.targets, acc, prop,
    )


def run_chains(spec, data, n_chains=1, max_workers=None):
    """Run ``n_chains`` independent chains (streams 0..n-1) and merge them."""
    design = assemble_design(spec, data)
    if n_chains == 1:
        return run_gibbs(spec, data, chain=0, design=design)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(run_gibbs, spec, data, None, c, None, design) for c in range(n_chains)]
        return PosteriorDraws.merge(f.result() for f in futures)
