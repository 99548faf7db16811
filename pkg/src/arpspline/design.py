"""From a declarative model description and a dataset to ``X``, ``y`` and
the block ledger that the sampler and diagnostics work from."""

from dataclasses import dataclass, field, replace

import numpy as np

from . import basis as bs
from .errors import ConfigurationError, DataError, DomainError, ShapeError

TERM_KINDS = ("bspline", "cyclic_bspline", "tensor", "thin_plate", "factor", "fourier", "intercept")
MARGIN_KINDS = ("bspline", "cyclic_bspline", "thin_plate")
DEFAULT_FIXED_PRECISION = 1e-6


@dataclass(frozen=True)
class Dataset:
    time_index: np.ndarray
    response: np.ndarray
    covariates: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.time_index)
        if t.ndim != 1:
            raise ShapeError("time index must be one-dimensional")
        if t.size and not np.issubdtype(t.dtype, np.integer):
            if not np.all(t == np.round(t)):
                raise DataError("time index must be integer valued")
        t = t.astype(np.int64)
        if np.any(np.diff(t) <= 0):
            raise DataError("time index must be strictly increasing (no duplicates)")
        y = np.asarray(self.response, dtype=np.float64)
        covs = {k: np.asarray(v, dtype=np.float64) for k, v in self.covariates.items()}
        for name, v in [("response", y), *covs.items()]:
            if v.shape != t.shape:
                raise ShapeError(f"column {name!r} has length {v.shape} but time index has {t.shape}")
        for a in (t, y, *covs.values()):
            a.setflags(write=False)
        object.__setattr__(self, "time_index", t)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "covariates", covs)

    def __len__(self):
        return self.time_index.shape[0]

    def subset(self, mask):
        return Dataset(
            self.time_index[mask], self.response[mask],
            {k: v[mask] for k, v in self.covariates.items()},
        )


@dataclass(frozen=True)
class LagSet:
    lags: tuple = (1,)

    def __post_init__(self):
        lags = tuple(int(v) for v in self.lags)
        if any(v < 1 for v in lags):
            raise ConfigurationError("lags must be positive integers")
        if any(b <= a for a, b in zip(lags, lags[1:])):
            raise ConfigurationError("lags must be strictly increasing")
        object.__setattr__(self, "lags", lags)

    @property
    def p(self):
        return len(self.lags)

    @property
    def max_lag(self):
        return max(self.lags) if self.lags else 0


@dataclass(frozen=True)
class PriorConfig:
    beta_mean: float = 0.0
    phi_mean: float = 0.0
    phi_precision: float = 1e-6   # scalar multiple of I_p
    v0: float = None              # None means minus the column count of X
    delta0: float = 0.0
    gamma_rate: float = 30.0      # b in Gamma(a, b) for every smoothing parameter
    gamma_shape: float = 1.0      # a
    fixed_precision: float = DEFAULT_FIXED_PRECISION

    def __post_init__(self):
        if not self.phi_precision > 0:
            raise ConfigurationError("phi precision must be positive")
        if not self.gamma_rate > 0 or not self.gamma_shape > 0:
            raise ConfigurationError("gamma hyperprior parameters must be positive")
        if not self.fixed_precision > 0:
            raise ConfigurationError("fixed-effect precision must be positive")


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 5000
    burn_in: int = 500
    seed: int = 0
    mh_step: float = 0.5
    residual_thin: int = 5
    strict_stationarity: bool = False
    max_phi_rejections: int = 1000

    def __post_init__(self):
        if not self.iterations > self.burn_in >= 0:
            raise ConfigurationError("need iterations > burn_in >= 0")
        if self.mh_step < 0:
            raise ConfigurationError("MH step must be non-negative")
        if self.residual_thin < 1:
            raise ConfigurationError("residual thinning must be at least 1")


@dataclass(frozen=True)
class MarginSpec:
    """One covariate's basis inside a term."""

    kind: str
    covariate: str
    size: int = 6
    order: int = 2
    penalty_order: int = 2
    period: float = None
    bounds: tuple = None
    num_levels: int = None
    precision: str = "iid"
    num_harmonics: int = None
    half_period: float = None
    poly_order: int = 1
    spline_order: int = 1


@dataclass(frozen=True)
class TermSpec:
    name: str
    kind: str
    margins: tuple = ()
    gamma_rate: tuple = None   # per penalty; None falls back to PriorConfig

    @property
    def covariates(self):
        return tuple(m.covariate for m in self.margins)


@dataclass(frozen=True)
class ModelSpec:
    terms: tuple
    lag_set: LagSet = LagSet()
    priors: PriorConfig = PriorConfig()
    mcmc: McmcConfig = McmcConfig()
    response_transform: str = "identity"

    def __post_init__(self):
        problems = validate_terms(self.terms)
        if self.response_transform not in ("identity", "log"):
            problems.append(f"unknown response transform {self.response_transform!r}")
        if problems:
            raise ConfigurationError("; ".join(problems), problems)

    @property
    def covariates(self):
        out = []
        for t in self.terms:
            out += [c for c in t.covariates if c not in out]
        return out

    def with_seed(self, seed):
        return replace(self, mcmc=replace(self.mcmc, seed=int(seed)))


def validate_terms(terms):
    problems = []
    names = [t.name for t in terms]
    for dup in sorted({n for n in names if names.count(n) > 1}):
        problems.append(f"duplicate term name {dup!r}")
    n_int = sum(t.kind == "intercept" for t in terms)
    if n_int != 1:
        problems.append(f"exactly one intercept term required, found {n_int}")
    for t in terms:
        if t.kind not in TERM_KINDS:
            problems.append(f"term {t.name!r}: unknown kind {t.kind!r}")
            continue
        want = {"intercept": 0, "tensor": 2}.get(t.kind, 1)
        if len(t.margins) != want:
            problems.append(f"term {t.name!r}: kind {t.kind} takes {want} covariate(s), got {len(t.margins)}")
            continue
        if t.kind == "tensor":
            for m in t.margins:
                if m.kind not in MARGIN_KINDS:
                    problems.append(f"term {t.name!r}: tensor margin kind {m.kind!r} not supported")
        elif t.margins and t.margins[0].kind != t.kind:
            problems.append(f"term {t.name!r}: margin kind must match term kind")
        for m in t.margins:
            if m.kind == "cyclic_bspline" and not (m.period and m.period > 0):
                problems.append(f"term {t.name!r}: cyclic basis needs a positive period")
            if m.kind == "factor" and not (m.num_levels and m.num_levels >= 2):
                problems.append(f"term {t.name!r}: factor needs num_levels >= 2")
            if m.kind == "fourier" and not (m.num_harmonics and m.half_period):
                problems.append(f"term {t.name!r}: fourier needs num_harmonics and half_period")
            if m.kind in ("bspline", "cyclic_bspline") and m.size < m.order + 1:
                problems.append(f"term {t.name!r}: basis size {m.size} too small for order {m.order}")
    return problems


# -- per-term realised bases -------------------------------------------------

@dataclass(frozen=True)
class MarginBasis:
    """A margin with its data-dependent state (knots) frozen."""

    spec: MarginSpec
    grid: bs.KnotGrid = None
    knots: tuple = None
    data_range: tuple = None

    def evaluate(self, x):
        m = self.spec
        if m.kind in ("bspline", "cyclic_bspline"):
            return bs.bspline_basis(x, self.grid)
        if m.kind == "thin_plate":
            return bs.thin_plate_basis(x, self._tp_spec(), knots=np.asarray(self.knots))
        if m.kind == "factor":
            return bs.factor_basis(x, bs.FactorSpec(m.num_levels, m.precision, m.penalty_order))
        if m.kind == "fourier":
            return bs.fourier_basis(x, bs.FourierSpec(m.num_harmonics, m.half_period))
        raise ConfigurationError(f"cannot evaluate margin kind {m.kind!r}")

    def _tp_spec(self):
        m = self.spec
        return bs.ThinPlateSpec(m.size - m.poly_order, m.poly_order, m.spline_order)

    def penalty(self, ridge=bs.DEFAULT_RIDGE):
        m = self.spec
        if m.kind == "bspline":
            return bs.difference_penalty(m.size, m.penalty_order, ridge)
        if m.kind == "cyclic_bspline":
            return bs.difference_penalty(m.size, m.penalty_order, ridge, cyclic=True)
        if m.kind == "factor":
            return bs.factor_penalty(bs.FactorSpec(m.num_levels, m.precision, m.penalty_order), ridge)
        # thin plate margin inside a tensor: iid
        return bs.PenaltyMatrix(np.eye(m.size), 0, 0.0)

    @property
    def grid_range(self):
        m = self.spec
        if self.grid is not None:
            if self.grid.periodic:
                return 0.0, self.grid.period
            return float(self.grid.knots[0]), float(self.grid.knots[-1])
        if m.kind == "factor":
            return 1.0, float(m.num_levels)
        return None


def fit_margin(spec, x):
    """Freeze knots for ``spec`` from covariate values ``x``."""
    x = np.asarray(x, dtype=np.float64)
    finite = x[np.isfinite(x)]
    if spec.kind in ("bspline", "cyclic_bspline", "thin_plate"):
        if finite.size == 0 or np.ptp(finite) == 0:
            raise ConfigurationError(
                f"covariate {spec.covariate!r} has zero variance; cannot fit a {spec.kind} basis"
            )
    rng = (float(finite.min()), float(finite.max())) if finite.size else None
    if spec.kind == "bspline":
        lo, hi = spec.bounds if spec.bounds is not None else rng
        grid = bs.KnotGrid.uniform(float(lo), float(hi), spec.size, spec.order)
        return MarginBasis(spec, grid=grid, data_range=rng)
    if spec.kind == "cyclic_bspline":
        return MarginBasis(spec, grid=bs.KnotGrid.cyclic(spec.period, spec.size, spec.order), data_range=rng)
    if spec.kind == "thin_plate":
        tp = bs.ThinPlateSpec(spec.size - spec.poly_order, spec.poly_order, spec.spline_order)
        return MarginBasis(spec, knots=tuple(bs.thin_plate_knots(finite, tp)), data_range=rng)
    return MarginBasis(spec, data_range=rng)


@dataclass(frozen=True)
class Block:
    """Ledger entry for one term's columns of ``X``."""

    name: str
    kind: str
    start: int
    stop: int
    margins: tuple
    penalties: tuple          # PenaltyMatrix (univariate) or TensorPenaltyPair
    lambda_index: tuple
    gamma_rate: tuple
    unit_row_sums: bool
    centered: bool

    @property
    def columns(self):
        return slice(self.start, self.stop)

    @property
    def size(self):
        return self.stop - self.start

    @property
    def penalised(self):
        return bool(self.lambda_index)

    def evaluate(self, covariates, n=None):
        """Basis values of this term at new covariate values."""
        if self.kind == "intercept":
            if n is None:
                n = len(next(iter(covariates.values())))
            return np.ones((n, 1))
        bases = [mb.evaluate(np.asarray(covariates[mb.spec.covariate], dtype=np.float64))
                 for mb in self.margins]
        if self.kind == "tensor":
            return bs.tensor_basis(bases[0], bases[1]).values
        return bases[0].values


@dataclass(frozen=True)
class BlockLedger:
    blocks: tuple
    n_columns: int
    lambda_labels: tuple

    @property
    def n_lambdas(self):
        return len(self.lambda_labels)

    def __getitem__(self, name):
        for b in self.blocks:
            if b.name == name:
                return b
        raise ConfigurationError(f"unknown term {name!r}")

    @property
    def intercept(self):
        return next(b for b in self.blocks if b.kind == "intercept")

    def column_labels(self):
        labels = []
        for b in self.blocks:
            labels += [f"{b.name}[{j}]" for j in range(b.size)]
        return labels

    def design(self, covariates, n=None):
        return np.hstack([b.evaluate(covariates, n) for b in self.blocks])


def _term_basis(term, margins, covariates, n):
    if term.kind == "intercept":
        return bs.BasisMatrix(np.ones((n, 1)), ["1"], unit_row_sums=True)
    mats = [mb.evaluate(covariates[mb.spec.covariate]) for mb in margins]
    if term.kind == "tensor":
        return bs.tensor_basis(mats[0], mats[1])
    return mats[0]


def build_ledger(spec, data, ridge=bs.DEFAULT_RIDGE):
    """Freeze knots from ``data`` and lay out the blocks of ``X``.

    Returns the ledger and the list of per-term basis matrices on ``data``.
    """
    missing = [c for c in spec.covariates if c not in data.covariates]
    if missing:
        raise ConfigurationError(
            f"covariate(s) {missing} not found in data", [f"unknown covariate {c!r}" for c in missing]
        )
    blocks, mats, labels = [], [], []
    start = 0
    for term in spec.terms:
        margins = tuple(fit_margin(m, data.covariates[m.covariate]) for m in term.margins)
        mat = _term_basis(term, margins, data.covariates, len(data))
        if term.kind in ("bspline", "cyclic_bspline", "factor"):
            pens = (margins[0].penalty(ridge),)
            lam_labels = [term.name]
        elif term.kind == "tensor":
            k1, k2 = (mb.penalty(ridge) for mb in margins)
            pens = (bs.tensor_penalties(k1, k2),)
            lam_labels = [f"{term.name}:{m.covariate}" for m in term.margins]
        else:
            pens, lam_labels = (), []
        rates = term.gamma_rate
        if rates is None:
            rates = (spec.priors.gamma_rate,) * len(lam_labels)
        elif len(rates) != len(lam_labels):
            raise ConfigurationError(f"term {term.name!r}: need {len(lam_labels)} gamma rate(s)")
        lam_index = tuple(range(len(labels), len(labels) + len(lam_labels)))
        labels += lam_labels
        stop = start + mat.shape[1]
        blocks.append(Block(
            term.name, term.kind, start, stop, margins, pens, lam_index, tuple(rates),
            unit_row_sums=mat.unit_row_sums,
            centered=term.kind in ("bspline", "cyclic_bspline", "tensor", "factor"),
        ))
        mats.append(mat)
        start = stop
    return BlockLedger(tuple(blocks), start, tuple(labels)), mats


def transform_response(y, transform):
    y = np.asarray(y, dtype=np.float64)
    if transform == "identity":
        return y.copy()
    if transform == "log":
        finite = np.isfinite(y)
        bad = np.flatnonzero(finite & (y <= 0))
        if bad.size:
            raise DataError(f"non-positive response {y[bad[0]]} in row {bad[0]} under log transform")
        out = np.full_like(y, np.nan)
        out[finite] = np.log(y[finite])
        return out
    raise ConfigurationError(f"unknown response transform {transform!r}")


def assemble_design(spec, data, ridge=bs.DEFAULT_RIDGE):
    """Return ``(X, y, ledger)`` for ``data`` under ``spec``."""
    ledger, mats = build_ledger(spec, data, ridge)
    X = np.hstack([m.values for m in mats])
    y = transform_response(data.response, spec.response_transform)
    return X, y, ledger


def assemble_prior_precision(ledger, lambdas, fixed_precision=DEFAULT_FIXED_PRECISION):
    """Block-diagonal ``A0`` for the current smoothing parameters."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.shape != (ledger.n_lambdas,):
        raise ShapeError(f"expected {ledger.n_lambdas} smoothing parameters, got {lambdas.shape}")
    if np.any(~(lambdas > 0)):
        raise DomainError("smoothing parameters must be positive")
    a0 = np.zeros((ledger.n_columns, ledger.n_columns))
    for b in ledger.blocks:
        s = b.columns
        if not b.penalised:
            a0[s, s] = fixed_precision * np.eye(b.size)
        elif b.kind == "tensor":
            pair = b.penalties[0]
            a0[s, s] = pair.combined(lambdas[b.lambda_index[0]], lambdas[b.lambda_index[1]])
        else:
            a0[s, s] = lambdas[b.lambda_index[0]] * b.penalties[0].values
    return a0


# -- missing data and lags ---------------------------------------------------

@dataclass(frozen=True)
class LagIndex:
    """Rows of ``X`` entering the likelihood and, per lag, their lag rows."""

    targets: np.ndarray
    lag_rows: np.ndarray   # shape (len(targets), p)

    @property
    def n_targets(self):
        return self.targets.shape[0]


def lag_index(time_index, lag_set):
    """Targets are rows whose every lag is present, by time arithmetic."""
    t = np.asarray(time_index, dtype=np.int64)
    pos = {int(v): i for i, v in enumerate(t)}
    lag_rows = np.full((t.shape[0], lag_set.p), -1, dtype=np.intp)
    for j, lag in enumerate(lag_set.lags):
        lag_rows[:, j] = [pos.get(int(v) - lag, -1) for v in t]
    ok = np.all(lag_rows >= 0, axis=1)
    return LagIndex(np.flatnonzero(ok), lag_rows[ok])


def complete_rows(data, columns=None):
    columns = list(data.covariates) if columns is None else list(columns)
    ok = np.isfinite(data.response)
    for c in columns:
        ok &= np.isfinite(data.covariates[c])
    return ok


def drop_incomplete_rows(data, lag_set, columns=None):
    """Keep rows whose response, covariates and lagged responses are all present.

    Returns ``(filtered, kept)``. ``kept`` flags, over the input rows, those
    entering the likelihood. ``filtered`` holds those rows plus the complete
    rows they reference as lags, so running this again on ``filtered``
    returns it unchanged.
    """
    complete = complete_rows(data, columns)
    base = data.subset(complete)
    li = lag_index(base.time_index, lag_set)
    retained = np.zeros(len(base), dtype=bool)
    retained[li.targets] = True
    if lag_set.p:
        retained[li.lag_rows.ravel()] = True
    if li.n_targets == 0 or retained.sum() < lag_set.max_lag + 1:
        raise DataError(
            f"only {li.n_targets} usable rows remain after removing missing values and lags"
        )
    kept = np.zeros(len(data), dtype=bool)
    kept[np.flatnonzero(complete)[li.targets]] = True
    return base.subset(retained), kept
