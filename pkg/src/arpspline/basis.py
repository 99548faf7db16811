"""Basis matrices and their penalty matrices.

Splines use the usual Cox-de Boor recursion. ``order`` here is the
polynomial degree: order 0 is piecewise constant, order 2 piecewise
quadratic. Non-periodic grids are clamped, i.e. the end knots are repeated
``order`` times, so the basis spans exactly ``[knots[0], knots[-1]]``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigurationError, DataError, DomainError, ShapeError

DEFAULT_RIDGE = 1e-5
MAX_RIDGE = 1e-3


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KnotGrid:
    knots: np.ndarray
    order: int
    periodic: bool = False
    period: float = None

    def __post_init__(self):
        knots = _frozen(self.knots)
        object.__setattr__(self, "knots", knots)
        if knots.ndim != 1 or not np.all(np.isfinite(knots)):
            raise ConfigurationError("knots must be a finite 1-d sequence")
        if np.any(np.diff(knots) <= 0):
            raise ConfigurationError("knots must be strictly increasing")
        if int(self.order) != self.order or self.order < 0:
            raise ConfigurationError(f"spline order must be a non-negative integer, got {self.order}")
        if self.periodic:
            if self.period is None or not self.period > 0:
                raise ConfigurationError(f"periodic grid needs a positive period, got {self.period}")
            if knots[0] < 0 or knots[-1] >= self.period:
                raise ConfigurationError("periodic knots must lie in [0, period)")

    @classmethod
    def uniform(cls, lower, upper, size, order):
        """Clamped grid over ``[lower, upper]`` giving ``size`` basis functions."""
        if not upper > lower:
            raise ConfigurationError(f"empty covariate range [{lower}, {upper}]")
        nknots = size - order + 1
        if nknots < 2:
            raise ConfigurationError(
                f"basis size {size} is too small for order {order} (need at least {order + 1})"
            )
        return cls(np.linspace(lower, upper, nknots), order)

    @classmethod
    def cyclic(cls, period, size, order, offset=0.0):
        """Equally spaced knots on the circle giving ``size`` basis functions."""
        if not period > 0:
            raise ConfigurationError(f"period must be positive, got {period}")
        knots = np.mod(offset + period * np.arange(size) / size, period)
        return cls(np.sort(knots), order, periodic=True, period=float(period))

    @property
    def size(self):
        """Number of basis functions generated by this grid."""
        if self.periodic:
            return len(self.knots)
        return len(self.knots) - 1 + self.order

    def padded(self):
        k = self.order
        if self.periodic:
            t, p, d = self.knots, self.period, len(self.knots)
            return np.concatenate([t[d - k:] - p, t, t[: k + 1] + p])
        return np.concatenate(
            [np.repeat(self.knots[0], k), self.knots, np.repeat(self.knots[-1], k)]
        )


@dataclass(frozen=True)
class BasisMatrix:
    values: np.ndarray
    column_labels: tuple
    unit_row_sums: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = _frozen(self.values)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_labels", tuple(self.column_labels))
        if values.ndim != 2:
            raise ShapeError("basis values must be a matrix")
        if len(self.column_labels) != values.shape[1]:
            raise ShapeError("one label per basis column required")
        if not np.all(np.isfinite(values)):
            raise DomainError("basis matrix has non-finite entries")

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class PenaltyMatrix:
    values: np.ndarray
    diff_order: int
    ridge: float
    cyclic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    @property
    def dim(self):
        return self.values.shape[0]

    def quadratic_form(self, beta):
        beta = np.asarray(beta, dtype=np.float64)
        return float(beta @ self.values @ beta)


@dataclass(frozen=True)
class TensorPenaltyPair:
    p1: np.ndarray
    p2: np.ndarray
    d1: int
    d2: int

    def __post_init__(self):
        object.__setattr__(self, "p1", _frozen(self.p1))
        object.__setattr__(self, "p2", _frozen(self.p2))

    def combined(self, lam1, lam2):
        return lam1 * self.p1 + lam2 * self.p2


@dataclass(frozen=True)
class ThinPlateSpec:
    num_knots: int
    poly_order: int = 1
    spline_order: int = 1

    def __post_init__(self):
        if self.num_knots < 1:
            raise ConfigurationError("thin plate basis needs at least one knot")
        if self.poly_order < 0 or self.spline_order < 1:
            raise ConfigurationError("invalid thin plate orders")

    @property
    def knot_quantiles(self):
        k = self.num_knots
        return np.arange(1, k + 1) / (k + 1)


@dataclass(frozen=True)
class FactorSpec:
    num_levels: int
    precision_structure: str = "iid"
    diff_order: int = 1

    def __post_init__(self):
        if self.num_levels < 2:
            raise ConfigurationError("a factor needs at least two levels")
        if self.precision_structure not in ("iid", "penalty"):
            raise ConfigurationError(
                f"unknown factor precision structure {self.precision_structure!r}"
            )


@dataclass(frozen=True)
class FourierSpec:
    num_harmonics: int
    half_period: float

    def __post_init__(self):
        if self.num_harmonics < 1:
            raise ConfigurationError("need at least one harmonic")
        if not self.half_period > 0:
            raise ConfigurationError(f"half period must be positive, got {self.half_period}")


def _as_vector(x, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional")
    return x


def bspline_basis(x, grid):
    if grid.periodic:
        return cyclic_bspline_basis(x, grid)
    x = _as_vector(x)
    if len(grid.knots) < grid.order + 2:
        raise ConfigurationError(
            f"{len(grid.knots)} knots are too few for order {grid.order} "
            f"(need at least {grid.order + 2})"
        )
    lo, hi = grid.knots[0], grid.knots[-1]
    bad = np.flatnonzero(~((x >= lo) & (x <= hi)))
    if bad.size:
        raise DomainError(
            f"value {x[bad[0]]!r} at position {bad[0]} is outside the knot range [{lo}, {hi}]"
        )
    values = _kernels.bspline_values(x, grid.padded(), grid.order)
    labels = [f"B{j}" for j in range(values.shape[1])]
    return BasisMatrix(values, labels, unit_row_sums=True, meta={"knots": grid.knots.tolist()})


def reduce_periodic(x, grid):
    """Map ``x`` into ``[knots[0], knots[0] + period)``."""
    k0, p = grid.knots[0], grid.period
    xr = k0 + np.mod(x - k0, p)
    xr[xr >= k0 + p] = k0
    return xr


def cyclic_bspline_basis(x, grid):
    if not grid.periodic:
        raise ConfigurationError("cyclic basis needs a periodic knot grid")
    x = _as_vector(x)
    if not np.all(np.isfinite(x)):
        raise DomainError("cyclic covariate contains non-finite values")
    d, k = len(grid.knots), grid.order
    if d < k + 2:
        raise ConfigurationError(
            f"{d} knots are too few for a cyclic basis of order {k} (need at least {k + 2})"
        )
    raw = _kernels.bspline_values(reduce_periodic(x, grid), grid.padded(), k)
    values = np.zeros((x.shape[0], d))
    for i in range(raw.shape[1]):
        values[:, (i - k) % d] += raw[:, i]
    labels = [f"C{j}" for j in range(d)]
    return BasisMatrix(
        values, labels, unit_row_sums=True,
        meta={"knots": grid.knots.tolist(), "period": grid.period},
    )


def difference_matrix(d, diff_order, cyclic=False):
    if cyclic:
        step = np.roll(np.eye(d), -1, axis=0) - np.eye(d)
        return np.linalg.matrix_power(step, diff_order)
    return np.diff(np.eye(d), n=diff_order, axis=0)


def difference_penalty(d, diff_order, ridge=DEFAULT_RIDGE, cyclic=False):
    """``D^T D + ridge * I`` for the ``diff_order``-th difference operator."""
    if diff_order < 1 or diff_order >= d:
        raise ConfigurationError(
            f"difference order {diff_order} is invalid for a basis of size {d}"
        )
    if not 0.0 <= ridge <= MAX_RIDGE:
        raise ConfigurationError(f"ridge {ridge} outside [0, {MAX_RIDGE}]")
    dm = difference_matrix(d, diff_order, cyclic)
    return PenaltyMatrix(dm.T @ dm + ridge * np.eye(d), diff_order, ridge, cyclic)


def tensor_basis(b1, b2):
    v1, v2 = b1.values, b2.values
    if v1.shape[0] != v2.shape[0]:
        raise ShapeError(f"row counts differ: {v1.shape[0]} vs {v2.shape[0]}")
    n = v1.shape[0]
    # second covariate's index varies fastest
    values = (v1[:, :, None] * v2[:, None, :]).reshape(n, -1)
    labels = [f"{a}:{b}" for a in b1.column_labels for b in b2.column_labels]
    return BasisMatrix(values, labels, unit_row_sums=b1.unit_row_sums and b2.unit_row_sums)


def tensor_penalties(k1, k2):
    k1 = np.asarray(getattr(k1, "values", k1))
    k2 = np.asarray(getattr(k2, "values", k2))
    for k in (k1, k2):
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ShapeError("penalty matrices must be square")
    d1, d2 = k1.shape[0], k2.shape[0]
    return TensorPenaltyPair(np.kron(k1, np.eye(d2)), np.kron(np.eye(d1), k2), d1, d2)


def thin_plate_knots(x, spec):
    x = _as_vector(x)
    if np.unique(x).size < spec.num_knots + 2:
        raise ConfigurationError(
            f"thin plate basis with {spec.num_knots} knots needs at least "
            f"{spec.num_knots + 2} distinct covariate values"
        )
    return np.quantile(x, spec.knot_quantiles)


def thin_plate_basis(x, spec, knots=None):
    """Polynomial columns ``x**1..x**J`` then radial ``|x - knot|**m``.

    The knots default to the ``k/(K+1)`` empirical quantiles of ``x``; pass
    previously computed ``knots`` to evaluate the same basis elsewhere.
    ``meta["fixed_columns"]`` counts the polynomial columns.
    """
    x = _as_vector(x)
    if knots is None:
        knots = thin_plate_knots(x, spec)
    knots = np.asarray(knots, dtype=np.float64)
    poly = [x ** j for j in range(1, spec.poly_order + 1)]
    radial = np.abs(x[:, None] - knots[None, :]) ** spec.spline_order
    values = np.column_stack(poly + [radial]) if poly else radial
    labels = [f"x^{j}" for j in range(1, spec.poly_order + 1)]
    labels += [f"|x-k{j}|" for j in range(len(knots))]
    return BasisMatrix(
        values, labels, unit_row_sums=False,
        meta={"knots": knots.tolist(), "fixed_columns": spec.poly_order},
    )


def factor_basis(codes, spec):
    codes = np.asarray(codes)
    if codes.ndim != 1:
        raise ShapeError("factor codes must be one-dimensional")
    as_float = codes.astype(np.float64)
    bad = np.flatnonzero(
        ~np.isfinite(as_float) | (as_float != np.round(as_float))
        | (as_float < 1) | (as_float > spec.num_levels)
    )
    if bad.size:
        raise DataError(
            f"factor code {codes[bad[0]]!r} in row {bad[0]} is not in 1..{spec.num_levels}"
        )
    idx = as_float.astype(np.intp) - 1
    values = np.zeros((codes.shape[0], spec.num_levels))
    values[np.arange(codes.shape[0]), idx] = 1.0
    labels = [f"L{j}" for j in range(1, spec.num_levels + 1)]
    return BasisMatrix(values, labels, unit_row_sums=True)


def factor_penalty(spec, ridge=DEFAULT_RIDGE):
    if spec.precision_structure == "iid":
        return PenaltyMatrix(np.eye(spec.num_levels), 0, 0.0)
    return difference_penalty(spec.num_levels, spec.diff_order, ridge)


def fourier_basis(x, spec):
    x = _as_vector(x)
    cols, labels = [], []
    for c in range(1, spec.num_harmonics + 1):
        arg = c * np.pi * x / spec.half_period
        cols += [np.sin(arg), np.cos(arg)]
        labels += [f"sin{c}", f"cos{c}"]
    return BasisMatrix(np.column_stack(cols), labels, unit_row_sums=False)
