"""Bayesian P-spline additive models with autoregressive errors.

Penalised B-spline, cyclic, tensor-product, thin-plate, factor and Fourier
terms are fitted by a blocked Gibbs sampler together with AR errors on an
arbitrary lag set; forecasts propagate the errors draw by draw.
"""

from ._kernels import BACKEND
from .basis import (
    BasisMatrix, FactorSpec, FourierSpec, KnotGrid, PenaltyMatrix, TensorPenaltyPair,
    ThinPlateSpec, bspline_basis, cyclic_bspline_basis, difference_penalty, factor_basis,
    fourier_basis, tensor_basis, tensor_penalties, thin_plate_basis,
)
from .design import (
    BlockLedger, Dataset, LagSet, MarginSpec, McmcConfig, ModelSpec, PriorConfig, TermSpec,
    assemble_design, assemble_prior_precision, drop_incomplete_rows,
)
from .diagnostics import (
    acf, dic, effective_df, marginal_effect, pit, residual_covariance, sharpness,
)
from .errors import (
    ArpsplineError, ConfigurationError, DataError, DiagnosticsError, DomainError,
    FactorizationError, SamplerError, ShapeError,
)
from .forecast import ForecastDistribution, RollingProtocol, rolling_forecast_study
from .sampler import ChainState, PosteriorDraws, lag_transform, run_chains, run_gibbs
from .simulate import simulate

__version__ = "0.1.0"
