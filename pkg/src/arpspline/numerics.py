"""Factorizations, solves and random variates used by the sampler.

Random numbers come from numpy's PCG64 bit generator. A stream is
identified by ``(seed, stream_id)`` and built as
``Generator(PCG64(SeedSequence(seed, spawn_key=(stream_id,))))``, so equal
pairs give bit-identical sequences and distinct ids are independent.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import DomainError, FactorizationError, ShapeError

RNG_ALGORITHM = "numpy.PCG64/SeedSequence"


def rng_stream(seed, stream_id=0):
    """Independent, reproducible generator for ``(seed, stream_id)``.

    ``stream_id`` may be a tuple of ints to address nested streams.
    """
    key = tuple(int(v) for v in np.atleast_1d(stream_id))
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class SpdFactor:
    """Lower Cholesky factor ``L`` with ``L @ L.T == A``."""

    lower: np.ndarray

    @property
    def dim(self):
        return self.lower.shape[0]

    def solve(self, b):
        """Solve ``A x = b`` with two triangular solves."""
        y = solve_triangular(self.lower, b, lower=True, check_finite=False)
        return solve_triangular(self.lower, y, lower=True, trans="T", check_finite=False)


def cholesky(a, sym_tol=1e-10):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and np.max(np.abs(a - a.T)) > sym_tol * scale:
        raise DomainError("matrix is not symmetric")
    c, info = lapack.dpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise FactorizationError(info - 1)
    if info < 0:
        raise DomainError(f"invalid argument {-info} passed to dpotrf")
    return SpdFactor(c)


def log_det_from_factor(f):
    return 2.0 * float(np.sum(np.log(np.diag(f.lower))))


def sample_mvn_precision(mean_rhs, precision, rng, factor=None):
    """Draw from N(Q^{-1} b, Q^{-1}) given precision ``Q`` and ``b``.

    One Cholesky ``Q = L L^T``; the mean is a pair of triangular solves and
    the noise is ``L^{-T} z``. Pass ``factor`` to reuse a factorization.
    """
    if factor is None:
        factor = cholesky(precision)
    mean = factor.solve(np.asarray(mean_rhs, dtype=np.float64))
    z = rng.standard_normal(factor.dim)
    noise = solve_triangular(factor.lower, z, lower=True, trans="T", check_finite=False)
    return mean + noise


def sample_gamma(shape, rate, rng, size=None):
    """Gamma draw parameterised by shape and rate (mean ``shape / rate``)."""
    if not shape > 0 or not rate > 0:
        raise DomainError(f"gamma parameters must be positive (shape={shape}, rate={rate})")
    return rng.gamma(shape, 1.0 / rate, size=size)


def sample_inverse_gamma(shape, scale, rng, size=None):
    """Inverse-gamma draw; mean ``scale / (shape - 1)`` when ``shape > 1``."""
    if not shape > 0 or not scale > 0:
        raise DomainError(
            f"inverse-gamma parameters must be positive (shape={shape}, scale={scale})"
        )
    return scale / rng.gamma(shape, 1.0, size=size)
