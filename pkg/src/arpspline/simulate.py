"""Synthetic data with a known additive surface, a daily cycle and AR(1) errors.

The mean is ``sin(pi x)(1 - x y^2) + sin(2 pi t / 24) / 2`` with
``x, y ~ U(0, 1)`` and ``t`` cycling through 1..24. Errors follow
``eps_i = -0.4 eps_{i-1} + u_i`` with ``u_i ~ N(0, 0.1)``, where 0.1 is the
innovation variance. The first error is ``u_0`` scaled to the stationary variance.

Each covariate and the innovations use their own random stream,
so a longer simulation with the same seed extends a shorter one.
"""

import numpy as np

from .design import Dataset
from .numerics import rng_stream

PERIOD = 24
AR_COEF = -0.4
INNOVATION_VAR = 0.1


def surface(x, y):
    return np.sin(np.pi * x) * (1.0 - x * y ** 2)


def daily_cycle(t):
    return np.sin(2.0 * np.pi * np.asarray(t, dtype=np.float64) / PERIOD) / 2.0


def simulate(n, seed=0):
    """Simulate ``n`` hourly rows.

    Returns a :class:`Dataset` whose covariates are ``t``, ``x`` and ``y``
    plus the true components ``mu``, ``f_xy``, ``f_t``, ``eps`` and ``u``.
    """
    n = int(n)
    if n < 2 * PERIOD:
        raise ValueError(f"need at least {2 * PERIOD} rows, got {n}")
    time = np.arange(1, n + 1)
    t = (time - 1) % PERIOD + 1.0
    x = rng_stream(seed, 0).uniform(size=n)
    yc = rng_stream(seed, 1).uniform(size=n)
    sd = np.sqrt(INNOVATION_VAR)
    u = rng_stream(seed, 2).normal(0.0, sd, size=n)
    eps = np.empty(n)
    eps[0] = u[0] / np.sqrt(1.0 - AR_COEF ** 2)
    for i in range(1, n):
        eps[i] = AR_COEF * eps[i - 1] + u[i]
    f_xy, f_t = surface(x, yc), daily_cycle(t)
    mu = f_xy + f_t
    cov = {"t": t, "x": x, "y": yc, "mu": mu, "f_xy": f_xy, "f_t": f_t, "eps": eps, "u": u}
    return Dataset(time, mu + eps, cov)
