"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_kernels_ext.pyx`` must agree with them
to rounding error.
"""

import numpy as np


def bspline_values(x, knots, degree):
    """Dense B-spline design matrix by the Cox-de Boor triangle.

    Parameters
    ----------
    x : ndarray, shape (n,)
        Evaluation points, all inside ``[knots[degree], knots[-degree - 1]]``.
    knots : ndarray, shape (m,)
        Non-decreasing padded knot vector.
    degree : int
        Polynomial degree of the basis.

    Returns
    -------
    ndarray, shape (n, m - degree - 1)
    """
    x = np.asarray(x, dtype=np.float64)
    knots = np.asarray(knots, dtype=np.float64)
    n = x.shape[0]
    nbasis = knots.shape[0] - degree - 1
    left_idx = np.searchsorted(knots, x, side="right") - 1
    np.clip(left_idx, degree, nbasis - 1, out=left_idx)

    vals = np.zeros((n, degree + 1))
    vals[:, 0] = 1.0
    left = np.zeros((n, degree + 1))
    right = np.zeros((n, degree + 1))
    for j in range(1, degree + 1):
        left[:, j] = x - knots[left_idx + 1 - j]
        right[:, j] = knots[left_idx + j] - x
        saved = np.zeros(n)
        for r in range(j):
            temp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved

    out = np.zeros((n, nbasis))
    rows = np.arange(n)
    for r in range(degree + 1):
        out[rows, left_idx - degree + r] = vals[:, r]
    return out


def ar_fill(e, phi, lags, u):
    """Fill NaN entries of each row of ``e`` by the AR recursion, in place.

    ``e[t, i] = sum_j phi[t, j] * e[t, i - lags[j]] + u[t, i]`` wherever
    ``e[t, i]`` is NaN. Known entries are left untouched. The caller
    guarantees every NaN sits at least ``max(lags)`` columns in.
    """
    ntraj, ncol = e.shape
    for i in range(ncol):
        col = e[:, i]
        missing = np.isnan(col)
        if not missing.any():
            continue
        acc = u[:, i].copy()
        for j in range(len(lags)):
            acc += phi[:, j] * e[:, i - lags[j]]
        col[missing] = acc[missing]
    return e
