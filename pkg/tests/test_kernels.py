import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arpspline import _kernels
from arpspline.basis import KnotGrid

BACKENDS = _kernels.backends()


def test_compiled_extension_is_built():
    # the editable install compiles it; the pure version must always exist
    assert "python" in BACKENDS
    assert "compiled" in BACKENDS, "run `pip install -e . --no-build-isolation` to build the extension"


def _pairs():
    return [(a, b) for a in BACKENDS for b in BACKENDS if a < b]


@pytest.mark.parametrize("pair", _pairs())
@settings(max_examples=50, deadline=None)
@given(order=st.integers(0, 4), size=st.integers(9, 15), seed=st.integers(0, 2 ** 16))
def test_bspline_backends_agree(pair, order, size, seed):
    grid = KnotGrid.uniform(0.0, 1.0, size, order)
    x = np.random.default_rng(seed).uniform(size=50)
    x[:2] = [0.0, 1.0]
    a = BACKENDS[pair[0]].bspline_values(x, grid.padded(), order)
    b = BACKENDS[pair[1]].bspline_values(x, grid.padded(), order)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)


@pytest.mark.parametrize("pair", _pairs())
@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 16), lags=st.sampled_from([(1,), (1, 3), (2, 5, 7), ()]))
def test_ar_fill_backends_bit_identical(pair, seed, lags):
    rng = np.random.default_rng(seed)
    ntraj, ncol = 4, 30
    e = rng.normal(size=(ntraj, ncol))
    m = max(lags) if lags else 0
    holes = rng.uniform(size=(ntraj, ncol)) < 0.4
    holes[:, :m] = False
    e[holes] = np.nan
    phi = rng.normal(scale=0.3, size=(ntraj, len(lags)))
    u = rng.normal(size=(ntraj, ncol))
    lag_arr = np.array(lags, dtype=np.intp)
    a = BACKENDS[pair[0]].ar_fill(e.copy(), phi, lag_arr, u)
    b = BACKENDS[pair[1]].ar_fill(e.copy(), phi, lag_arr, u)
    assert np.array_equal(a, b)
    assert not np.isnan(a).any()


def test_ar_fill_recursion_by_hand():
    e = np.array([[1.0, np.nan, np.nan, 4.0, np.nan]])
    u = np.array([[0.0, 0.5, -0.5, 0.0, 1.0]])
    for impl in BACKENDS.values():
        out = impl.ar_fill(e.copy(), np.array([[0.5]]), np.array([1], dtype=np.intp), u)
        np.testing.assert_allclose(out[0], [1.0, 1.0, 0.0, 4.0, 3.0])


def test_ar_fill_leaves_known_entries():
    e = np.arange(6.0).reshape(1, 6)
    for impl in BACKENDS.values():
        out = impl.ar_fill(e.copy(), np.array([[0.9]]), np.array([1], dtype=np.intp), np.ones((1, 6)))
        np.testing.assert_array_equal(out, e)
