from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arpspline import basis as bs
from arpspline.errors import ConfigurationError, DataError, DomainError, ShapeError
from oracles import cox_de_boor, naive_difference_matrix


# -- B-splines ---------------------------------------------------------------

def test_order_zero_single_interval_is_one():
    b = bs.bspline_basis([0.5], bs.KnotGrid([0.0, 1.0], 0))
    assert b.values.shape == (1, 1)
    assert b.values[0, 0] == 1.0


def test_cubic_at_interior_knot_matches_exact_recursion():
    grid = bs.KnotGrid(np.arange(11.0), 3)
    row = bs.bspline_basis([5.0], grid).values[0]
    nz = row[row > 1e-14]
    # exact rational evaluation on the same padded knot vector
    t = [Fraction(v).limit_denominator() for v in grid.padded()]
    exact = [cox_de_boor(Fraction(5), t, i, 3) for i in range(len(t) - 4)]
    assert [e for e in exact if e] == [Fraction(1, 6), Fraction(2, 3), Fraction(1, 6)]
    np.testing.assert_allclose(nz, [1 / 6, 2 / 3, 1 / 6], atol=1e-14)
    np.testing.assert_allclose(row, [float(e) for e in exact], atol=1e-14)


@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_matches_exact_recursion_on_irregular_knots(order):
    knots = np.array([0.0, 0.5, 1.25, 2.0, 3.5, 4.0])
    grid = bs.KnotGrid(knots, order)
    t = [Fraction(v).limit_denominator() for v in grid.padded()]
    xs = [0.1, 0.5, 1.0, 2.2, 3.9]
    got = bs.bspline_basis(xs, grid).values
    for r, x in enumerate(xs):
        want = [float(cox_de_boor(Fraction(x).limit_denominator(10 ** 6), t, i, order))
                for i in range(grid.size)]
        np.testing.assert_allclose(got[r], want, atol=1e-12)


def test_right_endpoint_belongs_to_last_interval():
    grid = bs.KnotGrid.uniform(0.0, 1.0, 6, 2)
    row = bs.bspline_basis([1.0], grid).values[0]
    assert row[-1] == pytest.approx(1.0)
    assert row.sum() == pytest.approx(1.0, abs=1e-12)


def test_outside_range_names_value_and_position():
    grid = bs.KnotGrid.uniform(0.0, 1.0, 6, 2)
    with pytest.raises(DomainError, match=r"1\.5.*position 2"):
        bs.bspline_basis([0.1, 0.2, 1.5], grid)


def test_too_few_knots():
    with pytest.raises(ConfigurationError):
        bs.bspline_basis([0.5], bs.KnotGrid([0.0, 1.0], 1))


def test_compact_support():
    grid = bs.KnotGrid.uniform(0.0, 1.0, 10, 3)
    x = np.linspace(0, 1, 2001)
    vals = bs.bspline_basis(x, grid).values
    for j in range(vals.shape[1]):
        nz = x[vals[:, j] > 0]
        intervals = np.unique(np.clip(np.searchsorted(grid.knots, nz, side="right") - 1, 0, len(grid.knots) - 2))
        assert intervals.size <= grid.order + 1


@settings(max_examples=60, deadline=None)
@given(order=st.integers(0, 4), extra=st.integers(0, 8),
       x=st.lists(st.floats(-3, 7, allow_nan=False), min_size=1, max_size=40))
def test_partition_of_unity(order, extra, x):
    # smallest size with the required order + 2 knots is 2 * order + 1
    grid = bs.KnotGrid.uniform(-3.0, 7.0, 2 * order + 1 + extra, order)
    vals = bs.bspline_basis(np.array(x), grid).values
    np.testing.assert_allclose(vals.sum(axis=1), 1.0, atol=1e-10)
    assert np.all(vals >= 0)


# -- cyclic ------------------------------------------------------------------

def test_cyclic_wraps_period():
    grid = bs.KnotGrid.cyclic(24.0, 6, 2)
    b = bs.cyclic_bspline_basis([0.0, 24.0, 48.0, -24.0], grid).values
    assert b.shape == (4, 6)
    for r in range(1, 4):
        assert np.array_equal(b[0], b[r])


@settings(max_examples=60, deadline=None)
@given(x=st.floats(-100, 100, allow_nan=False), order=st.integers(0, 3), size=st.integers(5, 10),
       shift=st.integers(-3, 3))
def test_cyclic_shift_invariance(x, order, size, shift):
    grid = bs.KnotGrid.cyclic(24.0, size, order)
    xr = bs.reduce_periodic(np.array([x]), grid)
    a = bs.cyclic_bspline_basis(xr, grid).values
    b = bs.cyclic_bspline_basis(xr + 24.0 * shift, grid).values
    np.testing.assert_allclose(a, b, atol=1e-12)
    assert a.sum() == pytest.approx(1.0, abs=1e-10)


def test_cyclic_is_continuous_across_seam():
    grid = bs.KnotGrid.cyclic(24.0, 6, 2)
    a = bs.cyclic_bspline_basis([24.0 - 1e-9], grid).values
    b = bs.cyclic_bspline_basis([1e-9], grid).values
    np.testing.assert_allclose(a, b, atol=1e-7)


def test_cyclic_bad_period():
    with pytest.raises(ConfigurationError):
        bs.KnotGrid.cyclic(0.0, 6, 2)


# -- penalties ---------------------------------------------------------------

def test_first_difference_diagonal():
    k = bs.difference_penalty(4, 1, ridge=0.0)
    np.testing.assert_array_equal(np.diag(k.values), [1, 2, 2, 1])


def test_second_difference_diagonal():
    k = bs.difference_penalty(5, 2, ridge=0.0)
    np.testing.assert_array_equal(np.diag(k.values), [1, 5, 6, 5, 1])
    d = naive_difference_matrix(5, 2)
    np.testing.assert_array_equal(k.values, d.T @ d)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_penalty_null_space(k):
    d = 8
    pen = bs.difference_penalty(d, k, ridge=0.0)
    idx = np.arange(d, dtype=float)
    for deg in range(k):
        beta = idx ** deg
        assert beta @ pen.values @ beta == 0.0


@settings(max_examples=50, deadline=None)
@given(d=st.integers(3, 12), k=st.integers(1, 3), ridge=st.sampled_from([0.0, 1e-5, 1e-3]),
       seed=st.integers(0, 2 ** 16))
def test_quadratic_form_is_sum_of_squared_differences(d, k, ridge, seed):
    if k >= d:
        return
    beta = np.random.default_rng(seed).normal(size=d)
    pen = bs.difference_penalty(d, k, ridge)
    want = np.sum(np.diff(beta, n=k) ** 2) + ridge * beta @ beta
    assert pen.quadratic_form(beta) == pytest.approx(want, abs=1e-10)
    if ridge > 0:
        np.linalg.cholesky(pen.values)


def test_penalty_rejects_bad_orders():
    with pytest.raises(ConfigurationError):
        bs.difference_penalty(3, 3)
    with pytest.raises(ConfigurationError):
        bs.difference_penalty(5, 2, ridge=0.1)


def test_cyclic_penalty_annihilates_constants_and_wraps():
    pen = bs.difference_penalty(6, 2, ridge=0.0, cyclic=True)
    assert np.allclose(pen.values @ np.ones(6), 0)
    # circulant: every row is a shift of the first
    for r in range(6):
        np.testing.assert_array_equal(pen.values[r], np.roll(pen.values[0], r))


# -- tensor ------------------------------------------------------------------

def test_tensor_size_and_ordering():
    rng = np.random.default_rng(0)
    b1 = bs.BasisMatrix(rng.uniform(size=(3, 4)), [f"a{j}" for j in range(4)])
    b2 = bs.BasisMatrix(rng.uniform(size=(3, 5)), [f"b{j}" for j in range(5)])
    t = bs.tensor_basis(b1, b2)
    assert t.values.shape == (3, 20)
    # second covariate's index varies fastest
    assert t.values[1, 5 * 2 + 3] == b1.values[1, 2] * b2.values[1, 3]
    assert t.column_labels[:2] == ("a0:b0", "a0:b1")


def test_tensor_with_ones_is_identity():
    b1 = bs.bspline_basis(np.linspace(0, 1, 7), bs.KnotGrid.uniform(0, 1, 5, 2))
    ones = bs.BasisMatrix(np.ones((7, 1)), ["1"], unit_row_sums=True)
    np.testing.assert_array_equal(bs.tensor_basis(b1, ones).values, b1.values)


def test_tensor_row_mismatch():
    b1 = bs.BasisMatrix(np.ones((3, 2)), ["a", "b"])
    b2 = bs.BasisMatrix(np.ones((4, 2)), ["a", "b"])
    with pytest.raises(ShapeError):
        bs.tensor_basis(b1, b2)


def test_tensor_penalties_identity_and_dims():
    pair = bs.tensor_penalties(np.eye(2), np.eye(2))
    np.testing.assert_array_equal(pair.p1, np.eye(4))
    np.testing.assert_array_equal(pair.p2, np.eye(4))
    big = bs.tensor_penalties(bs.difference_penalty(6, 2), bs.difference_penalty(8, 2))
    assert big.p1.shape == big.p2.shape == (48, 48)


@settings(max_examples=40, deadline=None)
@given(d1=st.integers(3, 7), d2=st.integers(3, 7), seed=st.integers(0, 2 ** 16))
def test_kronecker_separability(d1, d2, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=d1), rng.normal(size=d2)
    k1, k2 = bs.difference_penalty(d1, 2), bs.difference_penalty(d2, 1)
    pair = bs.tensor_penalties(k1, k2)
    beta = np.kron(a, b)
    assert beta @ pair.p1 @ beta == pytest.approx((a @ k1.values @ a) * (b @ b), rel=1e-8, abs=1e-8)
    assert beta @ pair.p2 @ beta == pytest.approx((a @ a) * (b @ k2.values @ b), rel=1e-8, abs=1e-8)


# -- thin plate, factor, fourier ----------------------------------------------

def test_thin_plate_radial_values():
    spec = bs.ThinPlateSpec(num_knots=1, poly_order=1, spline_order=1)
    b = bs.thin_plate_basis([0.5, 0.2], spec, knots=[0.2])
    np.testing.assert_allclose(b.values[:, 1], [0.3, 0.0])
    np.testing.assert_allclose(b.values[:, 0], [0.5, 0.2])
    assert b.meta["fixed_columns"] == 1


def test_thin_plate_knots_at_quantiles():
    x = np.arange(1.0, 101.0)
    spec = bs.ThinPlateSpec(num_knots=5)
    b = bs.thin_plate_basis(x, spec)
    assert b.values.shape == (100, 6)
    np.testing.assert_allclose(b.meta["knots"], np.quantile(x, np.arange(1, 6) / 6))


def test_thin_plate_needs_distinct_values():
    with pytest.raises(ConfigurationError):
        bs.thin_plate_basis([1.0, 1.0, 2.0, 2.0], bs.ThinPlateSpec(num_knots=3))


def test_factor_one_hot():
    b = bs.factor_basis([3, 1, 7], bs.FactorSpec(7))
    np.testing.assert_array_equal(b.values[0], [0, 0, 1, 0, 0, 0, 0])
    np.testing.assert_array_equal(b.values.sum(axis=1), 1)
    assert b.unit_row_sums


def test_factor_bad_code_reports_row():
    with pytest.raises(DataError, match="row 1"):
        bs.factor_basis([2, 9], bs.FactorSpec(7))
    with pytest.raises(ConfigurationError):
        bs.FactorSpec(1)


def test_fourier_values():
    b = bs.fourier_basis([0.0], bs.FourierSpec(3, 12.0))
    np.testing.assert_array_equal(b.values[0, 0::2], 0.0)
    np.testing.assert_array_equal(b.values[0, 1::2], 1.0)
    q = bs.fourier_basis([np.pi / 2], bs.FourierSpec(1, np.pi)).values[0]
    np.testing.assert_allclose(q, [1.0, 0.0], atol=1e-15)
    assert b.column_labels == ("sin1", "cos1", "sin2", "cos2", "sin3", "cos3")
    assert not b.unit_row_sums


def test_fourier_columns_orthogonal():
    L = 5.0
    x = np.linspace(-L, L, 10_000, endpoint=False)
    v = bs.fourier_basis(x, bs.FourierSpec(4, L)).values
    gram = v.T @ v / x.size
    np.testing.assert_allclose(gram, 0.5 * np.eye(8), atol=1e-10)


def test_basis_matrix_rejects_non_finite():
    with pytest.raises(DomainError):
        bs.BasisMatrix(np.array([[np.nan]]), ["a"])
