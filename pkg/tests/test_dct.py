import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from fsatfusion.dct import (FrequencyIndex, dct_basis, dct_component, frequency_index_set,
                            norm_coeff, scaled_basis)
from fsatfusion.gradcheck import finite_diff_check
from fsatfusion.tensor import Tensor

import oracles


def test_dc_grid_is_ones():
    np.testing.assert_array_equal(dct_basis(0, 0, 3, 5), np.ones((3, 5)))


def test_first_vertical_mode_h2():
    g = dct_basis(1, 0, 2, 3)
    np.testing.assert_allclose(g[:, 0], [math.cos(math.pi / 4), math.cos(3 * math.pi / 4)])
    assert np.all(g == g[:, :1])


@pytest.mark.parametrize("H,W", [(2, 2), (5, 3), (8, 8)])
def test_nonzero_vertical_mode_sums_to_zero_over_rows(H, W):
    for a in range(1, H):
        for b in range(W):
            assert np.abs(dct_basis(a, b, H, W).sum(axis=0)).max() < 1e-12


def test_cached_grid_matches_direct_evaluation():
    H, W = 6, 7
    for a in range(H):
        for b in range(W):
            hh, ww = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
            direct = np.cos(np.pi * a * (hh + 0.5) / H) * np.cos(np.pi * b * (ww + 0.5) / W)
            assert np.abs(dct_basis(a, b, H, W) - direct).max() < 1e-7
    assert not dct_basis(1, 1, H, W).flags.writeable


def test_out_of_range_index():
    with pytest.raises(ValueError, match="out of range"):
        dct_basis(4, 0, 4, 4)
    with pytest.raises(ValueError):
        dct_component(np.zeros((2, 2)), (0, 2))


def test_constant_image_components():
    x = np.ones((4, 4))
    assert dct_component(x, (0, 0)) == pytest.approx(4.0, abs=1e-12)
    assert abs(dct_component(x, (1, 0))) < 1e-12


def test_inverse_expansion_round_trip(rng):
    x = rng.normal(size=(5, 7))
    coeffs = {(a, b): dct_component(x, (a, b)) for a in range(5) for b in range(7)}
    rebuilt = sum(c * scaled_basis(a, b, 5, 7) for (a, b), c in coeffs.items())
    assert np.abs(rebuilt - x).max() < 1e-5


def test_component_matches_loop(rng):
    x = rng.normal(size=(4, 6))
    for a, b in [(0, 0), (1, 2), (3, 5)]:
        assert dct_component(x, (a, b)) == pytest.approx(oracles.dct_coeff_loop(x, a, b), abs=1e-12)


def test_tensor_component_is_differentiable(rng):
    x = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
    assert finite_diff_check(lambda: dct_component(x, (2, 1)) * dct_component(x, (0, 3)), [x], h=1e-5) < 1e-5


def test_norm_coeff():
    assert norm_coeff(0, 4) == 0.5
    assert norm_coeff(3, 8) == 0.5


def test_zigzag_order():
    assert frequency_index_set(1, 4, 4) == [(0, 0)]
    assert frequency_index_set(3, 2, 2) == [(0, 0), (0, 1), (1, 0)]
    full = frequency_index_set(16, 4, 4)
    assert sorted(full) == [(a, b) for a in range(4) for b in range(4)]
    assert all(isinstance(f, FrequencyIndex) for f in full)
    keys = [(f.a + f.b, f.a) for f in full]
    assert keys == sorted(keys)


def test_zigzag_on_narrow_map():
    assert frequency_index_set(4, 1, 5) == [(0, 0), (0, 1), (0, 2), (0, 3)]


def test_too_many_frequencies():
    with pytest.raises(ValueError, match="distinct"):
        frequency_index_set(10, 3, 3)


grids = hnp.arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)),
                   elements=st.floats(-10, 10))


@given(grids)
def test_dc_is_proportional_to_mean(x):
    H, W = x.shape
    want = norm_coeff(0, H) * norm_coeff(0, W) * H * W * x.mean()
    assert abs(dct_component(x, (0, 0)) - want) < 1e-6


@given(grids, grids, st.floats(-3, 3), st.floats(-3, 3), st.data())
def test_component_is_linear(x, y, alpha, beta, data):
    H, W = min(x.shape[0], y.shape[0]), min(x.shape[1], y.shape[1])
    x, y = x[:H, :W], y[:H, :W]
    a = data.draw(st.integers(0, H - 1))
    b = data.draw(st.integers(0, W - 1))
    lhs = dct_component(alpha * x + beta * y, (a, b))
    rhs = alpha * dct_component(x, (a, b)) + beta * dct_component(y, (a, b))
    assert abs(lhs - rhs) < 1e-6
