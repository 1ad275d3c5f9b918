import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from fsatfusion.gradcheck import finite_diff_report
from fsatfusion.itm import (ItmParams, context_broadcast, itm_forward, self_attention,
                            window_merge, window_partition)
from fsatfusion.tensor import Tensor

import oracles


def random_params(rng, C, scale=0.4, dtype=np.float64):
    vals = {k: rng.normal(scale=scale, size=s) for k, s in ItmParams.shapes(C).items()}
    vals["norm1_g"] += 1
    vals["norm2_g"] += 1
    return ItmParams(**{k: Tensor(v.astype(dtype)) for k, v in vals.items()})


def as_dict(p):
    return {k: t.data for k, t in p.named().items()}


# -- windows ---------------------------------------------------------------------
def test_single_window():
    tokens, grid = window_partition(Tensor(np.zeros((1, 3, 4, 4))), 4)
    assert tokens.shape == (1, 16, 3) and grid.n_windows == 1


def test_token_layout(rng):
    F = rng.normal(size=(2, 3, 4, 6))
    tokens, _ = window_partition(Tensor(F), 2)
    # window (n=1, row 1, col 2), token (1, 0) is pixel (3, 4) of batch 1
    np.testing.assert_array_equal(tokens.data[1 * 6 + 1 * 3 + 2, 2], F[1, :, 3, 4])


@given(st.integers(1, 2), st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_partition_round_trip_divisible(N, C, nh, nw, M):
    F = np.arange(N * C * nh * M * nw * M, dtype=np.float64).reshape(N, C, nh * M, nw * M)
    back = window_merge(*window_partition(Tensor(F), M))
    np.testing.assert_array_equal(back.data, F)


@given(st.integers(1, 11), st.integers(1, 11), st.integers(1, 5))
def test_partition_round_trip_padded(H, W, M):
    F = np.random.default_rng(H * 100 + W).normal(size=(1, 2, H, W))
    tokens, grid = window_partition(Tensor(F), M)
    assert grid.Hp % M == 0 and grid.Wp % M == 0
    np.testing.assert_array_equal(window_merge(tokens, grid).data, F)


def test_pad_to_eight_is_reflected(rng):
    F = rng.normal(size=(1, 1, 5, 5))
    tokens, grid = window_partition(Tensor(F), 4)
    assert (grid.Hp, grid.Wp) == (8, 8)
    padded = np.pad(F, ((0, 0), (0, 0), (0, 3), (0, 3)), mode="reflect")
    full = tokens.data.reshape(2, 2, 4, 4).transpose(0, 2, 1, 3).reshape(8, 8)
    np.testing.assert_array_equal(full, padded[0, 0])
    assert window_merge(tokens, grid).shape == (1, 1, 5, 5)


def test_window_size_validated():
    with pytest.raises(ValueError, match="window size"):
        window_partition(Tensor(np.zeros((1, 1, 4, 4))), 0)


# -- attention --------------------------------------------------------------------
def test_uniform_attention_averages():
    p = ItmParams.zeros(1, np.float64)
    p.wv = Tensor(np.eye(1))
    out = self_attention(Tensor(np.array([[0.0], [2.0]])), p)
    np.testing.assert_allclose(out.data, [[1.0], [1.0]])


def test_single_token_attention(rng):
    p = random_params(rng, 5)
    X = rng.normal(size=(1, 5))
    np.testing.assert_allclose(self_attention(Tensor(X), p).data, X @ p.wv.data, atol=1e-12)


def test_attention_formula(rng):
    p = random_params(rng, 8, scale=1.0)
    X = rng.normal(size=(4, 8))
    want = oracles.attention(X, p.wq.data, p.wk.data, p.wv.data)
    assert np.abs(self_attention(Tensor(X), p).data - want).max() < 1e-6


def test_attention_outputs_are_convex_combinations(rng):
    for seed in range(5):
        r = np.random.default_rng(seed)
        p = random_params(r, 6, scale=2.0)
        X = r.normal(size=(9, 6))
        V = X @ p.wv.data
        out = self_attention(Tensor(X), p).data
        assert np.all(out >= V.min(axis=0) - 1e-12) and np.all(out <= V.max(axis=0) + 1e-12)


# -- context broadcast ------------------------------------------------------------------
def test_broadcast_fixed_point():
    X = np.tile([[1.5, -2.0, 3.0]], (4, 1))
    np.testing.assert_array_equal(context_broadcast(Tensor(X)).data, X)


def test_broadcast_hand_values():
    np.testing.assert_allclose(context_broadcast(Tensor(np.array([[0.0], [2.0]]))).data, [[0.5], [1.5]])


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 12), st.integers(1, 5)),
                  elements=st.floats(-100, 100)))
def test_broadcast_preserves_mean(X):
    out = context_broadcast(Tensor(X)).data
    assert np.abs(out.mean(axis=-2) - X.mean(axis=-2)).max() < 1e-7


# -- full module ------------------------------------------------------------------------
def test_zero_weights_reduce_to_broadcast(rng):
    F = rng.normal(size=(1, 4, 8, 8))
    out = itm_forward(Tensor(F), ItmParams.zeros(4, np.float64), M=4).data
    tokens, grid = window_partition(Tensor(F), 4)
    want = window_merge(context_broadcast(tokens), grid).data
    np.testing.assert_allclose(out, want, atol=1e-12)


@pytest.mark.parametrize("H", [8, 12, 224])
def test_shape_contract(rng, H):
    F = Tensor(rng.normal(size=(1, 4, H, H)).astype(np.float32))
    assert itm_forward(F, random_params(rng, 4, dtype=np.float32), M=8).shape == (1, 4, H, H)


def test_formula_chain_oracle(rng):
    p = random_params(rng, 4)
    F = rng.normal(size=(1, 4, 8, 8))
    got = itm_forward(Tensor(F), p, M=4).data
    assert np.abs(got - oracles.itm_chain(F, as_dict(p), 4)).max() < 1e-5


def test_without_prenorm(rng):
    p = random_params(rng, 3)
    F = rng.normal(size=(1, 3, 4, 4))
    X = F[0].reshape(3, 16).T
    X1 = X + oracles.attention(X, p.wq.data, p.wk.data, p.wv.data)
    X2 = X1 + np.maximum(X1 @ p.mlp_w1.data + p.mlp_b1.data, 0) @ p.mlp_w2.data + p.mlp_b2.data
    X3 = 0.5 * X2 + 0.5 * X2.mean(axis=0)
    got = itm_forward(Tensor(F), p, M=4, prenorm=False).data
    np.testing.assert_allclose(got[0], X3.T.reshape(3, 4, 4), atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_itm_gradients(seed):
    rng = np.random.default_rng(seed)
    p = random_params(rng, 4)
    F = Tensor(rng.normal(size=(1, 4, 6, 6)), requires_grad=True)
    probe = Tensor(rng.normal(size=(1, 4, 6, 6)))
    named = dict(p.named(), F=F)
    for t in named.values():
        t.requires_grad = True
    report = finite_diff_report(lambda: (itm_forward(F, p, M=4) * probe).sum(), named,
                                h=1e-6, reduce="tensor")
    assert max(report.values()) < 1e-5, report
