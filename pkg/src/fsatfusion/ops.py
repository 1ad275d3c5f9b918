"""Differentiable primitives on :class:`~fsatfusion.tensor.Tensor`."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import Tensor, matmul, unbroadcast  # noqa: F401  (re-export)

PAD_MODES = ("zero", "reflect")


# -- elementwise ------------------------------------------------------------
def relu(x: Tensor) -> Tensor:
    d = x.data
    return Tensor.from_op(np.maximum(d, 0), (x,), lambda g: (g * (d > 0),), "relu")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor.from_op(y, (x,), lambda g: (g * (1 - y * y),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so neither branch overflows
    d = x.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype, copy=False)
    return Tensor.from_op(y, (x,), lambda g: (g * y * (1 - y),), "sigmoid")


_ACTIVATIONS = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid}


def activation(x: Tensor, kind: str) -> Tensor:
    try:
        return _ACTIVATIONS[kind](x)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return Tensor.from_op(y, (x,), lambda g: (g * y,), "exp")


def sqrt(x: Tensor) -> Tensor:
    """Square root; the gradient is taken as 0 where the output is exactly 0."""
    y = np.sqrt(x.data)

    def bw(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(y > 0, g / (2 * y), 0)
        return (d.astype(y.dtype),)
    return Tensor.from_op(y, (x,), bw, "sqrt")


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; ties send the gradient to ``a``."""
    take_a = a.data >= b.data
    return Tensor.from_op(
        np.where(take_a, a.data, b.data), (a, b),
        lambda g: (unbroadcast(g * take_a, a.shape), unbroadcast(g * ~take_a, b.shape)),
        "maximum")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))
    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=axis),
                          tuple(tensors), bw, "concat")


def _row_sum(x: np.ndarray) -> np.ndarray:
    # BLAS matrix-vector product; much faster than sum() over a short last axis
    return (x @ np.ones(x.shape[-1], dtype=x.dtype))[..., None]


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, with per-row max subtraction."""
    y = x.data - x.data.max(axis=-1, keepdims=True)
    np.exp(y, out=y)
    y /= _row_sum(y)

    def bw(g):
        return (y * (g - _row_sum(g * y)),)
    return Tensor.from_op(y, (x,), bw, "softmax")


# -- padding / convolution ---------------------------------------------------
def _pad_index(n: int, before: int, after: int) -> np.ndarray:
    return np.pad(np.arange(n), (before, after), mode="reflect")


def _fold(g: np.ndarray, idx: np.ndarray, before: int, n: int, axis: int) -> np.ndarray:
    """Adjoint of ``take(idx, axis)`` for a reflect index map."""
    g = np.moveaxis(g, axis, 0)
    out = g[before:before + n].copy()
    for j in range(len(idx)):
        if j < before or j >= before + n:
            out[idx[j]] += g[j]
    return np.moveaxis(out, 0, axis)


def pad2d(x: Tensor, pads: tuple[int, int, int, int], mode: str = "zero") -> Tensor:
    """Pad the last two axes by ``(top, bottom, left, right)``.

    ``reflect`` mirrors about the edge pixel without repeating it.
    """
    if mode not in PAD_MODES:
        raise ValueError(f"padding mode must be one of {PAD_MODES}, got {mode!r}")
    top, bottom, left, right = pads
    if not any(pads):
        return x
    H, W = x.shape[-2:]
    if mode == "zero":
        out = np.zeros(x.shape[:-2] + (H + top + bottom, W + left + right), dtype=x.dtype)
        out[..., top:top + H, left:left + W] = x.data
        return Tensor.from_op(out, (x,),
                              lambda g: (g[..., top:top + H, left:left + W],), "pad")
    ih = _pad_index(H, top, bottom)
    iw = _pad_index(W, left, right)
    out = x.data.take(ih, axis=-2).take(iw, axis=-1)

    def bw(g):
        g = _fold(g, iw, left, W, g.ndim - 1)
        return (_fold(g, ih, top, H, g.ndim - 2),)
    return Tensor.from_op(out, (x,), bw, "pad")


_BLOCK_ELEMS = 1 << 17  # im2col block budget; keeps the stacked windows cache-resident


def _tap_offsets(k: int, wp: int) -> list[int]:
    return [p * wp + q for p in range(k) for q in range(k)]


def _blocks(span: int, rows: int):
    width = 1 << max(10, (_BLOCK_ELEMS // rows).bit_length() - 1)
    for s in range(0, span, width):
        yield s, min(span, s + width)


def _gather(flat: np.ndarray, offsets: list[int], s: int, e: int) -> np.ndarray:
    cols = np.empty((len(offsets), flat.shape[0], e - s), dtype=flat.dtype)
    for t, off in enumerate(offsets):
        cols[t] = flat[:, s + off:e + off]
    return cols.reshape(-1, e - s)


def _correlate_valid(xp: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Valid correlation of a channel-major ``Cin x N x Hp x Wp`` array.

    Each image is treated as one flat row per channel, so kernel tap
    ``(p, q)`` becomes a shift by ``p * Wp + q``. Shifted windows are
    stacked block by block (im2col) and contracted with one matrix product
    per block. Results land on the padded grid; positions whose window wraps
    a row edge are cropped afterwards.
    """
    cout, cin, k, _ = w.shape
    _, n, hp, wp = xp.shape
    flat = xp.reshape(cin, -1)
    span = flat.shape[1] - (k - 1) * (wp + 1)
    offsets = _tap_offsets(k, wp)
    wmat = w.transpose(0, 2, 3, 1).reshape(cout, -1)
    out = np.zeros((cout, flat.shape[1]), dtype=np.result_type(xp, w))
    for s, e in _blocks(span, wmat.shape[1]):
        out[:, s:e] = wmat @ _gather(flat, offsets, s, e)
    return out.reshape(cout, n, hp, wp)[:, :, :hp - k + 1, :wp - k + 1]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           padding: str = "zero") -> Tensor:
    """'Same' 2-D cross-correlation (stride 1, odd square kernel).

    Parameters
    ----------
    x : Tensor
        ``N x Cin x H x W`` input.
    weight : Tensor
        ``Cout x Cin x k x k`` kernel, applied without flipping.
    bias : Tensor, optional
        ``Cout`` vector.
    padding : {'zero', 'reflect'}
        How the border is extended to keep the output at ``H x W``.
    """
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ValueError(
            f"conv2d: input {x.shape} incompatible with weight {weight.shape} "
            "(expected N x Cin x H x W and Cout x Cin x k x k)")
    k = weight.shape[2]
    if k % 2 == 0 or weight.shape[3] != k:
        raise ValueError(f"conv2d: kernel must be odd and square, got {weight.shape[2:]}")
    r = k // 2
    xp = pad2d(x, (r, r, r, r), padding)
    xt = np.ascontiguousarray(xp.data.transpose(1, 0, 2, 3))
    w = weight.data
    out = _correlate_valid(xt, w).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data[:, None, None]
    out = np.ascontiguousarray(out)
    N, _, H, W = x.shape
    cin, _, Hp, Wp = xt.shape

    def bw(g):
        cout = g.shape[1]
        wide = np.zeros((cout, N, Hp, Wp), dtype=g.dtype)
        wide[:, :, :H, :W] = g.transpose(1, 0, 2, 3)
        flat = xt.reshape(cin, -1)
        span = flat.shape[1] - (k - 1) * (Wp + 1)
        g2 = wide.reshape(cout, -1)
        offsets = _tap_offsets(k, Wp)
        wmat = w.transpose(0, 2, 3, 1).reshape(cout, -1)
        gmat = np.zeros_like(wmat)
        gx = np.zeros_like(flat)
        for s, e in _blocks(span, wmat.shape[1]):
            gmat += g2[:, s:e] @ _gather(flat, offsets, s, e).T
            dcols = (wmat.T @ g2[:, s:e]).reshape(len(offsets), cin, e - s)
            for t, off in enumerate(offsets):
                gx[:, s + off:e + off] += dcols[t]
        gw = gmat.reshape(cout, k, k, cin).transpose(0, 3, 1, 2)
        gb = g.sum(axis=(0, 2, 3))
        return gx.reshape(cin, N, Hp, Wp).transpose(1, 0, 2, 3), gw, gb

    parents = (xp, weight) if bias is None else (xp, weight, bias)
    return Tensor.from_op(out, parents, bw, "conv2d")


# -- normalisation -------------------------------------------------------------
@dataclass
class BatchNormState:
    """Running statistics of a batch-norm layer."""

    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32) -> "BatchNormState":
        return cls(np.zeros(channels, dtype), np.ones(channels, dtype))


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
                training: bool) -> Tensor:
    """Per-channel batch normalisation over N, H, W.

    In training mode the batch statistics normalise the input and the
    running statistics are updated in place as
    ``running = momentum * running + (1 - momentum) * batch`` (the running
    variance uses the unbiased batch variance).
    """
    N, C, H, W = x.shape
    m = N * H * W
    shp = (1, C, 1, 1)
    eps = state.eps
    if training:
        if m < 2:
            raise ValueError(
                "batchnorm2d: training mode needs at least 2 values per channel "
                f"(got N*H*W = {m})")
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        mom = state.momentum
        state.mean[...] = mom * state.mean + (1 - mom) * mu
        state.var[...] = mom * state.var + (1 - mom) * var * m / (m - 1)
    else:
        mu, var = state.mean, state.var
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu.reshape(shp)) * inv.reshape(shp)
    g_ = gamma.data.reshape(shp)
    out = g_ * xhat + beta.data.reshape(shp)

    def bw(g):
        gg = (g * xhat).sum(axis=(0, 2, 3))
        gb = g.sum(axis=(0, 2, 3))
        dxhat = g * g_
        if training:
            dx = (inv.reshape(shp) / m) * (
                m * dxhat
                - dxhat.sum(axis=(0, 2, 3), keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True))
        else:
            dx = dxhat * inv.reshape(shp)
        return dx, gg, gb
    return Tensor.from_op(out.astype(x.dtype), (x, gamma, beta), bw, "batchnorm2d")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardise over the last axis, then scale and shift."""
    d = x.shape[-1]
    xhat = x.data - _row_sum(x.data) / d
    inv = 1.0 / np.sqrt(_row_sum(xhat * xhat) / d + eps)
    xhat *= inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        lead = tuple(range(g.ndim - 1))
        gg = (g * xhat).sum(axis=lead)
        gb = g.sum(axis=lead)
        dxhat = g * gamma.data
        dx = (inv / d) * (d * dxhat - _row_sum(dxhat) - xhat * _row_sum(dxhat * xhat))
        return dx, gg, gb
    return Tensor.from_op(out.astype(x.dtype, copy=False), (x, gamma, beta), bw, "layer_norm")


def channel_reduce(x: Tensor, kind: str) -> Tensor:
    """Reduce ``N x C x H x W`` across channels to ``N x 1 x H x W``.

    ``max`` routes its gradient to the first maximal channel; ``std`` is the
    population standard deviation, with zero gradient where it vanishes.
    """
    d = x.data
    C = d.shape[1]
    if kind == "max":
        arg = d.argmax(axis=1)[:, None]
        out = np.take_along_axis(d, arg, axis=1)

        def bw(g):
            gx = np.zeros_like(d)
            np.put_along_axis(gx, arg, g, axis=1)
            return (gx,)
        return Tensor.from_op(out, (x,), bw, "channel_max")
    if kind == "std":
        flat = d.max(axis=1, keepdims=True) == d.min(axis=1, keepdims=True)
        centred = np.where(flat, 0, d - d.mean(axis=1, keepdims=True)).astype(d.dtype)
        s = np.sqrt((centred * centred).mean(axis=1, keepdims=True))

        def bw(g):
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(s > 0, g / (C * s), 0)
            return ((scale * centred).astype(d.dtype),)
        return Tensor.from_op(s, (x,), bw, "channel_std")
    raise ValueError(f"channel_reduce kind must be 'max' or 'std', got {kind!r}")
