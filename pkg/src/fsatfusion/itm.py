"""Windowed self-attention transformer block with context broadcast."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import ops
from .tensor import Tensor


@dataclass
class ItmParams:
    wq: Tensor
    wk: Tensor
    wv: Tensor
    mlp_w1: Tensor
    mlp_b1: Tensor
    mlp_w2: Tensor
    mlp_b2: Tensor
    norm1_g: Tensor
    norm1_b: Tensor
    norm2_g: Tensor
    norm2_b: Tensor

    @classmethod
    def shapes(cls, C: int) -> dict[str, tuple]:
        return {
            "wq": (C, C), "wk": (C, C), "wv": (C, C),
            "mlp_w1": (C, 2 * C), "mlp_b1": (2 * C,),
            "mlp_w2": (2 * C, C), "mlp_b2": (C,),
            "norm1_g": (C,), "norm1_b": (C,), "norm2_g": (C,), "norm2_b": (C,),
        }

    @classmethod
    def zeros(cls, C: int, dtype=np.float32) -> "ItmParams":
        """All-zero weights with identity norms."""
        vals = {k: np.zeros(s, dtype) for k, s in cls.shapes(C).items()}
        vals["norm1_g"][:] = 1
        vals["norm2_g"][:] = 1
        return cls(**{k: Tensor(v) for k, v in vals.items()})

    def named(self) -> dict[str, Tensor]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class WindowGrid:
    """Book-keeping to undo :func:`window_partition`."""

    M: int
    N: int
    C: int
    H: int
    W: int
    Hp: int
    Wp: int

    @property
    def n_windows(self) -> int:
        return self.N * (self.Hp // self.M) * (self.Wp // self.M)


def window_partition(F: Tensor, M: int) -> tuple[Tensor, WindowGrid]:
    """Split ``N x C x H x W`` into ``windows x M^2 x C`` token matrices.

    H and W are reflect-padded up to multiples of ``M`` first; windows are
    ordered batch-major, then row-major over the window grid.
    """
    if M < 1:
        raise ValueError(f"window size must be >= 1, got {M}")
    N, C, H, W = F.shape
    Hp, Wp = -(-H // M) * M, -(-W // M) * M
    x = ops.pad2d(F, (0, Hp - H, 0, Wp - W), "reflect")
    x = x.reshape(N, C, Hp // M, M, Wp // M, M).transpose(0, 2, 4, 3, 5, 1)
    tokens = x.reshape(N * (Hp // M) * (Wp // M), M * M, C)
    return tokens, WindowGrid(M, N, C, H, W, Hp, Wp)


def window_merge(tokens: Tensor, grid: WindowGrid) -> Tensor:
    M, N, C = grid.M, grid.N, grid.C
    nh, nw = grid.Hp // M, grid.Wp // M
    x = tokens.reshape(N, nh, nw, M, M, C).transpose(0, 5, 1, 3, 2, 4)
    x = x.reshape(N, C, grid.Hp, grid.Wp)
    if (grid.Hp, grid.Wp) != (grid.H, grid.W):
        x = x[:, :, :grid.H, :grid.W]
    return x


def self_attention(X: Tensor, p: ItmParams) -> Tensor:
    """Single-head scaled dot-product attention over the token axis."""
    # the 1/sqrt(d_k) scale is applied to Q, which is cheaper than scaling scores
    Q = (X @ p.wq) * (1.0 / math.sqrt(X.shape[-1]))
    K, V = X @ p.wk, X @ p.wv
    scores = Q @ K.transpose(*range(K.ndim - 2), K.ndim - 1, K.ndim - 2)
    return ops.softmax_rows(scores) @ V


def context_broadcast(X: Tensor) -> Tensor:
    """Mix each token halfway toward the mean token of its window."""
    if X.shape[-2] < 1:
        raise ValueError("context_broadcast needs at least one token")
    return X * 0.5 + X.mean(axis=-2, keepdims=True) * 0.5


def mlp(X: Tensor, p: ItmParams) -> Tensor:
    return ops.relu(X @ p.mlp_w1 + p.mlp_b1) @ p.mlp_w2 + p.mlp_b2


def itm_forward(F: Tensor, p: ItmParams, M: int = 8, prenorm: bool = True) -> Tensor:
    X, grid = window_partition(F, M)
    if prenorm:
        X1 = X + self_attention(ops.layer_norm(X, p.norm1_g, p.norm1_b), p)
        X2 = X1 + mlp(ops.layer_norm(X1, p.norm2_g, p.norm2_b), p)
    else:
        X1 = X + self_attention(X, p)
        X2 = X1 + mlp(X1, p)
    return window_merge(context_broadcast(X2), grid)
