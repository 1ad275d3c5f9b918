"""2-D DCT-II basis grids and per-frequency projections."""
from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .tensor import Tensor


class FrequencyIndex(NamedTuple):
    a: int  # vertical
    b: int  # horizontal


def _check(a: int, b: int, H: int, W: int) -> None:
    if not (0 <= a < H and 0 <= b < W):
        raise ValueError(f"frequency ({a}, {b}) out of range for a {H}x{W} map")


def norm_coeff(k: int, n: int) -> float:
    """DCT normaliser: sqrt(1/n) for the DC index, sqrt(2/n) otherwise."""
    return math.sqrt((1.0 if k == 0 else 2.0) / n)


@lru_cache(maxsize=4096)
def _basis(a: int, b: int, H: int, W: int) -> np.ndarray:
    rows = np.cos(np.pi * a / H * (np.arange(H) + 0.5))
    cols = np.cos(np.pi * b / W * (np.arange(W) + 0.5))
    grid = np.outer(rows, cols)
    grid.setflags(write=False)
    return grid


def dct_basis(a: int, b: int, H: int, W: int) -> np.ndarray:
    """Unnormalised cosine grid ``cos(pi a (h+1/2)/H) * cos(pi b (w+1/2)/W)``.

    Grids are cached per ``(a, b, H, W)`` and returned read-only (float64).
    """
    _check(a, b, H, W)
    return _basis(a, b, H, W)


@lru_cache(maxsize=4096)
def _scaled(a: int, b: int, H: int, W: int) -> np.ndarray:
    g = _basis(a, b, H, W) * (norm_coeff(a, H) * norm_coeff(b, W))
    g.setflags(write=False)
    return g


def scaled_basis(a: int, b: int, H: int, W: int) -> np.ndarray:
    """Basis grid multiplied by both normalisers (orthonormal DCT atom)."""
    _check(a, b, H, W)
    return _scaled(a, b, H, W)


def dct_component(x, idx: FrequencyIndex | tuple[int, int]):
    """Coefficient ``f_ab`` of a single ``H x W`` grid.

    Accepts a numpy array (returns a float) or a 2-D :class:`Tensor`
    (returns a differentiable scalar tensor).
    """
    a, b = idx
    if isinstance(x, Tensor):
        H, W = x.shape
        atom = scaled_basis(a, b, H, W).astype(x.dtype)
        return Tensor.from_op(np.asarray((x.data * atom).sum()), (x,),
                              lambda g: (g * atom,), "dct_component")
    x = np.asarray(x, dtype=np.float64)
    H, W = x.shape
    return float((x * scaled_basis(a, b, H, W)).sum())


def frequency_index_set(count: int, H: int, W: int) -> list[FrequencyIndex]:
    """First ``count`` frequencies in zigzag order: by ``a + b``, then ``a``."""
    if count > H * W:
        raise ValueError(f"{count} distinct frequencies requested but a {H}x{W} map has {H * W}")
    out: list[FrequencyIndex] = []
    s = 0
    while len(out) < count:
        for a in range(0, s + 1):
            b = s - a
            if a < H and b < W:
                out.append(FrequencyIndex(a, b))
                if len(out) == count:
                    break
        s += 1
    return out
