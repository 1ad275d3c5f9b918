"""Training losses: pixel MSE, Sobel texture, SSIM against the max image."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import Tensor

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = SOBEL_X.T.copy()
SOBEL_EPS = 1e-8

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 10.0
    gamma: float = 100.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass
class LossReport:
    pixel: Tensor
    texture: Tensor
    ssim: Tensor
    total: Tensor

    def values(self) -> dict[str, float]:
        return {k: float(getattr(self, k).data) for k in ("pixel", "texture", "ssim", "total")}


def as_batch(img, dtype=None) -> Tensor:
    """Lift ``H x W`` / ``N x H x W`` / ``N x 1 x H x W`` input to a 4-D tensor."""
    t = img if isinstance(img, Tensor) else Tensor(np.asarray(img), dtype=dtype)
    if t.ndim == 2:
        return t.reshape(1, 1, *t.shape)
    if t.ndim == 3:
        return t.reshape(t.shape[0], 1, *t.shape[1:])
    return t


def _same(*ts: Tensor) -> None:
    shapes = {t.shape for t in ts}
    if len(shapes) != 1:
        raise ValueError(f"image shapes differ: {sorted(shapes)}")


def _lift3(F, VI, IR):
    F = as_batch(F)
    VI, IR = as_batch(VI, F.dtype), as_batch(IR, F.dtype)
    _same(F, VI, IR)
    return F, VI, IR


def pixel_loss(F, VI, IR) -> Tensor:
    F, VI, IR = _lift3(F, VI, IR)
    d1, d2 = F - VI, F - IR
    return (d1 * d1 + d2 * d2).mean()


def sobel_gradient(I) -> Tensor:
    """Sobel magnitude ``sqrt(gx^2 + gy^2 + eps)`` with reflect borders."""
    I = as_batch(I)
    k = Tensor(np.stack([SOBEL_X, SOBEL_Y])[:, None].astype(I.dtype))
    g = ops.conv2d(I, k, None, "reflect")
    return ops.sqrt((g * g).sum(axis=1, keepdims=True) + SOBEL_EPS)


def max_image(VI, IR):
    """Pixelwise maximum of the two sources (arrays in, array out)."""
    if isinstance(VI, Tensor) or isinstance(IR, Tensor):
        VI, IR = as_batch(VI), as_batch(IR)
        _same(VI, IR)
        return ops.maximum(VI, IR)
    VI, IR = np.asarray(VI), np.asarray(IR)
    if VI.shape != IR.shape:
        raise ValueError(f"image shapes differ: {VI.shape} vs {IR.shape}")
    return np.maximum(VI, IR)


def texture_loss(F, VI, IR) -> Tensor:
    """RMS gap between the fused gradient map and the larger source gradient.

    Per image this is the l2 norm of the difference divided by sqrt(H*W);
    batches are averaged.
    """
    F, VI, IR = _lift3(F, VI, IR)
    target = np.maximum(sobel_gradient(VI.detach()).data, sobel_gradient(IR.detach()).data)
    d = sobel_gradient(F) - Tensor(target)
    N, _, H, W = d.shape
    per_image = ops.sqrt((d * d).reshape(N, -1).sum(axis=1))
    return per_image.mean() * (1.0 / np.sqrt(H * W))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim_map(X, Y) -> Tensor:
    """Local SSIM, Gaussian-weighted, reflect-padded, ``N x 1 x H x W``."""
    X = as_batch(X)
    Y = as_batch(Y, X.dtype)
    _same(X, Y)
    N = X.shape[0]
    win = Tensor(gaussian_window()[None, None].astype(X.dtype))
    stats = ops.conv2d(ops.concat([X, Y, X * X, Y * Y, X * Y], axis=0), win, None, "reflect")
    mx, my = stats[:N], stats[N:2 * N]
    sxx = stats[2 * N:3 * N] - mx * mx
    syy = stats[3 * N:4 * N] - my * my
    sxy = stats[4 * N:] - mx * my
    num = (mx * my * 2.0 + SSIM_C1) * (sxy * 2.0 + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (sxx + syy + SSIM_C2)
    return num / den


def ssim(X, Y) -> Tensor:
    return ssim_map(X, Y).mean()


def ssim_loss(F, VI, IR) -> Tensor:
    F, VI, IR = _lift3(F, VI, IR)
    target = Tensor(np.maximum(VI.data, IR.data))
    return 1.0 - ssim(F, target)


def total_loss(F, VI, IR, w: LossWeights = LossWeights()) -> LossReport:
    F, VI, IR = _lift3(F, VI, IR)
    lp = pixel_loss(F, VI, IR)
    lt = texture_loss(F, VI, IR)
    ls = ssim_loss(F, VI, IR)
    total = lp * w.alpha + lt * w.beta + ls * w.gamma
    return LossReport(lp, lt, ls, total)
