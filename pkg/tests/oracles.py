"""Slow, obviously-correct reference implementations used only by the tests.

Nothing here imports the package's numerical kernels; each oracle is a
direct loop or a straight-line formula over numpy arrays.
"""
from __future__ import annotations

import math

import numpy as np


def reflect_index(i: int, n: int) -> int:
    """Mirror an out-of-range index about the edge samples (``d c b | a b c d | c b a``)."""
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = i % period
    return i if i < n else period - i


def conv2d_loop(x, w, b=None, padding="zero"):
    """Six nested loops of 'same' cross-correlation."""
    N, Cin, H, W = x.shape
    Cout, _, k, _ = w.shape
    r = k // 2
    out = np.zeros((N, Cout, H, W))
    for n in range(N):
        for co in range(Cout):
            for i in range(H):
                for j in range(W):
                    acc = 0.0 if b is None else float(b[co])
                    for ci in range(Cin):
                        for p in range(k):
                            for q in range(k):
                                ii, jj = i + p - r, j + q - r
                                if padding == "zero":
                                    if not (0 <= ii < H and 0 <= jj < W):
                                        continue
                                else:
                                    ii, jj = reflect_index(ii, H), reflect_index(jj, W)
                                acc += float(x[n, ci, ii, jj]) * float(w[co, ci, p, q])
                    out[n, co, i, j] = acc
    return out


def matmul_loop(a, b):
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            out[i, j] = sum(float(a[i, t]) * float(b[t, j]) for t in range(k))
    return out


def channel_reduce_loop(x, kind):
    N, C, H, W = x.shape
    out = np.zeros((N, 1, H, W))
    for n in range(N):
        for i in range(H):
            for j in range(W):
                vals = [float(x[n, c, i, j]) for c in range(C)]
                if kind == "max":
                    out[n, 0, i, j] = max(vals)
                else:
                    mu = sum(vals) / C
                    out[n, 0, i, j] = math.sqrt(sum((v - mu) ** 2 for v in vals) / C)
    return out


def dct_coeff_loop(x, a, b):
    H, W = x.shape
    la = math.sqrt((1 if a == 0 else 2) / H)
    lb = math.sqrt((1 if b == 0 else 2) / W)
    acc = 0.0
    for h in range(H):
        for w in range(W):
            acc += (math.cos(math.pi * a / H * (h + 0.5)) * math.cos(math.pi * b / W * (w + 0.5))
                    * float(x[h, w]))
    return la * lb * acc


# -- attention blocks as formula chains ------------------------------------------
def softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def layer_norm(x, g, b, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def attention(X, wq, wk, wv):
    Q, K, V = X @ wq, X @ wk, X @ wv
    return softmax(Q @ K.T / math.sqrt(X.shape[-1])) @ V


def itm_chain(F, p, M):
    """ITM on one ``1 x C x H x W`` map with H, W divisible by M, window by window."""
    _, C, H, W = F.shape
    out = np.zeros_like(F, dtype=np.float64)
    for wi in range(H // M):
        for wj in range(W // M):
            patch = F[0, :, wi * M:(wi + 1) * M, wj * M:(wj + 1) * M]
            X = patch.reshape(C, M * M).T.astype(np.float64)
            X1 = X + attention(layer_norm(X, p["norm1_g"], p["norm1_b"]), p["wq"], p["wk"], p["wv"])
            Z = layer_norm(X1, p["norm2_g"], p["norm2_b"])
            X2 = X1 + np.maximum(Z @ p["mlp_w1"] + p["mlp_b1"], 0) @ p["mlp_w2"] + p["mlp_b2"]
            X3 = 0.5 * X2 + 0.5 * X2.mean(axis=0, keepdims=True)
            out[0, :, wi * M:(wi + 1) * M, wj * M:(wj + 1) * M] = X3.T.reshape(C, M, M)
    return out


def sigmoid(x):
    return 1 / (1 + np.exp(-x))


def fsam_chain(F, p, freqs):
    """Frequency gate then spatial gate, one channel group per listed frequency."""
    N, C, H, W = F.shape
    per = C // len(freqs)
    desc = np.zeros((N, C))
    for n in range(N):
        for c in range(C):
            a, b = freqs[c // per]
            desc[n, c] = dct_coeff_loop(F[n, c], a, b)
    att = sigmoid(desc @ p["fc_w"] + p["fc_b"])
    Ff = F * att[:, :, None, None]
    pool = np.concatenate([channel_reduce_loop(Ff, "max"), channel_reduce_loop(Ff, "std")], axis=1)
    s = sigmoid(conv2d_loop(pool, p["sconv_w"], p["sconv_b"], "zero"))
    return Ff * s


# -- metrics -------------------------------------------------------------------------
def sobel_loop(img):
    """Sobel x/y responses with mirrored borders, pixel by pixel.

    Responses under 1e-12 are flushed to zero, as in the metric.
    """
    H, W = img.shape
    kx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    gx = np.zeros((H, W))
    gy = np.zeros((H, W))
    for i in range(H):
        for j in range(W):
            sx = sy = 0.0
            for p in range(3):
                for q in range(3):
                    v = float(img[reflect_index(i + p - 1, H), reflect_index(j + q - 1, W)])
                    sx += kx[p][q] * v
                    sy += kx[q][p] * v
            gx[i, j] = sx if abs(sx) >= 1e-12 else 0.0
            gy[i, j] = sy if abs(sy) >= 1e-12 else 0.0
    return gx, gy


def qabf_loop(F, A, B):
    """Xydeas-Petrovic score evaluated one pixel at a time with ``math``."""
    def strength_angle(img):
        gx, gy = sobel_loop(img)
        H, W = img.shape
        g = np.zeros((H, W))
        a = np.zeros((H, W))
        for i in range(H):
            for j in range(W):
                g[i, j] = math.sqrt(gx[i, j] ** 2 + gy[i, j] ** 2)
                a[i, j] = math.pi / 2 if gx[i, j] == 0 else math.atan(gy[i, j] / gx[i, j])
        return g, a

    gF, aF = strength_angle(F)
    num = den = 0.0
    for S in (A, B):
        gS, aS = strength_angle(S)
        H, W = S.shape
        for i in range(H):
            for j in range(W):
                s, f = gS[i, j], gF[i, j]
                if s > f:
                    G = f / s
                elif s < f:
                    G = s / f
                else:
                    G = 1.0
                Aa = 1 - abs(aS[i, j] - aF[i, j]) / (math.pi / 2)
                Qg = 0.9994 / (1 + math.exp(-15 * (G - 0.5)))
                Qa = 0.9879 / (1 + math.exp(-22 * (Aa - 0.8)))
                num += Qg * Qa * s
                den += s
    return num / den if den > 0 else 0.0


def entropy_counts(values) -> float:
    counts: dict = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    n = len(values)
    return -sum(c / n * math.log2(c / n) for c in counts.values())


def quantize_list(img):
    return [int(math.floor(float(v) * 255 + 0.5)) for v in np.ravel(img)]


def mi_dict(x, y) -> float:
    qx, qy = quantize_list(x), quantize_list(y)
    return entropy_counts(qx) + entropy_counts(qy) - entropy_counts(list(zip(qx, qy)))


def ssim_loop(X, Y, size=11, sigma=1.5):
    """Gaussian-windowed SSIM with reflected borders, one window at a time."""
    r = size // 2
    g1 = [math.exp(-((t - r) ** 2) / (2 * sigma ** 2)) for t in range(size)]
    s = sum(g1)
    g1 = [v / s for v in g1]
    H, W = X.shape
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    total = 0.0
    for i in range(H):
        for j in range(W):
            mx = my = xx = yy = xy = 0.0
            for p in range(size):
                for q in range(size):
                    wgt = g1[p] * g1[q]
                    ii, jj = reflect_index(i + p - r, H), reflect_index(j + q - r, W)
                    a, b = float(X[ii, jj]), float(Y[ii, jj])
                    mx += wgt * a
                    my += wgt * b
                    xx += wgt * a * a
                    yy += wgt * b * b
                    xy += wgt * a * b
            vx, vy, cxy = xx - mx * mx, yy - my * my, xy - mx * my
            total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return total / (H * W)
