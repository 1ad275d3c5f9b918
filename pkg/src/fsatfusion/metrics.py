"""Fusion quality metrics: MI, NCIE, Qabf and SSIM, with CSV reports."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import correlate

from .losses import SOBEL_X, SOBEL_Y, max_image, ssim
from .tensor import no_grad

BINS = 256

# Xydeas-Petrovic sigmoid constants (strength, orientation)
QABF_GAMMA_G, QABF_KAPPA_G, QABF_SIGMA_G = 0.9994, -15.0, 0.5
QABF_GAMMA_A, QABF_KAPPA_A, QABF_SIGMA_A = 0.9879, -22.0, 0.8


def quantize(img) -> np.ndarray:
    """Map [0, 1] values to 8-bit levels with round-half-up."""
    v = np.floor(np.asarray(img, dtype=np.float64) * 255 + 0.5)
    return np.clip(v, 0, 255).astype(np.int64)


def _entropy_of_counts(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum())


def entropy(img, bins: int = BINS) -> float:
    """Shannon entropy in bits of the 8-bit histogram."""
    return _entropy_of_counts(np.bincount(quantize(img).ravel(), minlength=bins))


def joint_histogram(x, y) -> np.ndarray:
    qx, qy = quantize(x).ravel(), quantize(y).ravel()
    if qx.shape != qy.shape:
        raise ValueError("joint histogram needs equally sized images")
    return np.bincount(qx * BINS + qy, minlength=BINS * BINS).reshape(BINS, BINS)


def mutual_information(x, y) -> float:
    """``H(X) + H(Y) - H(X, Y)`` in bits."""
    joint = joint_histogram(x, y)
    return (_entropy_of_counts(joint.sum(axis=1)) + _entropy_of_counts(joint.sum(axis=0))
            - _entropy_of_counts(joint.ravel()))


def _check_shapes(*imgs) -> list[np.ndarray]:
    arrs = [np.asarray(a, dtype=np.float64) for a in imgs]
    if len({a.shape for a in arrs}) != 1:
        raise ValueError(f"image shapes differ: {[a.shape for a in arrs]}")
    return arrs


def mi_metric(F, A, B) -> float:
    F, A, B = _check_shapes(F, A, B)
    return mutual_information(F, A) + mutual_information(F, B)


# -- NCIE ---------------------------------------------------------------------
def rank_bins(x, bins: int = BINS) -> np.ndarray:
    """Equal-frequency bin of every sample: sorted rank * bins // n.

    Ties are broken by position so identical inputs bin identically.
    """
    flat = np.asarray(x, dtype=np.float64).ravel()
    order = np.argsort(flat, kind="stable")
    ranks = np.empty(flat.size, dtype=np.int64)
    ranks[order] = np.arange(flat.size)
    return ranks * bins // flat.size


def nonlinear_correlation(x, y, bins: int = BINS) -> float:
    """``(H(X) + H(Y) - H(X, Y)) / sqrt(H(X) H(Y))`` over rank bins, base ``bins``.

    When the pixel count is a multiple of ``bins`` both marginal entropies
    are exactly 1 and the denominator drops out; otherwise it keeps
    ``NCC(X, X) == 1``.
    """
    bx, by = rank_bins(x, bins), rank_bins(y, bins)
    joint = np.bincount(bx * bins + by, minlength=bins * bins)
    scale = math.log2(bins)
    hx = _entropy_of_counts(np.bincount(bx, minlength=bins)) / scale
    hy = _entropy_of_counts(np.bincount(by, minlength=bins)) / scale
    if hx == 0 or hy == 0:
        return 0.0
    return (hx + hy - _entropy_of_counts(joint) / scale) / math.sqrt(hx * hy)


def ncc_matrix(F, A, B) -> np.ndarray:
    imgs = _check_shapes(F, A, B)
    R = np.eye(3)
    for i in range(3):
        for j in range(i + 1, 3):
            R[i, j] = R[j, i] = nonlinear_correlation(imgs[i], imgs[j])
    return R


def ncie_metric(F, A, B) -> float:
    """``1 + sum (l/3) log_256(l/3)`` over eigenvalues ``l`` of the NCC matrix.

    Eigenvalues within 1e-12 of zero (or negative) contribute nothing.
    """
    lam = np.linalg.eigvalsh(ncc_matrix(F, A, B)) / 3
    lam = lam[lam > 1e-12]
    return float(1 + (lam * np.log2(lam)).sum() / math.log2(BINS))


# -- Qabf -----------------------------------------------------------------------
SOBEL_FLOOR = 1e-12  # responses below this are summation roundoff on flat regions


def sobel_components(img) -> tuple[np.ndarray, np.ndarray]:
    img = np.asarray(img, dtype=np.float64)
    out = []
    for k in (SOBEL_X, SOBEL_Y):
        g = correlate(img, k, mode="mirror")
        g[np.abs(g) < SOBEL_FLOOR] = 0.0
        out.append(g)
    return out[0], out[1]


def edge_strength_orientation(img) -> tuple[np.ndarray, np.ndarray]:
    gx, gy = sobel_components(img)
    g = np.hypot(gx, gy)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(gx == 0, np.pi / 2, np.arctan(gy / np.where(gx == 0, 1, gx)))
    return g, a


def edge_preservation(gS, aS, gF, aF) -> np.ndarray:
    """Per-pixel preservation of source edges in the fused image."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        G = np.where(gS > gF, gF / gS, np.where(gS < gF, gS / gF, 1.0))
    Aa = 1 - np.abs(aS - aF) / (np.pi / 2)
    Qg = QABF_GAMMA_G / (1 + np.exp(QABF_KAPPA_G * (G - QABF_SIGMA_G)))
    Qa = QABF_GAMMA_A / (1 + np.exp(QABF_KAPPA_A * (Aa - QABF_SIGMA_A)))
    return Qg * Qa


def qabf_metric(F, A, B) -> float:
    """Edge-strength weighted edge preservation from both sources, in [0, 1]."""
    F, A, B = _check_shapes(F, A, B)
    gF, aF = edge_strength_orientation(F)
    gA, aA = edge_strength_orientation(A)
    gB, aB = edge_strength_orientation(B)
    num = (edge_preservation(gA, aA, gF, aF) * gA + edge_preservation(gB, aB, gF, aF) * gB).sum()
    den = (gA + gB).sum()
    return float(num / den) if den > 0 else 0.0


def ssim_metric(F, A, B) -> float:
    """SSIM of the fused image against the pixelwise source maximum."""
    F, A, B = _check_shapes(F, A, B)
    with no_grad():
        return float(ssim(F, max_image(A, B)).data)


# -- reports --------------------------------------------------------------------
COLUMNS = ("pair", "mi", "ncie", "qabf", "ssim", "seconds")


@dataclass
class MetricsRow:
    pair: str
    mi: float
    ncie: float
    qabf: float
    ssim: float
    seconds: float = float("nan")


def evaluate_pair(F, A, B, pair: str = "", seconds: float = float("nan")) -> MetricsRow:
    return MetricsRow(pair, mi_metric(F, A, B), ncie_metric(F, A, B),
                      qabf_metric(F, A, B), ssim_metric(F, A, B), seconds)


@dataclass
class MetricsReport:
    rows: list[MetricsRow] = field(default_factory=list)

    def add(self, row: MetricsRow) -> None:
        self.rows.append(row)

    def mean(self) -> MetricsRow:
        if not self.rows:
            raise ValueError("empty report")
        vals = {k: float(np.mean([getattr(r, k) for r in self.rows])) for k in COLUMNS[1:]}
        return MetricsRow("mean", **vals)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for r in self.rows + [self.mean()]:
                d = asdict(r)
                w.writerow([d["pair"]] + [f"{d[k]:.4f}" for k in COLUMNS[1:]])

    @classmethod
    def from_csv(cls, path) -> "MetricsReport":
        """Read rows back; the trailing ``mean`` row is dropped."""
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls([MetricsRow(r["pair"], *(float(r[k]) for k in COLUMNS[1:]))
                    for r in rows if r["pair"] != "mean"])
