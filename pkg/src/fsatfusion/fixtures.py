"""Deterministic synthetic infrared/visible pairs for tests and desk training.

A scene is a smooth illumination field with textured rectangles (what a
visible camera sees) and a few warm targets on a cool, blurry background
(what a thermal camera sees). Targets are partly hidden in the visible view
and textures are absent from the infrared one, so a good fusion has to take
detail from both.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .imageio import Image, save_pgm

TRAIN_SEEDS = tuple(range(100, 108))
HELDOUT_SEEDS = tuple(range(200, 204))
FIXTURE_SIZE = 64


def _smooth_field(rng: np.random.Generator, H: int, W: int, terms: int = 3) -> np.ndarray:
    yy, xx = np.mgrid[0:H, 0:W] / max(H, W)
    f = np.zeros((H, W))
    for _ in range(terms):
        fy, fx = rng.uniform(0.3, 2.0, 2)
        ph = rng.uniform(0, 2 * np.pi)
        f += np.cos(2 * np.pi * (fy * yy + fx * xx) + ph)
    return (f - f.min()) / (np.ptp(f) + 1e-12)


def _texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    kind = rng.integers(3)
    yy, xx = np.mgrid[0:h, 0:w]
    period = rng.integers(3, 8)
    if kind == 0:
        return ((xx // period) % 2).astype(float)
    if kind == 1:
        return (((xx // period) + (yy // period)) % 2).astype(float)
    angle = rng.uniform(0, np.pi)
    return 0.5 + 0.5 * np.cos(2 * np.pi * (np.cos(angle) * xx + np.sin(angle) * yy) / period)


def make_pair(seed: int, size: int = FIXTURE_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(ir, vi)`` float images in [0, 1] for one synthetic scene."""
    rng = np.random.default_rng(seed)
    H = W = size
    vi = 0.25 + 0.45 * _smooth_field(rng, H, W)
    for _ in range(rng.integers(3, 6)):
        h, w = rng.integers(size // 8, size // 3, 2)
        y, x = rng.integers(0, H - h), rng.integers(0, W - w)
        base, amp = rng.uniform(0.2, 0.7), rng.uniform(0.15, 0.3)
        vi[y:y + h, x:x + w] = base + amp * _texture(rng, h, w)
    vi += rng.normal(0, 0.01, (H, W))

    ir = 0.1 + 0.25 * _smooth_field(rng, H, W, terms=2)
    yy, xx = np.mgrid[0:H, 0:W]
    for _ in range(rng.integers(2, 4)):
        cy, cx = rng.uniform(0.15, 0.85, 2) * size
        ry, rx = rng.uniform(0.05, 0.12, 2) * size
        heat = rng.uniform(0.55, 0.85)
        blob = np.exp(-(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2) ** 2)
        ir = np.maximum(ir, heat * blob)
        # the target is dim and low-contrast in the visible view
        vi = vi * (1 - 0.5 * blob) + 0.15 * blob
    ir += rng.normal(0, 0.01, (H, W))
    return np.clip(ir, 0, 1), np.clip(vi, 0, 1)


def write_corpus(root, seeds, size: int = FIXTURE_SIZE) -> list[str]:
    """Write ``root/ir/<name>.pgm`` and ``root/vi/<name>.pgm`` for each seed."""
    root = Path(root)
    (root / "ir").mkdir(parents=True, exist_ok=True)
    (root / "vi").mkdir(parents=True, exist_ok=True)
    names = []
    for seed in seeds:
        ir, vi = make_pair(seed, size)
        name = f"scene{seed:03d}.pgm"
        save_pgm(Image(ir), root / "ir" / name)
        save_pgm(Image(vi), root / "vi" / name)
        names.append(name)
    return names


def fixture_root() -> Path:
    """Directory of the bundled corpus (``train/`` and ``heldout/``)."""
    return Path(__file__).parent / "data" / "fixtures"


def write_bundled(root=None) -> Path:
    root = Path(root) if root is not None else fixture_root()
    write_corpus(root / "train", TRAIN_SEEDS)
    write_corpus(root / "heldout", HELDOUT_SEEDS)
    return root
