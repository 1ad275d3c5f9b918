"""Paired infrared/visible image directories."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imageio import Image, ImageFormatError, load_image, rgb_to_yuv

IMAGE_SUFFIXES = (".pgm", ".ppm")


class DataError(ValueError):
    """A dataset or image pair that cannot be used."""


@dataclass(frozen=True)
class Pair:
    name: str
    ir: Path
    vi: Path


@dataclass
class DatasetIndex:
    """Pairs matched by file stem between ``root/ir`` and ``root/vi``.

    Files present on only one side are left out and listed in ``unmatched``.
    """

    root: Path
    pairs: list[Pair] = field(default_factory=list)
    unmatched: list[str] = field(default_factory=list)

    @classmethod
    def scan(cls, root) -> "DatasetIndex":
        root = Path(root)
        sides = {}
        for side in ("ir", "vi"):
            d = root / side
            if not d.is_dir():
                raise DataError(f"{root}: missing '{side}/' subdirectory")
            sides[side] = {p.stem: p for p in sorted(d.iterdir())
                           if p.suffix.lower() in IMAGE_SUFFIXES}
        ir, vi = sides["ir"], sides["vi"]
        names = sorted(ir.keys() & vi.keys())
        unmatched = sorted((ir.keys() ^ vi.keys()))
        if unmatched:
            warnings.warn(f"{root}: {len(unmatched)} file(s) without a partner: "
                          f"{', '.join(unmatched[:5])}", stacklevel=2)
        return cls(root, [Pair(n, ir[n], vi[n]) for n in names], unmatched)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


def luminance(img: Image) -> np.ndarray:
    """Gray images as-is; RGB images reduced to their BT.601 Y channel."""
    return img.data if img.channels == 1 else rgb_to_yuv(img)[0].data


def load_pair(pair: Pair) -> tuple[np.ndarray, np.ndarray]:
    """``(ir, vi)`` gray arrays; raises :class:`DataError` on any problem."""
    try:
        ir, vi = load_image(pair.ir), load_image(pair.vi)
    except (OSError, ImageFormatError) as exc:
        raise DataError(f"pair {pair.name}: {exc}") from exc
    if ir.channels != 1:
        raise DataError(f"pair {pair.name}: infrared image must be grayscale")
    if ir.size != vi.size:
        raise DataError(f"pair {pair.name}: IR is {ir.width}x{ir.height} but "
                        f"VI is {vi.width}x{vi.height}")
    return ir.data, luminance(vi)


def load_all(index: DatasetIndex) -> tuple[list[str], list[tuple[np.ndarray, np.ndarray]], list[str]]:
    """Load every pair, skipping unreadable ones with a warning.

    Returns ``(names, pairs, skipped)``.
    """
    names, pairs, skipped = [], [], []
    for pair in index:
        try:
            pairs.append(load_pair(pair))
            names.append(pair.name)
        except DataError as exc:
            warnings.warn(f"skipping {exc}", stacklevel=2)
            skipped.append(pair.name)
    return names, pairs, skipped
