"""Frequency-then-spatial attention gating of a feature map."""
from __future__ import annotations

from dataclasses import dataclass, fields
from functools import lru_cache

import numpy as np

from . import ops
from .dct import FrequencyIndex, frequency_index_set, scaled_basis
from .tensor import Tensor

SPATIAL_KERNEL = 7


@dataclass
class FsamParams:
    fc_w: Tensor      # C x C, applied as desc @ fc_w
    fc_b: Tensor      # C
    sconv_w: Tensor   # 1 x 2 x 7 x 7
    sconv_b: Tensor   # 1

    @classmethod
    def shapes(cls, C: int) -> dict[str, tuple]:
        k = SPATIAL_KERNEL
        return {"fc_w": (C, C), "fc_b": (C,), "sconv_w": (1, 2, k, k), "sconv_b": (1,)}

    @classmethod
    def zeros(cls, C: int, dtype=np.float32) -> "FsamParams":
        return cls(**{k: Tensor(np.zeros(s, dtype)) for k, s in cls.shapes(C).items()})

    def named(self) -> dict[str, Tensor]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class GroupSpec:
    """Channel groups and the DCT frequency each group is projected on.

    With ``freqs=None`` the first ``n_groups`` zigzag frequencies of the
    feature map at hand are used; explicit lists are taken as given.
    """

    n_groups: int
    freqs: tuple[FrequencyIndex, ...] | None = None

    def resolve(self, C: int, H: int, W: int) -> tuple[FrequencyIndex, ...]:
        if self.n_groups < 1 or C % self.n_groups:
            raise ValueError(f"{self.n_groups} groups do not divide {C} channels")
        if self.freqs is None:
            return tuple(frequency_index_set(self.n_groups, H, W))
        if len(self.freqs) != self.n_groups:
            raise ValueError(f"{len(self.freqs)} frequencies given for {self.n_groups} groups")
        return tuple(FrequencyIndex(*f) for f in self.freqs)


@lru_cache(maxsize=64)
def _atoms(C: int, H: int, W: int, freqs: tuple, dtype: str) -> np.ndarray:
    per = C // len(freqs)
    stack = np.stack([scaled_basis(a, b, H, W) for a, b in freqs])
    out = np.repeat(stack, per, axis=0).astype(dtype)
    out.setflags(write=False)
    return out


def frequency_descriptor(F: Tensor, spec: GroupSpec) -> Tensor:
    """Project each channel onto its group's DCT atom: ``N x C`` coefficients."""
    N, C, H, W = F.shape
    atoms = _atoms(C, H, W, spec.resolve(C, H, W), F.dtype.str)
    flat = atoms.reshape(C, H * W)
    desc = np.einsum("ncp,cp->nc", F.data.reshape(N, C, H * W), flat)
    return Tensor.from_op(desc, (F,), lambda g: (g[:, :, None, None] * atoms,),
                          "frequency_descriptor")


def frequency_attention(F: Tensor, p: FsamParams, spec: GroupSpec) -> tuple[Tensor, Tensor]:
    att = ops.sigmoid(frequency_descriptor(F, spec) @ p.fc_w + p.fc_b)
    N, C = att.shape
    return att, F * att.reshape(N, C, 1, 1)


def spatial_pool(F: Tensor) -> Tensor:
    """Channel max and channel std stacked as a 2-channel map."""
    return ops.concat([ops.channel_reduce(F, "max"), ops.channel_reduce(F, "std")], axis=1)


def spatial_attention(F: Tensor, p: FsamParams) -> tuple[Tensor, Tensor]:
    att = ops.sigmoid(ops.conv2d(spatial_pool(F), p.sconv_w, p.sconv_b, "zero"))
    return att, F * att


def fsam_forward(F: Tensor, p: FsamParams, spec: GroupSpec) -> Tensor:
    _, Ff = frequency_attention(F, p, spec)
    _, Fs = spatial_attention(Ff, p)
    return Fs
