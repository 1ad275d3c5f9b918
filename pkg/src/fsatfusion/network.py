"""The fusion network: shallow convs, stacked FSAT blocks, 1x1 reconstruction."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ops
from .fsam import FsamParams, GroupSpec, fsam_forward
from .itm import ItmParams, itm_forward
from .tensor import Tensor, no_grad

ABLATIONS = ("full", "no_fsam", "no_itm", "reverse")
MAGIC = b"FSAT"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class NetworkConfig:
    C: int = 16
    cin: int = 2
    n_fsat: int = 2
    window: int = 8
    n_groups: int = 16
    ablation: str = "full"
    prenorm: bool = True

    def __post_init__(self):
        if self.cin != 2:
            raise ValueError(f"cin must be 2 (IR + VI), got {self.cin}")
        if self.n_fsat < 1:
            raise ValueError(f"n_fsat must be >= 1, got {self.n_fsat}")
        if self.n_groups < 1 or self.C % self.n_groups:
            raise ValueError(f"group count {self.n_groups} must divide C={self.C}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")

    @property
    def group_spec(self) -> GroupSpec:
        return GroupSpec(self.n_groups)

    @property
    def uses_itm(self) -> bool:
        return self.ablation != "no_itm"

    @property
    def uses_fsam(self) -> bool:
        return self.ablation != "no_fsam"


def param_shapes(config: NetworkConfig) -> dict[str, tuple]:
    """Learnable tensor names and shapes, in canonical order."""
    C = config.C
    shapes: dict[str, tuple] = {
        "conv1.weight": (C, config.cin, 3, 3), "conv1.bias": (C,),
        "conv2.weight": (C, C, 3, 3), "conv2.bias": (C,),
        "bn.gamma": (C,), "bn.beta": (C,),
    }
    for i in range(config.n_fsat):
        if config.uses_itm:
            shapes.update({f"fsat{i}.itm.{k}": s for k, s in ItmParams.shapes(C).items()})
        if config.uses_fsam:
            shapes.update({f"fsat{i}.fsam.{k}": s for k, s in FsamParams.shapes(C).items()})
    shapes["recon.weight"] = (1, C, 1, 1)
    shapes["recon.bias"] = (1,)
    return shapes


BUFFERS = ("bn.running_mean", "bn.running_var")


@dataclass
class ModelParams:
    config: NetworkConfig
    tensors: dict[str, Tensor]
    bn: ops.BatchNormState = field(default=None)

    def __post_init__(self):
        if self.bn is None:
            self.bn = ops.BatchNormState.fresh(self.config.C, self.dtype)

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def named(self) -> dict[str, Tensor]:
        return dict(self.tensors)

    def count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def itm(self, i: int) -> ItmParams:
        return ItmParams(**{k: self.tensors[f"fsat{i}.itm.{k}"] for k in ItmParams.shapes(1)})

    def fsam(self, i: int) -> FsamParams:
        return FsamParams(**{k: self.tensors[f"fsat{i}.fsam.{k}"] for k in FsamParams.shapes(1)})

    def buffers(self) -> dict[str, np.ndarray]:
        return {"bn.running_mean": self.bn.mean, "bn.running_var": self.bn.var}

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def requires_grad_(self, flag: bool = True) -> "ModelParams":
        for t in self.tensors.values():
            t.requires_grad = flag
        return self

    def astype(self, dtype) -> "ModelParams":
        """Deep copy in another float precision."""
        bn = ops.BatchNormState(self.bn.mean.astype(dtype), self.bn.var.astype(dtype),
                                self.bn.momentum, self.bn.eps)
        return ModelParams(self.config,
                           {k: Tensor(v.data.astype(dtype)) for k, v in self.tensors.items()}, bn)

    def copy(self) -> "ModelParams":
        return self.astype(self.dtype)


def _fan_in(name: str, shape: tuple) -> int:
    if len(shape) == 4:
        return shape[1] * shape[2] * shape[3]
    return shape[0]


def init_params(config: NetworkConfig, seed: int = 0, dtype=np.float32) -> ModelParams:
    """Fan-in scaled uniform weights, zero biases, unit norm gains.

    Every weight is drawn from ``U(-b, b)`` with ``b = 1/sqrt(fan_in)``.
    """
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("gamma", "norm1_g", "norm2_g"):
            arr = np.ones(shape)
        elif leaf in ("weight", "wq", "wk", "wv", "mlp_w1", "mlp_w2", "fc_w", "sconv_w"):
            bound = 1.0 / np.sqrt(_fan_in(name, shape))
            arr = rng.uniform(-bound, bound, size=shape)
        else:
            arr = np.zeros(shape)
        tensors[name] = Tensor(arr.astype(dtype))
    return ModelParams(config, tensors)


def zero_params(config: NetworkConfig, dtype=np.float32) -> ModelParams:
    """Every learnable tensor zero except normalisation gains (one)."""
    p = init_params(config, 0, dtype)
    for name, t in p.tensors.items():
        if not name.endswith(("gamma", "norm1_g", "norm2_g")):
            t.data[...] = 0
    return p


# -- forward ---------------------------------------------------------------
def _plane(img) -> np.ndarray:
    arr = getattr(img, "data", img)
    arr = np.asarray(arr)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ValueError(f"expected a grayscale H x W image, got shape {arr.shape}")
    return arr


def concat_inputs(ir, vi, dtype=np.float32) -> Tensor:
    """Stack IR (channel 0) and VI (channel 1) into a ``1 x 2 x H x W`` tensor."""
    a, b = _plane(ir), _plane(vi)
    if a.shape != b.shape:
        raise ValueError(f"IR and VI sizes differ: IR {a.shape[1]}x{a.shape[0]}, "
                         f"VI {b.shape[1]}x{b.shape[0]} (width x height)")
    return Tensor(np.stack([a, b])[None].astype(dtype))


def shallow_extract(F_in: Tensor, params: ModelParams, training: bool = False) -> Tensor:
    x = ops.relu(ops.conv2d(F_in, params["conv1.weight"], params["conv1.bias"]))
    x = ops.conv2d(x, params["conv2.weight"], params["conv2.bias"])
    x = ops.batchnorm2d(x, params["bn.gamma"], params["bn.beta"], params.bn, training)
    return ops.relu(x)


def fsat_forward(F: Tensor, i: int, params: ModelParams) -> Tensor:
    """One FSAT block with its outer residual, honouring the ablation switch."""
    cfg = params.config
    spec = cfg.group_spec

    def itm(x):
        return itm_forward(x, params.itm(i), cfg.window, cfg.prenorm)

    def fsam(x):
        return fsam_forward(x, params.fsam(i), spec)

    if cfg.ablation == "full":
        body = fsam(itm(F))
    elif cfg.ablation == "no_fsam":
        body = itm(F)
    elif cfg.ablation == "no_itm":
        body = fsam(F)
    else:
        body = itm(fsam(F))
    return F + body


def forward(F_in: Tensor, params: ModelParams, training: bool = False) -> Tensor:
    """``N x 2 x H x W`` sources to ``N x 1 x H x W`` fused image in [0, 1]."""
    x = shallow_extract(F_in, params, training)
    for i in range(params.config.n_fsat):
        x = fsat_forward(x, i, params)
    y = ops.tanh(ops.conv2d(x, params["recon.weight"], params["recon.bias"]))
    return (y + 1.0) * 0.5


def fuse_forward(ir, vi, params: ModelParams) -> np.ndarray:
    """Fuse one registered pair in inference mode; returns an ``H x W`` array."""
    with no_grad():
        out = forward(concat_inputs(ir, vi, params.dtype), params, training=False)
    return out.data[0, 0]


# -- model file ----------------------------------------------------------------
class ModelFileError(ValueError):
    """Base class for unreadable or incompatible model files."""


class BadMagicError(ModelFileError):
    pass


class VersionMismatchError(ModelFileError):
    pass


class TruncatedFileError(ModelFileError):
    pass


class ShapeMismatchError(ModelFileError):
    pass


def _u32(*vals) -> bytes:
    return struct.pack(f"<{len(vals)}I", *vals)


def save_params(params: ModelParams, path) -> None:
    """Write ``params`` (and batch-norm running stats) as a model file.

    Layout, all integers little-endian u32::

        "FSAT" version
        C cin n_fsat window n_groups prenorm  tag_len tag
        { name_len name rank dims... float32[prod(dims)] } *
    """
    cfg = params.config
    tag = cfg.ablation.encode()
    chunks = [MAGIC, _u32(FORMAT_VERSION),
              _u32(cfg.C, cfg.cin, cfg.n_fsat, cfg.window, cfg.n_groups, int(cfg.prenorm), len(tag)),
              tag]
    records = [(k, t.data) for k, t in params.tensors.items()] + list(params.buffers().items())
    for name, arr in records:
        raw = name.encode("utf-8")
        chunks += [_u32(len(raw)), raw, _u32(arr.ndim, *arr.shape),
                   np.ascontiguousarray(arr, dtype="<f4").tobytes()]
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(f"truncated record: needed {n} bytes for {what} at offset "
                                     f"{self.pos}, file has {len(self.buf) - self.pos} left")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str, n: int = 1):
        vals = struct.unpack(f"<{n}I", self.take(4 * n, what))
        return vals[0] if n == 1 else vals

    @property
    def done(self) -> bool:
        return self.pos >= len(self.buf)


def load_params(path, config: NetworkConfig | None = None) -> ModelParams:
    """Read a model file; if ``config`` is given, tensors must match its shapes."""
    r = _Reader(Path(path).read_bytes())
    magic = r.take(4, "magic") if len(r.buf) >= 4 else r.buf
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = r.u32("version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"format version {version} unsupported (expected {FORMAT_VERSION})")
    C, cin, n_fsat, window, n_groups, prenorm, tag_len = r.u32("config block", 7)
    tag = r.take(tag_len, "ablation tag").decode("utf-8")
    file_cfg = NetworkConfig(C=C, cin=cin, n_fsat=n_fsat, window=window,
                             n_groups=n_groups, ablation=tag, prenorm=bool(prenorm))
    arrays: dict[str, np.ndarray] = {}
    while not r.done:
        name = r.take(r.u32("name length"), "tensor name").decode("utf-8")
        rank = r.u32(f"rank of {name}")
        dims = tuple(int(d) for d in struct.unpack(f"<{rank}I", r.take(4 * rank, f"dims of {name}")))
        n = int(np.prod(dims)) if dims else 1
        raw = r.take(4 * n, f"data of {name}")
        arrays[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(dims)

    cfg = config or file_cfg
    expected = dict(param_shapes(cfg))
    expected.update({b: (cfg.C,) for b in BUFFERS})
    for name, shape in expected.items():
        got = arrays.get(name)
        if got is None:
            raise ShapeMismatchError(f"tensor {name!r}: expected shape {shape}, missing from file")
        if got.shape != shape:
            raise ShapeMismatchError(f"tensor {name!r}: expected shape {shape}, file has {got.shape}")
    extra = sorted(set(arrays) - set(expected))
    if extra:
        raise ShapeMismatchError(f"tensor {extra[0]!r}: present in file but not in config")
    tensors = {k: Tensor(arrays[k].copy()) for k in param_shapes(cfg)}
    bn = ops.BatchNormState(arrays["bn.running_mean"].copy(), arrays["bn.running_var"].copy())
    return ModelParams(cfg, tensors, bn)
