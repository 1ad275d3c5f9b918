"""Infrared/visible image fusion on a small numpy autodiff core."""
from .network import (ABLATIONS, ModelParams, NetworkConfig, forward, fuse_forward,
                      init_params, load_params, save_params, zero_params)
from .tensor import Tensor, backward, no_grad

__version__ = "0.1.0"

__all__ = ["ABLATIONS", "ModelParams", "NetworkConfig", "Tensor", "backward", "forward",
           "fuse_forward", "init_params", "load_params", "no_grad", "save_params",
           "zero_params", "__version__"]
