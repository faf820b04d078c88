"""Unpaired colour correction of underwater images.

Two generators (underwater -> air and back) and two PatchGAN discriminators
trained with a least-squares adversarial term, cycle consistency and a
windowed SSIM term, all on a small numpy reverse-mode autodiff core.
"""

from .autograd import Tensor, default_dtype, no_grad, set_default_dtype
from .config import TrainConfig, load_config, toy_config
from .losses import LossReport, LossWeights, SsimParams

__version__ = "0.1.0"

__all__ = [
    "Tensor", "default_dtype", "no_grad", "set_default_dtype",
    "TrainConfig", "load_config", "toy_config",
    "LossReport", "LossWeights", "SsimParams",
]
