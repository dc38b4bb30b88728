"""Long-short alignment experiments at desk scale.

Subpackages by concern: ``autodiff``/``optim`` (the float64 reverse-mode
engine), ``model`` (decoder-only transformer with four positional-encoding
variants), ``tasks`` (binary-sequence data and output reparameterization),
``misalign`` (SCE/L2 divergences, overlap plans, combined loss), ``theory``
(linear-attention closed forms and bounds), ``training`` (loops and sweeps),
``experiment`` (corpus + variant grid), ``cli`` (entry point).
"""

from .autodiff import Tensor
from .model import ModelConfig, PositionalEncoding, TransformerModel

__version__ = "0.1.0"

__all__ = ["Tensor", "ModelConfig", "PositionalEncoding", "TransformerModel", "__version__"]
