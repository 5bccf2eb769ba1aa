"""Full-reference quality assessment for superimposed AR scenes.

Numpy-only reverse-mode autodiff, ViT content encoders, cross-attention
quality decoders, knowledge-distillation heads, a synthetic data pipeline,
the standard IQA evaluation protocol and a command-line trainer.
"""

from .encoder import PROFILES, EncoderConfig
from .errors import ConfigError, DataError, NumericError, TransformARError
from .model import ModelConfig, TransformAR
from .scoring import LossConfig

__version__ = "0.1.0"

__all__ = [
    "PROFILES", "ConfigError", "DataError", "EncoderConfig", "LossConfig", "ModelConfig", "NumericError",
    "TransformAR", "TransformARError", "__version__",
]
