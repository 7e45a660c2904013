"""memefuse: segment-aware multimodal meme affect classification.

A desk-scale stack: a recorded reverse-mode tensor engine, GloVe-backed
trainable embeddings, a two-layer BiLSTM text encoder, a text-conditioned
visual-region filter, multi-hop structured attention, attentive multimodal
fusion, per-task classification heads, weighted NLL training, and a
macro/micro-F1 evaluation harness.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ContractError,
    GradientAbsentError,
    MemefuseError,
    NumericError,
    ParseError,
    ShapeError,
    ValidationError,
)
from .tensorcore import Tape, Tensor, backward, grad_check

__all__ = [
    "ConfigError",
    "ContractError",
    "GradientAbsentError",
    "MemefuseError",
    "NumericError",
    "ParseError",
    "ShapeError",
    "ValidationError",
    "Tape",
    "Tensor",
    "backward",
    "grad_check",
    "__version__",
]
