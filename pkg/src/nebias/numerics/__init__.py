"""Minimal dense-tensor math with reverse-mode gradients and transformer blocks."""

from .gradcheck import finite_difference_check
from .nn import (
    Adam,
    FeedForward,
    LayerNorm,
    Linear,
    MultiHeadAttention,
    ParameterSet,
    TransformerDecoderLayer,
    TransformerEncoderLayer,
    causal_mask,
    sinusoidal_positions,
    xavier,
)
from .tensor import (
    MaskedRowError,
    NonFiniteError,
    Tensor,
    bce_with_logits,
    concat,
    embedding,
    layer_norm,
    log_softmax,
    masked_softmax,
    set_finite_checks,
    stack,
)

__all__ = [
    "Adam",
    "FeedForward",
    "LayerNorm",
    "Linear",
    "MaskedRowError",
    "MultiHeadAttention",
    "NonFiniteError",
    "ParameterSet",
    "Tensor",
    "TransformerDecoderLayer",
    "TransformerEncoderLayer",
    "bce_with_logits",
    "causal_mask",
    "concat",
    "embedding",
    "finite_difference_check",
    "layer_norm",
    "log_softmax",
    "masked_softmax",
    "set_finite_checks",
    "sinusoidal_positions",
    "stack",
    "xavier",
]
