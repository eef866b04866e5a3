"""Array autodiff, layers, optimisation and gradient verification."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check, grad_check_parameters
from .nn import (EncoderBlock, FeedForward, LayerNorm, Linear, Module, MultiHeadAttention,
                 Parameter, sinusoidal_positions)
from .optim import AdamW, OptimizerState, adamw_step, clip_grad_norm, cosine_lr
from .tensor import (Tensor, attention, concat, cross_entropy, default_dtype, embedding, gelu,
                     get_default_dtype, layer_norm, linear, matmul, no_grad, pad_stack, softmax,
                     softmax_cross_entropy)

__all__ = [
    "AdamW", "EncoderBlock", "FeedForward", "LayerNorm", "Linear", "Module",
    "MultiHeadAttention", "OptimizerState", "Parameter", "Tensor", "adamw_step", "attention",
    "clip_grad_norm", "concat", "cosine_lr", "cross_entropy", "default_dtype", "embedding",
    "gelu", "get_default_dtype", "grad_check", "grad_check_parameters", "layer_norm", "linear",
    "load_checkpoint", "matmul", "no_grad", "pad_stack", "save_checkpoint",
    "sinusoidal_positions", "softmax", "softmax_cross_entropy",
]
