"""Minimal reverse-mode autodiff and neural layers."""
from .tensor import Tensor, backward, no_grad, concat, stack, softmax, gelu, silu
from .nn import (Attention, LayerNorm, Linear, MLP, Module, Param, PatchEmbed, attention,
                 layer_norm, patch_embed, patchify, unpatchify)
from .optim import AdamW, cosine_lr
from . import checkpoint

__all__ = [
    "Tensor", "backward", "no_grad", "concat", "stack", "softmax", "gelu", "silu",
    "Attention", "LayerNorm", "Linear", "MLP", "Module", "Param", "PatchEmbed", "attention",
    "layer_norm", "patch_embed", "patchify", "unpatchify", "AdamW", "cosine_lr", "checkpoint",
]
