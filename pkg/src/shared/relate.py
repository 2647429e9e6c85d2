"""OCR-to-object relational reasoning."""

from dataclasses import dataclass

import torch
from torch import nn

from .attention import AttnParams, PoolParams, attn, condense
from .errors import ConfigError, ShapeError
from .utils import RELATIONAL_MODES

POSITION_DIM = 8


@dataclass
class RelationalOutput:
    semantic: torch.Tensor
    positional: torch.Tensor
    fused: torch.Tensor


def semantic_attention(uO: torch.Tensor, uD: torch.Tensor, params: AttnParams) -> torch.Tensor:
    if uD.shape[0] == 0:
        raise ShapeError("semantic attention needs at least one object")
    return attn(uO, uD, uD, params)


def positional_attention(pO: torch.Tensor, pD: torch.Tensor, uD: torch.Tensor, params: AttnParams) -> torch.Tensor:
    """Scores come from the 8-dim positions; the mixed values are the object vectors."""
    if uD.shape[0] == 0:
        raise ShapeError("positional attention needs at least one object")
    return attn(pO, pD, uD, params)


def fuse(semantic: torch.Tensor, positional: torch.Tensor) -> torch.Tensor:
    if semantic.shape != positional.shape:
        raise ShapeError(f"cannot fuse {tuple(semantic.shape)} with {tuple(positional.shape)}")
    return semantic + positional


def object_weighted_sum_baseline(uD: torch.Tensor, w) -> torch.Tensor:
    if uD.shape[0] == 0:
        raise ShapeError("object weighted sum needs at least one object")
    return condense(uD, w)


class RelationalReasoner(nn.Module):
    """
    Produces the attended object embedding of every OCR row.

    ``mode`` selects full (semantic + positional), one attention alone,
    the object weighted sum broadcast to every row, or none (zeros).
    With no objects the output is zeros in every mode.
    """

    def __init__(self, object_dim: int, attention_size: int, mode: str = 'full'):
        super().__init__()
        if mode not in RELATIONAL_MODES:
            raise ConfigError(f"unknown relational mode {mode!r}")
        self.mode = mode
        self.semantic = AttnParams(object_dim, attention_size)
        self.positional = AttnParams(POSITION_DIM, attention_size)
        self.pool = PoolParams(object_dim)

    def forward(self, uO: torch.Tensor, pO: torch.Tensor, uD: torch.Tensor, pD: torch.Tensor) -> RelationalOutput:
        zeros = uO.new_zeros(uO.shape)
        if uD.shape[0] == 0 or uO.shape[0] == 0 or self.mode == 'none':
            return RelationalOutput(semantic=zeros, positional=zeros, fused=zeros)
        if self.mode == 'weighted_sum':
            pooled = object_weighted_sum_baseline(uD, self.pool).expand(uO.shape[0], -1)
            return RelationalOutput(semantic=pooled, positional=zeros, fused=pooled)

        semantic = semantic_attention(uO, uD, self.semantic) if self.mode != 'positional_only' else zeros
        positional = positional_attention(pO, pD, uD, self.positional) if self.mode != 'semantic_only' else zeros
        return RelationalOutput(semantic=semantic, positional=positional, fused=fuse(semantic, positional))
