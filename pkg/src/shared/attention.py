"""
The attention operator Attn(A, B, C) with diagonal-bilinear scores,
self-attention, and linear condensation pooling.

    score_ij = ReLU(a_i U) diag(D) ReLU(b_j U)^T
    alpha_i  = softmax_j(score_ij)
    out_i    = sum_j alpha_ij c_j
"""

import math
from typing import Tuple, Union

import torch
from torch import nn

from .errors import ShapeError


class AttnParams(nn.Module):
    """U: [d x k] projection, D: the k diagonal entries."""

    def __init__(self, input_dim: int, attention_size: int):
        super().__init__()
        if input_dim < 1 or attention_size < 1:
            raise ShapeError(f"attention dims must be positive, got d={input_dim}, k={attention_size}")
        self.U = nn.Parameter(torch.empty(input_dim, attention_size))
        self.D = nn.Parameter(torch.ones(attention_size))
        nn.init.xavier_uniform_(self.U)

    @property
    def input_dim(self) -> int:
        return self.U.shape[0]


class PoolParams(nn.Module):
    """The vector w of beta_i ~ exp(w^T h_i)."""

    def __init__(self, input_dim: int):
        super().__init__()
        self.w = nn.Parameter(torch.empty(input_dim))
        nn.init.uniform_(self.w, -1.0 / math.sqrt(input_dim), 1.0 / math.sqrt(input_dim))


def stable_softmax(scores: torch.Tensor, dim: int = -1) -> torch.Tensor:
    shifted = scores - scores.max(dim=dim, keepdim=True).values.detach()
    weights = torch.exp(shifted)
    return weights / weights.sum(dim=dim, keepdim=True)


def attention_scores(A: torch.Tensor, B: torch.Tensor, params: AttnParams) -> torch.Tensor:
    return (torch.relu(A @ params.U) * params.D) @ torch.relu(B @ params.U).transpose(0, 1)


def attn(A: torch.Tensor, B: torch.Tensor, C: torch.Tensor, params: AttnParams,
         return_weights: bool = False) -> Union[torch.Tensor, Tuple[torch.Tensor, torch.Tensor]]:
    if B.dim() != 2 or C.dim() != 2 or A.dim() != 2:
        raise ShapeError("attn expects 2-d matrices")
    if B.shape[0] == 0:
        raise ShapeError("attn needs at least one key row")
    if B.shape[0] != C.shape[0]:
        raise ShapeError(f"keys and values differ in rows: {B.shape[0]} vs {C.shape[0]}")
    if A.shape[1] != B.shape[1] or A.shape[1] != params.input_dim:
        raise ShapeError(
            f"query/key dims must match the params: A {A.shape[1]}, B {B.shape[1]}, U {params.input_dim}")
    weights = stable_softmax(attention_scores(A, B, params), dim=-1)
    output = weights @ C
    if return_weights:
        return output, weights
    return output


def self_attention(H: torch.Tensor, params: AttnParams) -> torch.Tensor:
    if H.dim() != 2 or H.shape[0] == 0:
        raise ShapeError("self_attention needs a non-empty matrix")
    return attn(H, H, H, params)


def condense(H: torch.Tensor, pool: Union[PoolParams, torch.Tensor], return_weights: bool = False):
    """Softmax(H w)-weighted sum of the rows of H."""
    if H.dim() != 2 or H.shape[0] == 0:
        raise ShapeError("condense needs a non-empty matrix")
    w = pool.w if isinstance(pool, PoolParams) else pool
    if w.shape[0] != H.shape[1]:
        raise ShapeError(f"pool vector has dim {w.shape[0]}, rows have {H.shape[1]}")
    beta = stable_softmax(H @ w, dim=0)
    pooled = beta @ H
    if return_weights:
        return pooled, beta
    return pooled
