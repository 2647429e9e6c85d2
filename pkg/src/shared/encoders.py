"""
Question and context understanding.

The question runs through a BiLSTM stack, self-attention on its top level
and condensation into u^Q. A context (OCR tokens, object words or
additional texts) gets word-level attention to the question, a BiLSTM
stack over [f; b; w_hat; pos; ner], multilevel history-of-word attention,
self-attention over everything so far and one more BiLSTM layer that
yields the final vectors u.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import torch
from torch import nn

from .attention import AttnParams, PoolParams, attn, condense, self_attention
from .corpus import SceneObject
from .embeddings import InputEmbedder
from .errors import ShapeError
from .textprep import NER_BUCKETS, POS_BUCKETS, TokenFeatureIds, pos_ner_ids, tokenize


@dataclass
class QuestionEncoding:
    word_inputs: torch.Tensor
    levels: List[torch.Tensor]
    attended: torch.Tensor
    condensed: torch.Tensor

    def history(self, depth: int) -> torch.Tensor:
        """[w; h^1 .. h^depth] per question word."""
        return torch.cat([self.word_inputs] + self.levels[:depth], dim=-1)


@dataclass
class ContextEncoding:
    word_inputs: torch.Tensor
    word_attended: torch.Tensor
    levels: List[torch.Tensor]
    multilevel: List[torch.Tensor]
    self_attended: torch.Tensor
    final: torch.Tensor

    def __len__(self):
        return self.final.shape[0]


@dataclass
class ObjectEncoding:
    """Per-object vectors u^D; ``vectors`` has zero rows when there are no objects."""

    words: List[str]
    object_ids: List[int]
    vectors: torch.Tensor
    context: Optional[ContextEncoding] = None

    @property
    def empty(self) -> bool:
        return self.vectors.shape[0] == 0


class BiLstmStack(nn.Module):
    def __init__(self, input_dim: int, hidden_size: int, num_layers: int, dropout: float = 0.0):
        super().__init__()
        if hidden_size % 2:
            raise ShapeError(f"hidden_size must be even, got {hidden_size}")
        self.input_dim = input_dim
        self.hidden_size = hidden_size
        self.layers = nn.ModuleList(
            nn.LSTM(input_dim if i == 0 else hidden_size, hidden_size // 2,
                    bidirectional=True, batch_first=True)
            for i in range(num_layers)
        )
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        outputs = []
        current = x
        for layer in self.layers:
            current, _ = layer(self.dropout(current).unsqueeze(0))
            current = current.squeeze(0)
            outputs.append(current)
        return outputs


def word_level_attention(contextW: torch.Tensor, questionW: torch.Tensor, params: AttnParams) -> torch.Tensor:
    if questionW.shape[0] == 0:
        raise ShapeError("word-level attention needs a non-empty question")
    return attn(contextW, questionW, questionW, params)


class QuestionEncoder(nn.Module):
    def __init__(self, input_dim: int, hidden_size: int, num_layers: int = 3, attention_size: int = 64,
                 use_self_attention: bool = True, dropout: float = 0.0):
        super().__init__()
        self.stack = BiLstmStack(input_dim, hidden_size, num_layers, dropout)
        self.self_attn = AttnParams(hidden_size, attention_size)
        self.pool = PoolParams(hidden_size)
        self.use_self_attention = use_self_attention

    @property
    def num_levels(self) -> int:
        return len(self.stack.layers)

    def forward(self, word_inputs: torch.Tensor) -> QuestionEncoding:
        if word_inputs.shape[0] == 0:
            raise ShapeError("cannot encode an empty question")
        levels = self.stack(word_inputs)
        top = levels[-1]
        attended = self_attention(top, self.self_attn) if self.use_self_attention else top
        return QuestionEncoding(
            word_inputs=word_inputs,
            levels=levels,
            attended=attended,
            condensed=condense(attended, self.pool),
        )


def encode_question(question_words: Sequence[str], embedder: InputEmbedder,
                    encoder: QuestionEncoder) -> QuestionEncoding:
    if not question_words:
        raise ShapeError("cannot encode an empty question")
    return encoder(embedder.question_inputs(question_words))


class ContextEncoder(nn.Module):
    """
    Multilevel attention k = 1..K+1 uses history-of-word keys built from
    the first min(k-1, K, K') levels on each side and attends into question
    level min(k, K'), so a shallower question stack caps both sides alike.
    """

    def __init__(self, word_dim: int, hidden_size: int, num_layers: int, question_levels: int,
                 attention_size: int = 64, pos_dim: int = 12, ner_dim: int = 8,
                 use_word_attention: bool = True, use_multilevel_attention: bool = True,
                 use_self_attention: bool = True, dropout: float = 0.0):
        super().__init__()
        self.word_dim = word_dim
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.question_levels = question_levels
        self.use_word_attention = use_word_attention
        self.use_multilevel_attention = use_multilevel_attention
        self.use_self_attention = use_self_attention

        self.word_attn = AttnParams(word_dim, attention_size)
        self.pos_embedding = nn.Embedding(len(POS_BUCKETS), pos_dim)
        self.ner_embedding = nn.Embedding(len(NER_BUCKETS), ner_dim)
        self.stack = BiLstmStack(2 * word_dim + pos_dim + ner_dim, hidden_size, num_layers, dropout)
        self.multilevel_attn = nn.ModuleList(
            AttnParams(word_dim + self.history_depth(k) * hidden_size, attention_size)
            for k in range(1, num_layers + 2)
        )
        self.fused_dim = word_dim + num_layers * hidden_size + (num_layers + 1) * hidden_size
        self.self_attn = AttnParams(self.fused_dim, attention_size)
        self.final = nn.LSTM(2 * self.fused_dim, hidden_size, bidirectional=True, batch_first=True)
        self.dropout = nn.Dropout(dropout)

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden_size

    def history_depth(self, k: int) -> int:
        return min(k - 1, self.num_layers, self.question_levels)

    def forward(self, word_inputs: torch.Tensor, features: Sequence[TokenFeatureIds],
                question: QuestionEncoding) -> ContextEncoding:
        m = word_inputs.shape[0]
        if m == 0:
            raise ShapeError("cannot encode an empty context")
        if len(features) != m:
            raise ShapeError(f"{len(features)} feature ids for {m} context words")

        if self.use_word_attention:
            word_attended = word_level_attention(word_inputs, question.word_inputs, self.word_attn)
        else:
            word_attended = torch.zeros_like(word_inputs)
        pos_ids = torch.tensor([f.pos_id for f in features], dtype=torch.long)
        ner_ids = torch.tensor([f.ner_id for f in features], dtype=torch.long)
        h0 = torch.cat([word_inputs, word_attended, self.pos_embedding(pos_ids),
                        self.ner_embedding(ner_ids)], dim=-1)
        levels = self.stack(h0)

        multilevel = []
        for k, params in enumerate(self.multilevel_attn, start=1):
            if not self.use_multilevel_attention:
                multilevel.append(word_inputs.new_zeros(m, self.hidden_size))
                continue
            depth = self.history_depth(k)
            context_how = torch.cat([word_inputs] + levels[:depth], dim=-1)
            question_how = question.history(depth)
            target = question.levels[min(k, self.question_levels) - 1]
            multilevel.append(attn(context_how, question_how, target, params))

        fused = torch.cat([word_inputs] + levels + multilevel, dim=-1)
        self_attended = self_attention(fused, self.self_attn) if self.use_self_attention else fused
        final, _ = self.final(self.dropout(torch.cat([fused, self_attended], dim=-1)).unsqueeze(0))
        return ContextEncoding(
            word_inputs=word_inputs,
            word_attended=word_attended,
            levels=levels,
            multilevel=multilevel,
            self_attended=self_attended,
            final=final.squeeze(0),
        )


def encode_context(context_words: Sequence[str], features: Sequence[TokenFeatureIds],
                   question: QuestionEncoding, embedder: InputEmbedder,
                   encoder: ContextEncoder) -> ContextEncoding:
    if not context_words:
        raise ShapeError("cannot encode an empty context")
    return encoder(embedder.context_inputs(context_words), features, question)


def render_object(obj: SceneObject) -> List[str]:
    """[attributes..., name], each piece tokenized."""
    words = []
    for piece in list(obj.attributes) + [obj.name]:
        if not piece.strip():
            continue
        words.extend(tokenize(piece) or [piece])
    return words


def render_objects(objects: Sequence[SceneObject]):
    words, object_ids = [], []
    for j, obj in enumerate(objects):
        rendered = render_object(obj)
        words.extend(rendered)
        object_ids.extend([j] * len(rendered))
    return words, object_ids


def mean_pool(vectors: torch.Tensor, group_ids: Sequence[int], num_groups: int) -> torch.Tensor:
    """Mean of the rows sharing each group id, via a row-normalized assignment matrix."""
    assignment = vectors.new_zeros(num_groups, vectors.shape[0])
    for position, group in enumerate(group_ids):
        assignment[group, position] = 1.0
    assignment = assignment / assignment.sum(dim=1, keepdim=True).clamp(min=1.0)
    return assignment @ vectors


def encode_objects(objects: Sequence[SceneObject], question: QuestionEncoding,
                   embedder: InputEmbedder, encoder: ContextEncoder) -> ObjectEncoding:
    words, object_ids = render_objects(objects)
    if not words:
        empty = question.condensed.new_zeros(0, encoder.output_dim)
        return ObjectEncoding(words=[], object_ids=[], vectors=empty)
    features = [pos_ner_ids(w) for w in words]
    context = encode_context(words, features, question, embedder, encoder)
    vectors = mean_pool(context.final, object_ids, len(objects))
    return ObjectEncoding(words=words, object_ids=object_ids, vectors=vectors, context=context)
