"""
Word vectors with OOV handling, and the small trainable contextualizer
that fills the contextual-embedding slot of every input sequence.
"""

import hashlib
import math
from collections import Counter
from typing import Dict, Iterable, List, Sequence

import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .errors import ShapeError, ValidationError
from .utils import get_logger

logger = get_logger('embeddings')

PAD_ROW = 0


def stable_hash(word: str) -> int:
    """blake2b-64 of the UTF-8 bytes, big-endian; identical on every platform."""
    digest = hashlib.blake2b(word.encode('utf-8'), digest_size=8).digest()
    return int.from_bytes(digest, 'big')


def build_vocabulary(words: Iterable[str], min_count: int = 1) -> List[str]:
    """Lowercased vocabulary ordered by descending count, then alphabetically."""
    counts = Counter(w.lower() for w in words if w)
    kept = [w for w, c in counts.items() if c >= min_count]
    return sorted(kept, key=lambda w: (-counts[w], w))


class EmbeddingTable(nn.Module):
    """
    Row 0 is padding, rows 1..|vocab| are vocabulary words and, in
    hash_bucket mode, the last ``num_hash_buckets`` rows hold OOV buckets.
    """

    def __init__(self, vocab: Sequence[str], dim: int, oov_mode: str = 'hash_bucket',
                 num_hash_buckets: int = 64, trainable: bool = True, weights: torch.Tensor = None):
        super().__init__()
        if dim < 1:
            raise ShapeError(f"embedding dim must be positive, got {dim}")
        self.dim = dim
        self.vocab: Dict[str, int] = {w: i + 1 for i, w in enumerate(vocab)}
        self.oov_mode = oov_mode
        self.num_hash_buckets = num_hash_buckets
        self.trainable = trainable

        buckets = num_hash_buckets if oov_mode == 'hash_bucket' else 0
        num_rows = 1 + len(self.vocab) + buckets
        self.embedding = nn.Embedding(num_rows, dim, padding_idx=PAD_ROW)
        nn.init.normal_(self.embedding.weight, std=1.0 / math.sqrt(dim))
        with torch.no_grad():
            if weights is not None:
                self.embedding.weight[1:1 + len(self.vocab)] = weights
            self.embedding.weight[PAD_ROW].zero_()
        self.embedding.weight.requires_grad_(trainable)

    @property
    def rows(self) -> torch.Tensor:
        return self.embedding.weight

    def row_of(self, word: str) -> int:
        row = self.vocab.get(word.lower())
        if row is None:
            row = self.vocab.get(word)
        if row is not None:
            return row
        if self.oov_mode == 'zero':
            return PAD_ROW
        return 1 + len(self.vocab) + stable_hash(word.lower()) % self.num_hash_buckets

    def forward(self, words: Sequence[str]) -> torch.Tensor:
        ids = torch.tensor([self.row_of(w) for w in words], dtype=torch.long)
        return self.embedding(ids)


def embed_words(words: Sequence[str], table: EmbeddingTable) -> torch.Tensor:
    return table(words)


def load_pretrained(path: str, expected_dim: int, oov_mode: str = 'hash_bucket',
                    num_hash_buckets: int = 64) -> EmbeddingTable:
    """
    Read "word v1 ... vd" lines into a frozen table.

    A fastText-style "count dim" header line is skipped. Duplicate words keep
    the last occurrence; the number of duplicates is stored on the returned
    table as ``load_warnings``.
    """
    vectors: Dict[str, List[float]] = {}
    warnings = 0
    try:
        f = open(path, 'r', encoding='utf-8')
    except OSError as e:
        raise ValidationError(f"cannot read pretrained vectors {path}: {e}")
    with f:
        for line_no, raw in enumerate(f, start=1):
            parts = raw.rstrip('\n').split(' ')
            parts = [p for p in parts if p]
            if not parts:
                continue
            if line_no == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            word, values = parts[0], parts[1:]
            if len(values) != expected_dim:
                raise ValidationError(
                    f"expected {expected_dim} values for '{word}', found {len(values)}", line=line_no)
            try:
                vector = [float(v) for v in values]
            except ValueError:
                raise ValidationError(f"non-numeric value in vector for '{word}'", line=line_no)
            if not all(math.isfinite(v) for v in vector):
                raise ValidationError(f"non-finite value in vector for '{word}'", line=line_no)
            if word in vectors:
                warnings += 1
                logger.warning(f"⚠️ duplicate pretrained word '{word}' on line {line_no}; keeping the later one")
                del vectors[word]
            vectors[word] = vector

    words = list(vectors)
    weights = torch.tensor([vectors[w] for w in words], dtype=torch.float32) if words else None
    table = EmbeddingTable(words, expected_dim, oov_mode=oov_mode, num_hash_buckets=num_hash_buckets,
                           trainable=False, weights=weights)
    table.load_warnings = warnings
    logger.info(f"📦 loaded {len(words)} pretrained vectors (dim {expected_dim}, {warnings} duplicates)")
    return table


class ContextualEncoder(nn.Module):
    """Single-layer bidirectional GRU, ctx_dim/2 units per direction."""

    def __init__(self, input_dim: int, ctx_dim: int):
        super().__init__()
        if ctx_dim % 2:
            raise ShapeError(f"ctx_dim must be even, got {ctx_dim}")
        self.input_dim = input_dim
        self.ctx_dim = ctx_dim
        self.rnn = nn.GRU(input_dim, ctx_dim // 2, num_layers=1, bidirectional=True, batch_first=True)

    def forward(self, word_vectors: torch.Tensor) -> torch.Tensor:
        if word_vectors.dim() != 2 or word_vectors.shape[0] == 0:
            raise ShapeError(f"contextual encoder needs a non-empty [len x dim] input, got {tuple(word_vectors.shape)}")
        output, _ = self.rnn(word_vectors.unsqueeze(0))
        return output.squeeze(0)

    def encode_batch(self, sequences: Sequence[torch.Tensor]) -> List[torch.Tensor]:
        """Pad, pack and encode; each result matches encoding that sequence alone."""
        if any(s.shape[0] == 0 for s in sequences):
            raise ShapeError("contextual encoder got an empty sequence in the batch")
        lengths = torch.tensor([s.shape[0] for s in sequences], dtype=torch.long)
        padded = nn.utils.rnn.pad_sequence(list(sequences), batch_first=True)
        packed = pack_padded_sequence(padded, lengths, batch_first=True, enforce_sorted=False)
        output, _ = self.rnn(packed)
        output, _ = pad_packed_sequence(output, batch_first=True)
        return [output[i, :length] for i, length in enumerate(lengths.tolist())]


def contextual_encode(word_vectors: torch.Tensor, encoder: ContextualEncoder) -> torch.Tensor:
    return encoder(word_vectors)


class InputEmbedder(nn.Module):
    """
    Builds the word inputs of every sequence: question words get
    [question-table row; contextual] and context words get
    [context-table row; contextual]. One table serves both unless a
    separate question table is configured.
    """

    def __init__(self, context_table: EmbeddingTable, contextual: ContextualEncoder,
                 question_table: EmbeddingTable = None):
        super().__init__()
        self.context_table = context_table
        self.question_table = question_table
        self.contextual = contextual

    @property
    def output_dim(self) -> int:
        return self.context_table.dim + self.contextual.ctx_dim

    def _inputs(self, words: Sequence[str], table: EmbeddingTable) -> torch.Tensor:
        vectors = table(words)
        return torch.cat([vectors, self.contextual(vectors)], dim=-1)

    def question_inputs(self, words: Sequence[str]) -> torch.Tensor:
        return self._inputs(words, self.question_table or self.context_table)

    def context_inputs(self, words: Sequence[str]) -> torch.Tensor:
        return self._inputs(words, self.context_table)
