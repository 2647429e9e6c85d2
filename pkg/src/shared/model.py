"""
The end-to-end reader: turns a featurized sample into a scored Prediction.

``featurize`` does all string work (reading order, candidates, tags) so
the forward pass only sees lists and tensors.
"""

from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import torch
from torch import nn

from .answer import AnswerHead, Prediction, span_shape
from .corpus import Sample
from .embeddings import (ContextualEncoder, EmbeddingTable, InputEmbedder, build_vocabulary,
                         load_pretrained)
from .encoders import (ContextEncoder, QuestionEncoder, encode_objects, encode_question,
                       render_object)
from .errors import ShapeError, ValidationError
from .relate import POSITION_DIM, RelationalReasoner
from .textprep import (SPECIAL_KINDS, AnswerCandidate, TokenFeatureIds, build_ocr_context,
                       build_phrase_context, compute_reading_order, dictionary_context,
                       dictionary_mode_candidates, generate_candidates, pos_ner_ids,
                       positional_features, special_candidates, tokenize)
from .utils import RunConfig, get_logger, normalize_answer

logger = get_logger('model')


@dataclass
class SampleInputs:
    sample_id: str
    question_words: List[str]
    context_words: List[str]
    context_features: List[TokenFeatureIds]
    context_positional: List[Tuple[float, ...]]
    candidates: List[AnswerCandidate]
    objects: tuple
    object_positional: List[Tuple[float, ...]]
    additional_words: List[str] = field(default_factory=list)
    additional_features: List[TokenFeatureIds] = field(default_factory=list)
    additional_spans: List[Tuple[int, ...]] = field(default_factory=list)
    gold_answers: tuple = ()

    def pool(self, kind: str) -> List[AnswerCandidate]:
        return [c for c in self.candidates if c.kind == kind]


def featurize(sample: Sample, config: RunConfig, additional_texts: Sequence[str] = ()) -> SampleInputs:
    question_words = tokenize(sample.question)
    if not question_words:
        raise ValidationError(f"sample {sample.sample_id} has an empty question", field='question')
    additional_texts = additional_texts if config.use_semantic_reasoning else ()

    if config.dictionary_mode:
        context = dictionary_context(sample)
        words = list(context.words)
        positional = [(0.0,) * POSITION_DIM] * len(words)
        spans = [c for c in dictionary_mode_candidates(sample) if c.kind not in SPECIAL_KINDS]
        seen, extra = set(), []
        for text in additional_texts:
            key = normalize_answer(text)
            if key and key not in seen:
                seen.add(key)
                extra.append(AnswerCandidate(kind='additional', text=key))
        candidates = spans + extra + special_candidates()
    else:
        order = compute_reading_order(sample.ocr_tokens, sample.image_width, sample.image_height)
        context = build_ocr_context(sample.ocr_tokens, order, sample.image_width, sample.image_height)
        words = list(context.words)
        positional = list(context.positional)
        candidates = generate_candidates(sample, order, additional_texts, max_span_tokens=config.max_span_tokens)

    additional = [c.text for c in candidates if c.kind == 'additional']
    phrases = build_phrase_context(additional)
    return SampleInputs(
        sample_id=sample.sample_id,
        question_words=question_words,
        context_words=words,
        context_features=[pos_ner_ids(w) for w in words],
        context_positional=positional,
        candidates=candidates,
        objects=sample.objects,
        object_positional=[positional_features(o.quad, sample.image_width, sample.image_height)
                           for o in sample.objects],
        additional_words=list(phrases.words),
        additional_features=[pos_ner_ids(w) for w in phrases.words],
        additional_spans=list(phrases.spans),
        gold_answers=sample.gold_answers,
    )


def vocabulary_words(samples: Iterable[Sample], extra_texts: Iterable[str] = ()) -> List[str]:
    words = []
    for sample in samples:
        words.extend(tokenize(sample.question))
        words.extend(t.text for t in sample.ocr_tokens)
        for obj in sample.objects:
            words.extend(render_object(obj))
        for entry in sample.dictionary or ():
            words.extend(tokenize(entry))
    for text in extra_texts:
        words.extend(tokenize(normalize_answer(text)))
    return words


def span_matrix(position_lists: Sequence[Sequence[int]], length: int, like: torch.Tensor) -> torch.Tensor:
    """Row r averages the context positions of span r."""
    matrix = like.new_zeros(len(position_lists), length)
    for row, positions in enumerate(position_lists):
        if not positions:
            raise ShapeError(f"span {row} covers no context positions")
        for p in positions:
            matrix[row, p] = 1.0 / len(positions)
    return matrix


class TextCenteredReader(nn.Module):
    def __init__(self, config: RunConfig, vocab: Sequence[str], context_table: EmbeddingTable = None):
        super().__init__()
        self.config = config
        self.vocab = list(vocab)
        if context_table is None:
            # rebuilt from a checkpoint: pretrained rows arrive with the state dict
            context_table = EmbeddingTable(self.vocab, config.word_dim, oov_mode=config.oov_mode,
                                           num_hash_buckets=config.num_hash_buckets,
                                           trainable=not config.pretrained_vectors)
        question_table = None
        if config.separate_question_table:
            question_table = EmbeddingTable(self.vocab, config.word_dim, oov_mode=config.oov_mode,
                                            num_hash_buckets=config.num_hash_buckets)
        self.embedder = InputEmbedder(context_table, ContextualEncoder(config.word_dim, config.ctx_dim),
                                      question_table=question_table)
        input_dim = self.embedder.output_dim

        encoder_kwargs = dict(
            word_dim=input_dim, hidden_size=config.hidden_size, num_layers=config.context_layers,
            question_levels=config.question_layers, attention_size=config.attention_size,
            pos_dim=config.pos_dim, ner_dim=config.ner_dim,
            use_word_attention=config.use_word_attention,
            use_multilevel_attention=config.use_multilevel_attention,
            use_self_attention=config.use_self_attention, dropout=config.dropout,
        )
        self.question_encoder = QuestionEncoder(input_dim, config.hidden_size, config.question_layers,
                                                config.attention_size, config.use_self_attention,
                                                config.dropout)
        self.ocr_encoder = ContextEncoder(**encoder_kwargs)
        self.object_encoder = ContextEncoder(**encoder_kwargs)
        d_u = self.ocr_encoder.output_dim
        self.relational = RelationalReasoner(d_u, config.attention_size, config.relational_mode)
        self.head = AnswerHead(d_u, config.hidden_size, config.answer_dim,
                               candidate_inputs=config.candidate_inputs,
                               use_semantic_reasoning=config.use_semantic_reasoning)

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def _positions(self, rows: Sequence[Tuple[float, ...]]) -> torch.Tensor:
        return torch.tensor(list(rows), dtype=self.dtype).reshape(len(rows), POSITION_DIM)

    def forward(self, inputs: SampleInputs) -> Prediction:
        question = encode_question(inputs.question_words, self.embedder, self.question_encoder)
        uQ = question.condensed
        d_u = self.ocr_encoder.output_dim

        objects = encode_objects(inputs.objects, question, self.embedder, self.object_encoder)
        pD = self._positions(inputs.object_positional)

        if inputs.context_words:
            uO = self.ocr_encoder(self.embedder.context_inputs(inputs.context_words),
                                  inputs.context_features, question).final
        else:
            uO = uQ.new_zeros(0, d_u)
        pO = self._positions(inputs.context_positional)
        related = self.relational(uO, pO, objects.vectors, pD)

        spans = inputs.pool('ocr_span')
        if spans:
            S = span_matrix([c.context_positions for c in spans], uO.shape[0], uO)
            shape = torch.tensor([span_shape(c) for c in spans], dtype=self.dtype)
            ocr_reprs = self.head.represent(S @ uO, S @ related.fused, shape)
        else:
            ocr_reprs = uQ.new_zeros(0, self.config.answer_dim)

        if inputs.additional_spans and self.config.use_semantic_reasoning:
            encoded = self.ocr_encoder(self.embedder.context_inputs(inputs.additional_words),
                                       inputs.additional_features, question).final
            S = span_matrix(inputs.additional_spans, encoded.shape[0], encoded)
            uA = S @ encoded
            pA = uA.new_zeros(uA.shape[0], POSITION_DIM)
            additional_reprs = self.head.represent(uA, self.relational(uA, pA, objects.vectors, pD).fused)
        else:
            additional_reprs = uQ.new_zeros(0, self.config.answer_dim)

        return self.head(uQ, inputs.candidates, ocr_reprs, additional_reprs)


def build_model(config: RunConfig, vocab: Sequence[str] = None, seed: int = None) -> TextCenteredReader:
    """Seeded construction; a pretrained vector file replaces the data vocabulary."""
    torch.manual_seed(config.seed if seed is None else seed)
    if config.pretrained_vectors:
        table = load_pretrained(config.pretrained_vectors, config.word_dim, oov_mode=config.oov_mode,
                                num_hash_buckets=config.num_hash_buckets)
        return TextCenteredReader(config, list(table.vocab), context_table=table)
    return TextCenteredReader(config, vocab or [])


def build_vocab(samples: Iterable[Sample], config: RunConfig, extra_texts: Iterable[str] = ()) -> List[str]:
    vocab = build_vocabulary(vocabulary_words(samples, extra_texts), config.min_word_count)
    logger.info(f"📦 vocabulary of {len(vocab)} words (min count {config.min_word_count})")
    return vocab
