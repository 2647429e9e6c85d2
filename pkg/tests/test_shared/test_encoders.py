"""
Tests for question, context and object encoding.
"""

import pytest
import torch

from conftest import box
from shared.attention import AttnParams, attn
from shared.corpus import SceneObject
from shared.embeddings import ContextualEncoder, EmbeddingTable, InputEmbedder
from shared.encoders import (BiLstmStack, ContextEncoder, QuestionEncoder, encode_context, encode_objects,
                             encode_question, mean_pool, render_object, render_objects, word_level_attention)
from shared.errors import ShapeError
from shared.gradients import check_gradients, padding_rows
from shared.textprep import pos_ner_ids

WORDS = ['what', 'does', 'the', 'sign', 'say', 'red', 'bus', 'stop', 'no', 'turn']


def _stack(dim=8, hidden=8, question_layers=3, context_layers=1, dtype=torch.float64, seed=0, **switches):
    torch.manual_seed(seed)
    embedder = InputEmbedder(EmbeddingTable(WORDS, dim, num_hash_buckets=4), ContextualEncoder(dim, dim))
    question = QuestionEncoder(embedder.output_dim, hidden, num_layers=question_layers, attention_size=dim)
    context = ContextEncoder(embedder.output_dim, hidden, context_layers, question_layers,
                             attention_size=dim, pos_dim=4, ner_dim=4, **switches)
    return embedder.to(dtype), question.to(dtype), context.to(dtype)


def _features(words):
    return [pos_ner_ids(w) for w in words]


def _obj(name, *attributes):
    return SceneObject(name=name, attributes=attributes, quad=box(0, 0, 10, 10))


class TestBiLstmStack:
    def test_levels_keep_length(self):
        stack = BiLstmStack(5, 6, 3)
        levels = stack(torch.randn(4, 5))
        assert [tuple(h.shape) for h in levels] == [(4, 6)] * 3

    def test_odd_hidden(self):
        with pytest.raises(ShapeError):
            BiLstmStack(5, 7, 1)


class TestQuestionEncoder:
    def test_shapes(self):
        torch.manual_seed(0)
        embedder = InputEmbedder(EmbeddingTable(WORDS, 16), ContextualEncoder(16, 16))
        encoder = QuestionEncoder(embedder.output_dim, 64, num_layers=3, attention_size=16)
        encoding = encode_question(['what', 'does', 'the', 'sign', 'say'], embedder, encoder)
        assert [tuple(h.shape) for h in encoding.levels] == [(5, 64)] * 3
        assert encoding.condensed.shape == (64,)

    def test_single_word_condenses_to_its_state(self):
        embedder, question, _ = _stack()
        encoding = encode_question(['stop'], embedder, question)
        assert torch.allclose(encoding.condensed, encoding.levels[-1][0])

    def test_history_concatenates_levels(self):
        embedder, question, _ = _stack()
        encoding = encode_question(['the', 'bus'], embedder, question)
        assert encoding.history(0).shape == (2, 16)
        assert encoding.history(2).shape == (2, 16 + 2 * 8)

    def test_empty_question(self):
        embedder, question, _ = _stack()
        with pytest.raises(ShapeError):
            encode_question([], embedder, question)

    def test_gradients_of_condensed_question(self):
        # self attention off: at init its rows are nearly identical and pool.w barely moves the output
        embedder, _, _ = _stack()
        torch.manual_seed(3)
        question = QuestionEncoder(embedder.output_dim, 8, num_layers=3, attention_size=8,
                                   use_self_attention=False).double()
        params = {f'q.{n}': p for n, p in question.named_parameters() if not n.startswith('self_attn.')}
        params.update({f'e.{n}': p for n, p in embedder.named_parameters()})
        projection = torch.randn(8, dtype=torch.float64)

        def total():
            return encode_question(['what', 'red', 'bus'], embedder, question).condensed @ projection

        report = check_gradients(total, params, max_entries=4, seed=1, padding=padding_rows(embedder, 'e.'))
        assert report.passed, report.errors
        assert float(torch.linalg.norm(question.pool.w.grad)) > 1e-6


class TestWordLevelAttention:
    def test_single_question_word(self):
        params = AttnParams(4, 3).double()
        question = torch.randn(1, 4, dtype=torch.float64)
        out = word_level_attention(torch.randn(3, 4, dtype=torch.float64), question, params)
        assert torch.allclose(out, question.expand(3, -1))

    def test_identical_question_words_get_equal_weight(self):
        params = AttnParams(4, 3).double()
        question = torch.ones(3, 4, dtype=torch.float64)
        context = torch.randn(2, 4, dtype=torch.float64)
        _, weights = attn(context, question, question, params, return_weights=True)
        assert torch.allclose(weights, torch.full((2, 3), 1 / 3, dtype=torch.float64))

    def test_empty_question(self):
        with pytest.raises(ShapeError):
            word_level_attention(torch.zeros(2, 4), torch.zeros(0, 4), AttnParams(4, 3))


class TestContextEncoder:
    def test_shapes(self):
        torch.manual_seed(0)
        embedder = InputEmbedder(EmbeddingTable(WORDS, 16), ContextualEncoder(16, 16))
        question = QuestionEncoder(embedder.output_dim, 64, num_layers=3, attention_size=16)
        context = ContextEncoder(embedder.output_dim, 64, num_layers=2, question_levels=3, attention_size=16)
        q = encode_question(['what', 'does', 'say'], embedder, question)
        words = ['no', 'right', 'turn', 'buses']
        encoding = encode_context(words, _features(words), q, embedder, context)
        assert encoding.final.shape == (4, 128)
        assert context.output_dim == 128
        assert len(encoding.multilevel) == 3
        assert len(encoding) == 4

    def test_history_depth_is_capped(self):
        _, _, context = _stack(question_layers=1, context_layers=3)
        assert [context.history_depth(k) for k in range(1, 5)] == [0, 1, 1, 1]

    def test_single_token_self_attention_is_identity(self):
        embedder, question, context = _stack()
        q = encode_question(['what', 'bus'], embedder, question)
        encoding = encode_context(['stop'], _features(['stop']), q, embedder, context)
        fused = torch.cat([encoding.word_inputs] + encoding.levels + encoding.multilevel, dim=-1)
        assert torch.allclose(encoding.self_attended, fused)

    def test_switches_zero_their_stage(self):
        embedder, question, context = _stack(use_word_attention=False, use_multilevel_attention=False,
                                             use_self_attention=False)
        q = encode_question(['what', 'bus'], embedder, question)
        encoding = encode_context(['stop', 'here'], _features(['stop', 'here']), q, embedder, context)
        assert torch.count_nonzero(encoding.word_attended) == 0
        assert all(torch.count_nonzero(m) == 0 for m in encoding.multilevel)
        assert torch.isfinite(encoding.final).all()

    def test_zeroed_attention_params_average_values(self):
        embedder, question, context = _stack()
        with torch.no_grad():
            context.word_attn.U.zero_()
        q = encode_question(['what', 'red', 'bus'], embedder, question)
        encoding = encode_context(['stop', 'no'], _features(['stop', 'no']), q, embedder, context)
        expected = q.word_inputs.mean(dim=0).expand(2, -1)
        assert torch.allclose(encoding.word_attended, expected)

    def test_feature_count_mismatch(self):
        embedder, question, context = _stack()
        q = encode_question(['what'], embedder, question)
        with pytest.raises(ShapeError):
            encode_context(['stop', 'no'], _features(['stop']), q, embedder, context)

    def test_random_inputs_stay_finite(self):
        for seed in range(5):
            embedder, question, context = _stack(dim=16, hidden=16, context_layers=2, seed=seed,
                                                 dtype=torch.float32)
            with torch.no_grad():
                for p in list(question.parameters()) + list(context.parameters()):
                    p.mul_(5.0)
            q = encode_question(['what', 'does', 'the', 'sign', 'say'], embedder, question)
            words = WORDS[seed:seed + 4]
            encoding = encode_context(words, _features(words), q, embedder, context)
            assert torch.isfinite(encoding.final).all()

    def test_gradients_of_summed_output(self):
        embedder, question, context = _stack(question_layers=3, context_layers=1)
        params = {f'c.{n}': p for n, p in context.named_parameters()}
        params.update({f'q.{n}': p for n, p in question.named_parameters()})
        words = ['no', 'right', 'turn']

        def total():
            q = encode_question(['what', 'turn'], embedder, question)
            return encode_context(words, _features(words), q, embedder, context).final.sum()

        report = check_gradients(total, params, max_entries=4, seed=2)
        assert report.passed, report.errors


class TestObjects:
    def test_render_attributes_then_name(self):
        assert render_object(_obj('bus', 'red')) == ['red', 'bus']

    def test_render_skips_blank_attributes(self):
        assert render_object(_obj('bus', '', '  ', 'red')) == ['red', 'bus']

    def test_render_several(self):
        words, ids = render_objects([_obj('bus', 'red'), _obj('sign', 'white')])
        assert words == ['red', 'bus', 'white', 'sign']
        assert ids == [0, 0, 1, 1]

    def test_mean_pool(self):
        vectors = torch.tensor([[1.0, 2.0], [3.0, 4.0], [10.0, 0.0]])
        pooled = mean_pool(vectors, [0, 0, 1], 2)
        assert torch.equal(pooled, torch.tensor([[2.0, 3.0], [10.0, 0.0]]))

    def test_two_objects_two_rows(self):
        embedder, question, context = _stack()
        q = encode_question(['what', 'bus'], embedder, question)
        encoding = encode_objects([_obj('bus', 'red'), _obj('sign', 'white')], q, embedder, context)
        assert len(encoding.context) == 4
        assert encoding.vectors.shape == (2, context.output_dim)

    def test_same_objects_same_vectors(self):
        embedder, question, context = _stack()
        q = encode_question(['what', 'bus'], embedder, question)
        first = encode_objects([_obj('bus', 'red')], q, embedder, context)
        second = encode_objects([_obj('bus', 'red')], q, embedder, context)
        assert torch.equal(first.vectors, second.vectors)

    def test_no_objects(self):
        embedder, question, context = _stack()
        q = encode_question(['what', 'bus'], embedder, question)
        encoding = encode_objects([], q, embedder, context)
        assert encoding.empty
        assert encoding.vectors.shape == (0, context.output_dim)
