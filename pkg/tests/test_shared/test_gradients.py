"""
Tests for the finite-difference gradient check.
"""

import math

import pytest
import torch

from shared.gradients import check_gradients, gradcheck, gradcheck_samples, padding_rows, relative_error
from shared.model import build_model


def _quadratic():
    w = torch.nn.Parameter(torch.tensor([0.5, -1.5, 2.0], dtype=torch.float64))
    b = torch.nn.Parameter(torch.tensor([0.25], dtype=torch.float64))

    def total():
        return (w ** 2).sum() * b.sum() + torch.sin(b).sum()

    return total, {'w': w, 'b': b}


class TestRelativeError:
    def test_identical(self):
        assert relative_error(torch.tensor([1.0, 2.0]), torch.tensor([1.0, 2.0])) == 0.0

    def test_orthogonal(self):
        err = relative_error(torch.tensor([1.0, 0.0]), torch.tensor([0.0, 1.0]))
        assert err == pytest.approx(math.sqrt(2.0))

    def test_tiny_norms_use_absolute_difference(self):
        err = relative_error(torch.tensor([1e-12], dtype=torch.float64), torch.tensor([0.0], dtype=torch.float64))
        assert err == pytest.approx(1e-12)


class TestCheckGradients:
    def test_smooth_function_passes(self):
        total, params = _quadratic()
        report = check_gradients(total, params)
        assert report.passed
        assert report.max_error < 1e-6
        assert report.entries_checked == 4

    def test_corrupted_tensor_is_named(self):
        total, params = _quadratic()
        report = check_gradients(total, params, corrupt='w')
        assert not report.passed
        assert report.failing == ['w']
        assert report.to_dict()['status'] == 'FAIL'

    def test_unknown_tensor(self):
        total, params = _quadratic()
        with pytest.raises(KeyError):
            check_gradients(total, params, corrupt='nope')

    def test_parameters_are_left_untouched(self):
        total, params = _quadratic()
        before = {name: p.detach().clone() for name, p in params.items()}
        check_gradients(total, params)
        assert all(torch.equal(params[name], before[name]) for name in params)


class TestPaddingRows:
    def _tables(self):
        tables = torch.nn.ModuleDict({
            'padded': torch.nn.Embedding(3, 2, padding_idx=0),
            'plain': torch.nn.Embedding(3, 2),
        }).double()
        with torch.no_grad():
            tables['padded'].weight[0] = 1.0
        ids = torch.tensor([0, 1, 2])

        def total():
            return (tables['padded'](ids) ** 2).sum() + (tables['plain'](ids) ** 2).sum()

        return tables, total

    def test_only_tables_with_a_padding_idx(self):
        tables, _ = self._tables()
        assert padding_rows(tables) == {'padded.weight': 0}
        assert padding_rows(tables, prefix='e.') == {'e.padded.weight': 0}

    def test_padding_row_is_skipped_but_other_first_rows_are_checked(self):
        tables, total = self._tables()
        params = dict(tables.named_parameters())
        report = check_gradients(total, params, max_entries=6, padding=padding_rows(tables))
        assert report.passed, report.errors
        assert report.entries_checked == 4 + 6

        unskipped = check_gradients(total, params, max_entries=6)
        assert unskipped.failing == ['padded.weight']

    def test_model_tag_tables_have_no_padding_row(self, toy_config):
        rows = padding_rows(build_model(toy_config, ['stop', 'bus']))
        assert rows and set(rows.values()) == {0}
        assert not any('pos_embedding' in name or 'ner_embedding' in name for name in rows)


class TestFullModel:
    def test_samples_are_grounded(self):
        samples = gradcheck_samples(0)
        assert len(samples) == 2
        assert all(s.objects and s.ocr_tokens for s in samples)

    @pytest.mark.slow
    @pytest.mark.parametrize('seed', [0, 1, 2])
    def test_fresh_model_passes(self, toy_config, seed):
        report = gradcheck(toy_config, seed=seed)
        assert report.passed, report.to_dict()
        assert report.max_error < 1e-4
        assert report.entries_checked > 0

    @pytest.mark.slow
    def test_corrupted_head_fails(self, toy_config):
        config = toy_config.replace(gradcheck_max_entries=2)
        report = gradcheck(config, seed=0, corrupt='head.params.W_A', samples=gradcheck_samples(0, num_samples=1))
        assert not report.passed
        assert 'head.params.W_A' in report.failing
