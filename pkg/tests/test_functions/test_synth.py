"""
Tests for the synth handler.
"""

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '../../src'))

from functions.synth.handler import handler, synthesize  # noqa: E402
from shared.corpus import load_dataset  # noqa: E402
from shared.textprep import answer_is_reachable  # noqa: E402


class TestSynth:
    def test_writes_loadable_corpus(self, tmp_path):
        out = str(tmp_path / 'data' / 'synth.jsonl')
        summary = synthesize(out, num_samples=20, seed=7)
        dataset = load_dataset(out)
        assert summary['samples'] == len(dataset) == 20
        assert summary['families'] == {'a': 5, 'b': 5, 'c': 5, 'd': 5}
        assert all(answer_is_reachable(s) for s in dataset)

    def test_same_seed_same_bytes(self, tmp_path):
        synthesize(str(tmp_path / 'one.jsonl'), num_samples=8, seed=3)
        synthesize(str(tmp_path / 'two.jsonl'), num_samples=8, seed=3)
        assert (tmp_path / 'one.jsonl').read_bytes() == (tmp_path / 'two.jsonl').read_bytes()

    def test_dictionary_size(self, tmp_path):
        out = str(tmp_path / 'dict.jsonl')
        synthesize(out, num_samples=4, seed=1, dictionary_size=10)
        assert all(0 < len(s.dictionary) <= 10 for s in load_dataset(out))
        assert all(set(s.gold_answers) <= set(s.dictionary) for s in load_dataset(out))


class TestSynthHandler:
    def test_success(self, tmp_path):
        response = handler({'out': str(tmp_path / 's.jsonl'), 'num_samples': 4, 'seed': 2})
        assert response['statusCode'] == 200
        assert json.loads(response['body'])['samples'] == 4

    def test_missing_out(self):
        assert handler({'num_samples': 4})['statusCode'] == 400

    def test_invalid_size(self, tmp_path):
        response = handler({'out': str(tmp_path / 's.jsonl'), 'vocab_size': 3})
        assert response['statusCode'] == 400
