"""
Tests for dataset loading, writing and the synthetic generator.
"""

import math

import pytest

from shared.corpus import (MAX_SYNTHETIC_VOCAB, OcrToken, Quad, SceneObject, SyntheticConfig, _nearest_token,
                           generate_synthetic, load_dataset, split_dataset, write_dataset)
from shared.errors import ValidationError
from shared.textprep import answer_is_reachable


def _record(sample_id='s-1', **overrides):
    record = {
        'sample_id': sample_id,
        'image_width': 100,
        'image_height': 50,
        'question': 'what is written',
        'answers': ['open'],
        'ocr': [{'text': 'open', 'quad': [10, 10, 40, 10, 40, 20, 10, 20]}],
        'objects': [{'name': 'door', 'attributes': ['blue'], 'quad': [0, 0, 50, 0, 50, 50, 0, 50]}],
    }
    record.update(overrides)
    return record


class TestQuad:
    def test_from_list_rejects_wrong_length(self):
        with pytest.raises(ValidationError):
            Quad.from_list([1, 2, 3])

    def test_from_list_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            Quad.from_list([0, 0, 1, 0, 1, math.inf, 0, 1])

    def test_clamp_reports_movement(self):
        quad, moved = Quad.from_box(-5, 0, 120, 10).clamp(100, 50)
        assert moved
        assert quad.x1 == 0.0 and quad.x2 == 100.0

    def test_center_and_height(self):
        quad = Quad.from_box(10, 20, 30, 60)
        assert quad.center() == (20.0, 40.0)
        assert quad.height() == 40.0


class TestLoadDataset:
    def test_keeps_file_order(self, write_jsonl):
        path = write_jsonl('d.jsonl', [_record('c'), _record('a'), _record('b')])
        dataset = load_dataset(path)
        assert dataset.ids() == ['c', 'a', 'b']
        assert len(dataset) == 3

    def test_zero_width_names_field(self, write_jsonl):
        path = write_jsonl('d.jsonl', [_record(image_width=0)])
        with pytest.raises(ValidationError) as exc:
            load_dataset(path)
        assert exc.value.field == 'image_width'
        assert exc.value.line == 1
        assert 'image_width' in str(exc.value)

    def test_out_of_bounds_quad_is_clamped_and_counted(self, write_jsonl):
        record = _record(ocr=[{'text': 'open', 'quad': [105, 10, 40, 10, 40, 20, 10, 20]}])
        path = write_jsonl('d.jsonl', [record])
        dataset = load_dataset(path)
        assert dataset.samples[0].ocr_tokens[0].quad.x1 == 100.0
        assert dataset.report.warned == 1
        assert dataset.report.clamped_quads == 1

    def test_duplicate_sample_id_is_an_error(self, write_jsonl):
        path = write_jsonl('d.jsonl', [_record('x'), _record('x')])
        with pytest.raises(ValidationError, match='duplicate'):
            load_dataset(path)

    def test_bad_quad_names_the_token(self, write_jsonl):
        path = write_jsonl('d.jsonl', [_record(ocr=[{'text': 'a', 'quad': [1, 2]}])])
        with pytest.raises(ValidationError) as exc:
            load_dataset(path)
        assert exc.value.field == 'ocr[0].quad'

    def test_lenient_mode_reconciles_counts(self, write_jsonl):
        lines = [_record('a'), '{not json', _record('b', image_height=-1), _record('c')]
        path = write_jsonl('d.jsonl', lines)
        dataset = load_dataset(path, strict=False)
        report = dataset.report
        assert dataset.ids() == ['a', 'c']
        assert report.lines == 4
        assert report.loaded + report.rejected == report.lines
        assert len(report.errors) == 2

    @pytest.mark.parametrize('key, value', [('ocr', None), ('ocr', 3), ('objects', None), ('objects', 'door')])
    def test_non_list_token_fields_name_line_and_field(self, write_jsonl, key, value):
        path = write_jsonl('d.jsonl', [_record('a'), _record('b', **{key: value})])
        with pytest.raises(ValidationError) as exc:
            load_dataset(path)
        assert (exc.value.line, exc.value.field) == (2, key)

        dataset = load_dataset(path, strict=False)
        assert dataset.ids() == ['a']
        assert dataset.report.loaded + dataset.report.rejected == dataset.report.lines == 2

    @pytest.mark.parametrize('overrides, field_name', [
        ({'objects': [{'name': 'door', 'attributes': [''], 'quad': [0, 0, 50, 0, 50, 50, 0, 50]}]},
         'objects[0].attributes'),
        ({'dictionary': ['open', '  ']}, 'dictionary'),
    ])
    def test_blank_attribute_or_dictionary_entry(self, write_jsonl, overrides, field_name):
        path = write_jsonl('d.jsonl', [_record(**overrides)])
        with pytest.raises(ValidationError) as exc:
            load_dataset(path)
        assert exc.value.field == field_name

    def test_undecodable_line_is_rejected(self, write_jsonl, tmp_path):
        path = write_jsonl('d.jsonl', [_record('a')])
        with open(path, 'ab') as f:
            f.write(b'{"sample_id": "\xff\xfe"}\n')
        with pytest.raises(ValidationError, match='UTF-8') as exc:
            load_dataset(path)
        assert exc.value.line == 2

        dataset = load_dataset(path, strict=False)
        assert dataset.ids() == ['a']
        assert dataset.report.rejected == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError, match='not found'):
            load_dataset(str(tmp_path / 'nope.jsonl'))

    def test_answers_required_except_for_test_split(self, write_jsonl):
        path = write_jsonl('d.jsonl', [_record(answers=[])])
        with pytest.raises(ValidationError):
            load_dataset(path, split='train')
        assert load_dataset(path, split='test').samples[0].gold_answers == ()

    def test_fixture_file_loads(self, fixtures_dir):
        dataset = load_dataset(f'{fixtures_dir}/samples.jsonl')
        assert dataset.ids() == ['st-0001', 'st-0002', 'tv-0001']
        assert dataset.samples[1].dictionary == ('coca cola', 'pepsi', 'fanta')
        assert dataset.samples[2].ocr_tokens == ()

    def test_write_then_load_preserves_every_field(self, small_synthetic, tmp_path):
        path = str(tmp_path / 'round.jsonl')
        write_dataset(small_synthetic, path)
        loaded = load_dataset(path)
        assert loaded.samples == small_synthetic.samples


class TestSplitDataset:
    def test_tail_becomes_dev(self, small_synthetic):
        train, dev = split_dataset(small_synthetic, 0.25)
        assert len(train) == 9 and len(dev) == 3
        assert dev.ids() == small_synthetic.ids()[-3:]


class TestGenerateSynthetic:
    def test_same_seed_same_bytes(self, tmp_path):
        paths = []
        for run in range(2):
            path = str(tmp_path / f'run{run}.jsonl')
            write_dataset(generate_synthetic(SyntheticConfig(num_samples=20, seed=7)), path)
            paths.append(path)
        with open(paths[0], 'rb') as a, open(paths[1], 'rb') as b:
            assert a.read() == b.read()

    def test_different_seeds_differ(self):
        a = generate_synthetic(SyntheticConfig(num_samples=8, seed=1))
        b = generate_synthetic(SyntheticConfig(num_samples=8, seed=2))
        assert a.samples != b.samples

    def test_two_hundred_samples_all_reachable(self):
        dataset = generate_synthetic(SyntheticConfig(num_samples=200, seed=7))
        assert len(dataset) == 200
        assert len(set(dataset.ids())) == 200
        assert all(answer_is_reachable(s) for s in dataset)

    def test_scene_shape(self):
        dataset = generate_synthetic(SyntheticConfig(num_samples=40, seed=5))
        for sample in dataset:
            assert 3 <= len(sample.ocr_tokens) <= 8
            assert 1 <= len(sample.objects) <= 4
            assert sample.image_width == sample.image_height == 1000.0
            for item in list(sample.ocr_tokens) + list(sample.objects):
                assert all(0 <= v <= 1000 for v in item.quad.to_list())

    def test_families_rotate(self):
        dataset = generate_synthetic(SyntheticConfig(num_samples=8, seed=0))
        assert [sid.split('-')[0] for sid in dataset.ids()] == list('abcdabcd')
        answers = {sid.split('-')[0]: s.gold_answers[0] for sid, s in zip(dataset.ids(), dataset)}
        assert answers['c'] in ('yes', 'no')
        assert answers['d'] == 'unanswerable'

    def test_nearest_center_rule(self):
        obj = SceneObject(name='bus', attributes=(), quad=Quad.from_box(50, 50, 150, 150))
        tokens = [
            OcrToken(text='far', quad=Quad.from_box(880, 880, 920, 920)),
            OcrToken(text='near', quad=Quad.from_box(90, 90, 130, 110)),
        ]
        index, gap = _nearest_token(obj, tokens)
        assert tokens[index].text == 'near'
        assert gap > 25

    def test_family_b_answer_is_nearest_token(self):
        dataset = generate_synthetic(SyntheticConfig(num_samples=16, seed=11))
        for sample in dataset:
            if not sample.sample_id.startswith('b-'):
                continue
            name = sample.question.rsplit(' ', 1)[-1]
            target = next(o for o in sample.objects if o.name == name)
            index, _ = _nearest_token(target, list(sample.ocr_tokens))
            assert sample.gold_answers == (sample.ocr_tokens[index].text,)

    def test_dictionary_contains_answer(self):
        dataset = generate_synthetic(SyntheticConfig(num_samples=8, seed=4, dictionary_size=6))
        for sample in dataset:
            assert sample.gold_answers[0] in sample.dictionary
            assert len(sample.dictionary) <= 6 + 1

    @pytest.mark.parametrize('kwargs', [
        {'vocab_size': 9},
        {'vocab_size': MAX_SYNTHETIC_VOCAB + 1},
        {'num_samples': 0},
    ])
    def test_rejects_bad_config(self, kwargs):
        with pytest.raises(ValidationError):
            generate_synthetic(SyntheticConfig(**kwargs))
