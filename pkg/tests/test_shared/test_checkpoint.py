"""
Tests for checkpoint save, load and restore.
"""

import pytest
import torch

from shared.checkpoint import FORMAT_VERSION, Checkpoint, load_checkpoint, restore_model, save_checkpoint
from shared.errors import CheckpointError
from shared.model import build_model, build_vocab
from shared.training import featurize_all, make_optimizer, predict_inputs, train


@pytest.fixture
def model(toy_config, small_synthetic):
    return build_model(toy_config, build_vocab(list(small_synthetic), toy_config))


@pytest.fixture
def saved(model, tmp_path):
    path = str(tmp_path / 'ckpt' / 'model.pt')
    save_checkpoint(Checkpoint.capture(model, make_optimizer(model, model.config), epoch=3), path)
    return path


def _rewrite(path, **changes):
    raw = torch.load(path, map_location='cpu', weights_only=False)
    raw.update(changes)
    torch.save(raw, path)
    return raw


class TestRoundTrip:
    def test_restored_model_predicts_identically(self, model, saved, toy_config, small_synthetic):
        inputs = featurize_all(list(small_synthetic), toy_config)
        restored = restore_model(load_checkpoint(saved))
        assert predict_inputs(restored, inputs) == predict_inputs(model, inputs)

    def test_tensors_survive_bit_for_bit(self, model, saved):
        checkpoint = load_checkpoint(saved)
        for name, tensor in model.state_dict().items():
            assert torch.equal(checkpoint.state_dict[name], tensor)
            assert checkpoint.shapes[name] == list(tensor.shape)

    def test_metadata(self, model, saved):
        checkpoint = load_checkpoint(saved)
        assert checkpoint.epoch == 3
        assert checkpoint.format_version == FORMAT_VERSION
        assert checkpoint.vocab == model.vocab
        assert checkpoint.config == model.config
        assert checkpoint.optimizer is not None
        assert 'torch' in checkpoint.rng_state
        assert checkpoint.rng_state['numpy'] is None

    def test_resume_needs_generator_state(self, saved, toy_config, small_synthetic):
        with pytest.raises(CheckpointError, match='generator state'):
            train(toy_config.replace(epochs=4), small_synthetic, resume=saved)

    def test_runtime_override(self, saved):
        restored = restore_model(load_checkpoint(saved), overrides={'dictionary_mode': True, 'retrieval_topk': None})
        assert restored.config.dictionary_mode
        assert not restored.training


class TestConfigHash:
    def test_matching_architecture(self, saved, toy_config):
        assert load_checkpoint(saved, expected=toy_config.replace(lr=0.5, epochs=9)).epoch == 3

    def test_mismatch_is_refused(self, saved, toy_config):
        with pytest.raises(CheckpointError, match='--force'):
            load_checkpoint(saved, expected=toy_config.replace(hidden_size=16))

    def test_force_loads_anyway(self, saved, toy_config):
        assert load_checkpoint(saved, expected=toy_config.replace(hidden_size=16), force=True).epoch == 3

    def test_shape_changing_override_fails_on_restore(self, saved):
        with pytest.raises(CheckpointError):
            restore_model(load_checkpoint(saved), overrides={'hidden_size': 16})


class TestBrokenFiles:
    def test_missing(self, tmp_path):
        with pytest.raises(CheckpointError, match='not found'):
            load_checkpoint(str(tmp_path / 'nope.pt'))

    def test_garbage_bytes(self, tmp_path):
        path = tmp_path / 'garbage.pt'
        path.write_bytes(b'definitely not a checkpoint')
        with pytest.raises(CheckpointError):
            load_checkpoint(str(path))

    def test_foreign_pickle(self, tmp_path):
        path = str(tmp_path / 'other.pt')
        torch.save({'weights': torch.zeros(2)}, path)
        with pytest.raises(CheckpointError, match='not a Signpost checkpoint'):
            load_checkpoint(path)

    def test_future_format(self, saved):
        _rewrite(saved, format_version=FORMAT_VERSION + 1)
        with pytest.raises(CheckpointError, match='format'):
            load_checkpoint(saved)

    def test_edited_config_breaks_the_hash(self, saved):
        raw = torch.load(saved, map_location='cpu', weights_only=False)
        raw['config']['hidden_size'] = 16
        torch.save(raw, saved)
        with pytest.raises(CheckpointError, match='corrupt'):
            load_checkpoint(saved)

    def test_shape_header_mismatch(self, saved):
        raw = torch.load(saved, map_location='cpu', weights_only=False)
        name = next(iter(raw['shapes']))
        raw['shapes'][name] = [999]
        torch.save(raw, saved)
        with pytest.raises(CheckpointError, match=name):
            load_checkpoint(saved)
