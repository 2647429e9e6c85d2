"""
Checkpoint container: a single ``torch.save`` file holding a dict

    format_version  int
    config          flat RunConfig dict
    config_hash     sha256 over the architecture keys
    vocab           list of vocabulary words (row i + 1)
    state_dict      named parameter tensors
    shapes          {name: [dims]}
    optimizer       optimizer state dict or None
    epoch           completed epochs
    rng_state       {"torch": ByteTensor, "numpy_seed": int, "numpy": bit generator state}
    metrics         last epoch's metrics record
"""

import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import torch

from .errors import CheckpointError
from .model import TextCenteredReader
from .utils import RunConfig, config_hash, get_logger

logger = get_logger('checkpoint')

FORMAT_VERSION = 1
REQUIRED_KEYS = ('format_version', 'config', 'config_hash', 'vocab', 'state_dict', 'shapes')


@dataclass
class Checkpoint:
    config: RunConfig
    config_hash: str
    vocab: List[str]
    state_dict: Dict[str, torch.Tensor]
    shapes: Dict[str, List[int]]
    optimizer: Optional[dict] = None
    epoch: int = 0
    rng_state: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @classmethod
    def capture(cls, model: TextCenteredReader, optimizer=None, epoch: int = 0, metrics: dict = None,
                numpy_seed: int = None, numpy_rng: np.random.Generator = None) -> 'Checkpoint':
        """Snapshot everything ``train(..., resume=path)`` needs to continue bit for bit."""
        state = {name: tensor.detach().cpu().clone() for name, tensor in model.state_dict().items()}
        return cls(
            config=model.config,
            config_hash=config_hash(model.config),
            vocab=list(model.vocab),
            state_dict=state,
            shapes={name: list(t.shape) for name, t in state.items()},
            optimizer=optimizer.state_dict() if optimizer is not None else None,
            epoch=epoch,
            rng_state={
                'torch': torch.get_rng_state(),
                'numpy_seed': numpy_seed,
                'numpy': numpy_rng.bit_generator.state if numpy_rng is not None else None,
            },
            metrics=dict(metrics or {}),
        )

    def to_dict(self) -> dict:
        return {
            'format_version': self.format_version,
            'config': self.config.to_dict(),
            'config_hash': self.config_hash,
            'vocab': self.vocab,
            'state_dict': self.state_dict,
            'shapes': self.shapes,
            'optimizer': self.optimizer,
            'epoch': self.epoch,
            'rng_state': self.rng_state,
            'metrics': self.metrics,
        }


def save_checkpoint(checkpoint: Checkpoint, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    torch.save(checkpoint.to_dict(), path)
    return path


def load_checkpoint(path: str, expected: RunConfig = None, force: bool = False) -> Checkpoint:
    """
    Read a checkpoint. When ``expected`` is given its architecture hash must
    match the stored one unless ``force`` is set.
    """
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        raw = torch.load(path, map_location='cpu', weights_only=False)
    except Exception as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")
    if not isinstance(raw, dict) or any(key not in raw for key in REQUIRED_KEYS):
        raise CheckpointError(f"{path} is not a Signpost checkpoint")
    if raw['format_version'] != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {raw['format_version']} (expected {FORMAT_VERSION})")

    config = RunConfig.from_dict(raw['config'])
    if config_hash(config) != raw['config_hash']:
        raise CheckpointError(f"{path} is corrupt: stored config does not match its hash")
    if expected is not None and config_hash(expected) != raw['config_hash']:
        if not force:
            raise CheckpointError(
                f"checkpoint {path} was trained with a different architecture config; pass --force to load anyway")
        logger.warning(f"⚠️ loading {path} despite a config hash mismatch (--force)")
    for name, tensor in raw['state_dict'].items():
        if list(tensor.shape) != list(raw['shapes'].get(name, [])):
            raise CheckpointError(f"tensor {name} has shape {list(tensor.shape)}, header says {raw['shapes'].get(name)}")

    return Checkpoint(
        config=config,
        config_hash=raw['config_hash'],
        vocab=list(raw['vocab']),
        state_dict=raw['state_dict'],
        shapes=raw['shapes'],
        optimizer=raw.get('optimizer'),
        epoch=raw.get('epoch', 0),
        rng_state=raw.get('rng_state', {}),
        metrics=raw.get('metrics', {}),
        format_version=raw['format_version'],
    )


def restore_model(checkpoint: Checkpoint, overrides: dict = None) -> TextCenteredReader:
    """
    Rebuild the model from a checkpoint. ``overrides`` change run-time keys
    such as dictionary mode or retrieval; a shape-changing override fails
    when the tensors are loaded.
    """
    config = checkpoint.config
    if overrides:
        config = config.replace(**{k: v for k, v in overrides.items() if v is not None})
    model = TextCenteredReader(config, checkpoint.vocab)
    try:
        model.load_state_dict(checkpoint.state_dict)
    except RuntimeError as e:
        raise CheckpointError(f"checkpoint tensors do not fit the model: {e}")
    model.eval()
    return model
