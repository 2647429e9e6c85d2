"""
Deterministic Adamax training loop, batch prediction and per-epoch
evaluation.
"""

import json
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from tqdm import tqdm

from .answer import loss
from .checkpoint import Checkpoint, load_checkpoint, restore_model, save_checkpoint
from .corpus import Dataset, Sample, split_dataset
from .errors import CheckpointError, DivergenceError, ValidationError
from .metrics import MetricsConfig, anls, vqa_accuracy
from .model import SampleInputs, TextCenteredReader, build_model, build_vocab, featurize
from .retrieval import build_retriever, pairs_from_dataset, write_qa_pairs
from .utils import RunConfig, batch_items, get_logger

logger = get_logger('training')

ADAMAX_BETAS = (0.9, 0.999)
ADAMAX_EPS = 1e-8
QA_PAIRS_FILE = 'qa_pairs.jsonl'


@dataclass
class TrainResult:
    model: TextCenteredReader
    history: List[dict] = field(default_factory=list)
    best_path: Optional[str] = None
    last_path: Optional[str] = None
    best_epoch: int = 0


def seed_everything(config: RunConfig):
    torch.manual_seed(config.seed)
    torch.set_num_threads(config.num_threads)


def additional_texts_for(sample: Sample, retriever, config: RunConfig, exclude_own: bool = False) -> List[str]:
    if retriever is None:
        return []
    return retriever.retrieve(sample.question, config.retrieval_topk,
                              exclude_source=sample.sample_id if exclude_own else None)


def featurize_all(samples: Sequence[Sample], config: RunConfig, retriever=None,
                  exclude_own: bool = False) -> List[SampleInputs]:
    return [featurize(s, config, additional_texts_for(s, retriever, config, exclude_own)) for s in samples]


def make_optimizer(model: TextCenteredReader, config: RunConfig) -> torch.optim.Optimizer:
    trainable = [p for p in model.parameters() if p.requires_grad]
    return torch.optim.Adamax(trainable, lr=config.lr, betas=ADAMAX_BETAS, eps=ADAMAX_EPS,
                              weight_decay=config.weight_decay)


def predict_inputs(model: TextCenteredReader, inputs: Sequence[SampleInputs]) -> List[dict]:
    """Prediction records in input order."""
    was_training = model.training
    model.eval()
    records = []
    with torch.no_grad():
        for x in inputs:
            records.append(model(x).to_record(x.sample_id))
    model.train(was_training)
    return records


def score_records(records: Sequence[dict], samples: Sequence[Sample], cfg: MetricsConfig) -> Dict[str, float]:
    gold = {s.sample_id: list(s.gold_answers) for s in samples if s.gold_answers}
    if not gold:
        return {'anls': 0.0, 'vqa_accuracy': 0.0}
    predictions = {r['sample_id']: r['answer'] for r in records}
    return {'anls': anls(predictions, gold, cfg), 'vqa_accuracy': vqa_accuracy(predictions, gold, cfg)}


def write_predictions(records: Sequence[dict], path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False) + '\n')


def _selection_key(record: dict) -> float:
    return record['dev_anls'] if 'dev_anls' in record else -record['train_loss']


def _resume_state(checkpoint: Checkpoint, optimizer: torch.optim.Optimizer, rng: np.random.Generator) -> int:
    """Load optimizer and generator state from ``checkpoint``; return its epoch."""
    state = checkpoint.rng_state or {}
    if checkpoint.optimizer is None or state.get('numpy') is None:
        raise CheckpointError("checkpoint has no optimizer or generator state to resume from")
    optimizer.load_state_dict(checkpoint.optimizer)
    torch.set_rng_state(state['torch'])
    rng.bit_generator.state = state['numpy']
    return checkpoint.epoch


def _previous_history(metrics_path: Optional[str], last_epoch: int) -> List[dict]:
    """Records up to ``last_epoch``; later lines (from a longer earlier run) are dropped from the file."""
    if not metrics_path or not os.path.exists(metrics_path):
        return []
    with open(metrics_path, 'r', encoding='utf-8') as f:
        history = [json.loads(line) for line in f if line.strip()]
    history = [r for r in history if r['epoch'] <= last_epoch]
    with open(metrics_path, 'w', encoding='utf-8') as f:
        for record in history:
            f.write(json.dumps(record) + '\n')
    return history


def train(config: RunConfig, train_set: Dataset, dev_set: Dataset = None, output_dir: str = None,
          qa_pairs=None, progress: bool = False, resume: str = None) -> TrainResult:
    """
    Train from scratch, or continue from the checkpoint at ``resume``. Batch
    order comes from a numpy generator seeded with ``config.seed``; the model
    is built after ``torch.manual_seed``. Writes ``best.pt``, ``last.pt`` and
    ``metrics.jsonl`` when ``output_dir`` is set.

    Resuming restores the weights, the optimizer state, both generators and
    the epoch counter, then runs epochs ``checkpoint.epoch + 1 .. config.epochs``.
    Epochs 1..N in one run and 1..K followed by a resume to N give the same
    weights. The architecture config must match the checkpoint's.
    """
    if len(train_set) == 0:
        raise ValidationError("training split is empty")
    seed_everything(config)
    if dev_set is None and config.dev_fraction > 0 and len(train_set) > 1:
        train_set, dev_set = split_dataset(train_set, config.dev_fraction)
        logger.info(f"🔀 split {len(train_set)} train / {len(dev_set)} dev samples")

    if config.use_retrieval and config.retrieval_backend == 'bm25' and qa_pairs is None and not config.qa_pairs_path:
        qa_pairs = pairs_from_dataset(train_set)
        if output_dir:
            os.makedirs(output_dir, exist_ok=True)
            write_qa_pairs(qa_pairs, os.path.join(output_dir, QA_PAIRS_FILE))
    retriever = build_retriever(config, qa_pairs)
    extra_texts = [p.answer for p in qa_pairs] if qa_pairs else []

    checkpoint = load_checkpoint(resume, expected=config) if resume else None
    if checkpoint is not None and checkpoint.epoch >= config.epochs:
        raise ValidationError(f"{resume} already covers {checkpoint.epoch} epochs; raise 'epochs' to continue")
    if checkpoint is not None:
        model = restore_model(checkpoint, overrides=config.to_dict())
    else:
        vocab = build_vocab(list(train_set), config, extra_texts=extra_texts)
        model = build_model(config, vocab)
    optimizer = make_optimizer(model, config)
    metrics_cfg = MetricsConfig.from_run_config(config)

    train_inputs = featurize_all(list(train_set), config, retriever, exclude_own=True)
    dev_inputs = featurize_all(list(dev_set), config, retriever) if dev_set is not None and len(dev_set) else []

    metrics_path = None
    if output_dir:
        os.makedirs(output_dir, exist_ok=True)
        metrics_path = os.path.join(output_dir, 'metrics.jsonl')
        if checkpoint is None:
            open(metrics_path, 'w').close()

    rng = np.random.default_rng(config.seed)
    result = TrainResult(model=model)
    best_key = None
    start_epoch = 1
    if checkpoint is not None:
        start_epoch = _resume_state(checkpoint, optimizer, rng) + 1
        result.history = _previous_history(metrics_path, checkpoint.epoch)
        for record in result.history:
            key = _selection_key(record)
            if best_key is None or key > best_key:
                best_key, result.best_epoch = key, record['epoch']
        if output_dir and os.path.exists(os.path.join(output_dir, 'best.pt')):
            result.best_path = os.path.join(output_dir, 'best.pt')
        logger.info(f"⏩ resuming {resume} after epoch {checkpoint.epoch}")
    logger.info(f"🚀 training on {len(train_inputs)} samples for {config.epochs} epochs "
                f"(batch {config.batch_size}, lr {config.lr})")

    for epoch in range(start_epoch, config.epochs + 1):
        model.train()
        order = rng.permutation(len(train_inputs)).tolist()
        total, unreachable = 0.0, 0
        batches = batch_items(order, config.batch_size)
        for batch_no, batch in enumerate(tqdm(batches, desc=f'epoch {epoch}', disable=not progress, leave=False)):
            optimizer.zero_grad()
            results = [loss(model(train_inputs[i]), train_inputs[i].gold_answers) for i in batch]
            batch_loss = torch.stack([r.loss for r in results]).mean()
            if not math.isfinite(batch_loss.item()):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}",
                    diagnostics={
                        'epoch': epoch,
                        'batch': batch_no,
                        'sample_ids': [train_inputs[i].sample_id for i in batch],
                        'losses': [r.loss.item() for r in results],
                    },
                )
            batch_loss.backward()
            if config.max_grad_norm > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.max_grad_norm)
            optimizer.step()
            total += sum(r.loss.item() for r in results)
            unreachable += sum(1 for r in results if not r.reachable)

        record = {'epoch': epoch, 'train_loss': total / len(train_inputs), 'unreachable': unreachable}
        if config.eval_train:
            record['train_anls'] = score_records(predict_inputs(model, train_inputs), list(train_set), metrics_cfg)['anls']
        if dev_inputs:
            dev_scores = score_records(predict_inputs(model, dev_inputs), list(dev_set), metrics_cfg)
            record['dev_anls'] = dev_scores['anls']
            record['dev_accuracy'] = dev_scores['vqa_accuracy']
        result.history.append(record)
        logger.info(f"📈 epoch {epoch}: loss {record['train_loss']:.4f}"
                    + (f", train ANLS {record['train_anls']:.4f}" if 'train_anls' in record else '')
                    + (f", dev ANLS {record['dev_anls']:.4f}" if 'dev_anls' in record else ''))

        key = _selection_key(record)
        improved = best_key is None or key > best_key
        if improved:
            best_key = key
            result.best_epoch = epoch
        if output_dir:
            with open(metrics_path, 'a', encoding='utf-8') as f:
                f.write(json.dumps(record) + '\n')
            checkpoint = Checkpoint.capture(model, optimizer, epoch=epoch, metrics=record, numpy_seed=config.seed,
                                            numpy_rng=rng)
            result.last_path = save_checkpoint(checkpoint, os.path.join(output_dir, 'last.pt'))
            if improved:
                result.best_path = save_checkpoint(checkpoint, os.path.join(output_dir, 'best.pt'))

    if output_dir and config.epochs == 0:
        checkpoint = Checkpoint.capture(model, optimizer, epoch=0, numpy_seed=config.seed, numpy_rng=rng)
        result.last_path = save_checkpoint(checkpoint, os.path.join(output_dir, 'last.pt'))
        result.best_path = save_checkpoint(checkpoint, os.path.join(output_dir, 'best.pt'))
    logger.info(f"✅ training finished; best epoch {result.best_epoch}")
    return result
