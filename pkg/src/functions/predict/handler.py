import os
from collections import Counter

from shared.checkpoint import load_checkpoint, restore_model
from shared.corpus import load_dataset
from shared.errors import ValidationError
from shared.retrieval import build_retriever, load_qa_pairs
from shared.training import QA_PAIRS_FILE, featurize_all, predict_inputs, seed_everything, write_predictions
from shared.utils import error_response, get_logger, http_response, load_config

logger = get_logger('predict')

RUNTIME_OVERRIDES = {
    'dictionary_mode': 'dictionary_mode',
    'relational_mode': 'relational_mode',
    'topk': 'retrieval_topk',
    'use_retrieval': 'use_retrieval',
    'qa_pairs': 'qa_pairs_path',
}


def _qa_pairs_for(config, checkpoint_path: str):
    if not config.use_retrieval or config.retrieval_backend != 'bm25':
        return None
    path = config.qa_pairs_path or os.path.join(os.path.dirname(checkpoint_path), QA_PAIRS_FILE)
    if not os.path.exists(path):
        raise ValidationError(f"retrieval is on but no QA-pair file was found at {path}", field='qa_pairs_path')
    return load_qa_pairs(path)


def predict(checkpoint_path: str, data: str, out: str, expected_config=None, force: bool = False,
            overrides: dict = None) -> dict:
    """
    Run a trained checkpoint over a dataset and write one JSONL prediction per sample.

    Args:
        checkpoint_path (str): checkpoint written by training
        data (str): dataset JSONL; gold answers are optional
        out (str): predictions JSONL path
        expected_config (RunConfig, optional): config whose architecture must match the checkpoint
        force (bool): load despite a config hash mismatch
        overrides (dict, optional): run-time config keys (dictionary mode, retrieval)

    Returns:
        dict: counts per selected pool and the output path
    """
    checkpoint = load_checkpoint(checkpoint_path, expected=expected_config, force=force)
    model = restore_model(checkpoint, overrides=overrides)
    config = model.config
    seed_everything(config)

    dataset = load_dataset(data, split='test')
    retriever = build_retriever(config, _qa_pairs_for(config, checkpoint_path))
    records = predict_inputs(model, featurize_all(list(dataset), config, retriever))
    write_predictions(records, out)

    pools = Counter(r['pool'] for r in records)
    logger.info(f"✅ Wrote {len(records)} predictions to {out}")
    return {
        'out': out,
        'predictions': len(records),
        'pools': dict(sorted(pools.items())),
        'checkpoint_epoch': checkpoint.epoch,
    }


def handler(event, context=None):
    """Entry point for `signpost predict`"""
    try:
        checkpoint_path = event.get('checkpoint')
        data = event.get('data')
        out = event.get('out')
        if not checkpoint_path or not data or not out:
            raise ValidationError("'checkpoint', 'data' and 'out' must be provided in event")
        expected = load_config(event['config']) if event.get('config') else None
        overrides = {key: event.get(name) for name, key in RUNTIME_OVERRIDES.items()}
        result = predict(checkpoint_path, data, out, expected_config=expected,
                         force=bool(event.get('force')), overrides=overrides)
        return http_response(200, result)
    except Exception as e:
        return error_response(e, 'predict handler')
