import os

from shared.corpus import load_dataset
from shared.errors import ValidationError
from shared.metrics import MetricsConfig, evaluate
from shared.utils import error_response, get_logger, http_response, load_config

logger = get_logger('evaluate')


def run_evaluation(predictions: str, data: str, config, out: str = None, csv_path: str = None) -> dict:
    """Score a predictions file against a gold dataset; returns the summary."""
    gold = load_dataset(data, split='dev')
    report = evaluate(predictions, gold, MetricsConfig.from_run_config(config),
                      subset_separator=config.subset_separator, csv_path=csv_path)
    if out:
        directory = os.path.dirname(out)
        if directory:
            os.makedirs(directory, exist_ok=True)
        report.write_json(out)
        logger.info(f"📝 Report written to {out}")
    return {
        'anls': report.anls,
        'vqa_accuracy': report.vqa_accuracy,
        'counts': report.counts,
        'subsets': report.subsets,
        'report': out,
        'csv': csv_path,
    }


def handler(event, context=None):
    """Entry point for `signpost eval`"""
    try:
        predictions = event.get('predictions')
        data = event.get('data')
        if not predictions or not data:
            raise ValidationError("'predictions' and 'data' must be provided in event")
        config = load_config(event.get('config'))
        result = run_evaluation(predictions, data, config, out=event.get('out'), csv_path=event.get('csv'))
        return http_response(200, result)
    except Exception as e:
        return error_response(e, 'evaluate handler')
