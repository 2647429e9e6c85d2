from shared.corpus import SPLITS, load_dataset, write_dataset
from shared.errors import ValidationError
from shared.utils import error_response, get_logger, http_response

logger = get_logger('prepare')


def prepare(data: str, out: str = None, split: str = 'train', strict: bool = True) -> dict:
    """
    Validate a JSONL dataset and optionally write the cleaned copy.

    Args:
        data (str): input JSONL path
        out (str, optional): where to write the validated (clamped) records
        split (str): train, dev or test; test records may omit answers
        strict (bool): stop at the first bad record instead of skipping it

    Returns:
        dict: the load report
    """
    if split not in SPLITS:
        raise ValidationError(f"split must be one of {SPLITS}, got {split!r}", field='split')
    dataset = load_dataset(data, split=split, strict=strict)
    if out:
        write_dataset(dataset, out)
        logger.info(f"✅ Wrote {len(dataset)} validated samples to {out}")
    report = dataset.report
    return {
        'dataset': dataset.name,
        'split': split,
        'lines': report.lines,
        'loaded': report.loaded,
        'warned': report.warned,
        'rejected': report.rejected,
        'clamped_quads': report.clamped_quads,
        'errors': list(report.errors),
        'out': out,
    }


def handler(event, context=None):
    """Entry point for `signpost prepare`"""
    try:
        data = event.get('data')
        if not data:
            raise ValidationError("'data' must be provided in event")
        result = prepare(data, out=event.get('out'), split=event.get('split', 'train'),
                         strict=event.get('strict', True))
        return http_response(200, result)
    except Exception as e:
        return error_response(e, 'prepare handler')
