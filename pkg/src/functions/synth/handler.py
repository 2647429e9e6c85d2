import os
from collections import Counter

from shared.corpus import SyntheticConfig, generate_synthetic, write_dataset
from shared.errors import ValidationError
from shared.utils import error_response, get_logger, http_response

logger = get_logger('synth')


def synthesize(out: str, num_samples: int = 200, seed: int = 0, vocab_size: int = 50,
               dictionary_size: int = 0) -> dict:
    """Generate a synthetic corpus and write it as JSONL"""
    config = SyntheticConfig(num_samples=num_samples, vocab_size=vocab_size, seed=seed,
                             dictionary_size=dictionary_size)
    dataset = generate_synthetic(config)
    directory = os.path.dirname(out)
    if directory:
        os.makedirs(directory, exist_ok=True)
    write_dataset(dataset, out)
    families = Counter(s.sample_id.split('-', 1)[0] for s in dataset)
    logger.info(f"✅ Generated {len(dataset)} synthetic samples (seed {seed}) into {out}")
    return {
        'out': out,
        'samples': len(dataset),
        'seed': seed,
        'families': dict(sorted(families.items())),
    }


def handler(event, context=None):
    """Entry point for `signpost synth`"""
    try:
        out = event.get('out')
        if not out:
            raise ValidationError("'out' must be provided in event")
        result = synthesize(
            out,
            num_samples=int(event.get('num_samples') or 200),
            seed=int(event.get('seed') or 0),
            vocab_size=int(event.get('vocab_size') or 50),
            dictionary_size=int(event.get('dictionary_size') or 0),
        )
        return http_response(200, result)
    except Exception as e:
        return error_response(e, 'synth handler')
