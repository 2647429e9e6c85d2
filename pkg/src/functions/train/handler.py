from shared.corpus import load_dataset
from shared.errors import ValidationError
from shared.retrieval import load_qa_pairs
from shared.training import train
from shared.utils import error_response, get_logger, http_response, load_config

logger = get_logger('train')

# event keys that map straight onto RunConfig keys
CONFIG_OVERRIDES = {
    'seed': 'seed',
    'relational_mode': 'relational_mode',
    'dictionary_mode': 'dictionary_mode',
    'topk': 'retrieval_topk',
    'epochs': 'epochs',
    'lr': 'lr',
    'qa_pairs': 'qa_pairs_path',
    'use_retrieval': 'use_retrieval',
}


def config_from_event(event: dict):
    overrides = {key: event.get(name) for name, key in CONFIG_OVERRIDES.items()}
    if event.get('data'):
        overrides['train_path'] = event['data']
    if event.get('dev'):
        overrides['dev_path'] = event['dev']
    if event.get('out'):
        overrides['output_dir'] = event['out']
    return load_config(event.get('config'), overrides)


def run_training(config, progress: bool = False, resume: str = None) -> dict:
    if not config.train_path:
        raise ValidationError("no training data given ('data' or config key 'train_path')")
    train_set = load_dataset(config.train_path, split='train')
    dev_set = load_dataset(config.dev_path, split='dev') if config.dev_path else None
    qa_pairs = load_qa_pairs(config.qa_pairs_path) if config.use_retrieval and config.qa_pairs_path else None

    result = train(config, train_set, dev_set=dev_set, output_dir=config.output_dir,
                   qa_pairs=qa_pairs, progress=progress, resume=resume)
    return {
        'output_dir': config.output_dir,
        'best_checkpoint': result.best_path,
        'last_checkpoint': result.last_path,
        'best_epoch': result.best_epoch,
        'epochs': result.history,
    }


def handler(event, context=None):
    """Entry point for `signpost train`"""
    try:
        config = config_from_event(event)
        logger.info(f"🚀 Training run into {config.output_dir} (seed {config.seed})")
        body = run_training(config, progress=bool(event.get('progress')), resume=event.get('resume'))
        return http_response(200, body)
    except Exception as e:
        return error_response(e, 'train handler')
