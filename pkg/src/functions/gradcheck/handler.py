from shared.gradients import gradcheck
from shared.utils import error_response, get_logger, http_response, load_config

logger = get_logger('gradcheck')

DEFAULT_CONFIG = 'config/toy.json'


def run_gradcheck(config, seeds, corrupt: str = None) -> dict:
    reports = {}
    for seed in seeds:
        reports[str(seed)] = gradcheck(config, seed=seed, corrupt=corrupt).to_dict()
    passed = all(r['status'] == 'PASS' for r in reports.values())
    return {
        'status': 'PASS' if passed else 'FAIL',
        'max_error': max(r['max_error'] for r in reports.values()),
        'failing': sorted({name for r in reports.values() for name in r['failing']}),
        'seeds': reports,
    }


def handler(event, context=None):
    """
    Entry point for `signpost gradcheck`.

    A FAIL is still a 200 response; the CLI turns it into a non-zero exit.
    """
    try:
        config = load_config(event.get('config') or DEFAULT_CONFIG)
        seeds = event.get('seeds') or [event.get('seed') if event.get('seed') is not None else config.seed]
        result = run_gradcheck(config, [int(s) for s in seeds], corrupt=event.get('corrupt'))
        logger.info(f"{'✅' if result['status'] == 'PASS' else '❌'} gradcheck {result['status']} "
                    f"(max error {result['max_error']:.2e})")
        return http_response(200, result)
    except Exception as e:
        return error_response(e, 'gradcheck handler')
