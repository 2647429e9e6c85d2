"""
signpost command line.

    python src/cli.py synth --out data/synth.jsonl --num-samples 200 --seed 7
    python src/cli.py train --config config/desk.json --data data/synth.jsonl --out runs/desk
    python src/cli.py predict --checkpoint runs/desk/best.pt --data data/test.jsonl --out preds.jsonl
    python src/cli.py eval --predictions preds.jsonl --data data/test.jsonl --out report.json

Each subcommand builds an event for its handler in src/functions/. The
handler's body goes to stdout on success; on failure it goes to stderr as
JSON and the exit code is 1. Argument errors print a UsageError JSON on
stderr and exit with 2.
"""

import argparse
import importlib
import json
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from shared.utils import RELATIONAL_MODES  # noqa: E402

HANDLERS = {
    'prepare': 'functions.prepare.handler',
    'synth': 'functions.synth.handler',
    'train': 'functions.train.handler',
    'predict': 'functions.predict.handler',
    'eval': 'functions.evaluate.handler',
    'gradcheck': 'functions.gradcheck.handler',
    'retrieve-build': 'functions.retrieve_build.handler',
}


class SignpostArgumentParser(argparse.ArgumentParser):
    """Usage errors go to stderr as an error JSON, exit code 2."""

    def error(self, message):
        error = {'error': 'UsageError', 'message': message, 'where': self.prog}
        self.exit(2, json.dumps(error, ensure_ascii=False) + '\n')


def _common(parser, *flags):
    if 'config' in flags:
        parser.add_argument('--config', help='flat JSON config file (default config/run.json)')
    if 'seed' in flags:
        parser.add_argument('--seed', type=int, help='random seed')
    if 'data' in flags:
        parser.add_argument('--data', help='dataset JSONL')
    if 'out' in flags:
        parser.add_argument('--out', help='output path')
    if 'checkpoint' in flags:
        parser.add_argument('--checkpoint', help='checkpoint file')
    if 'relational' in flags:
        parser.add_argument('--relational-mode', choices=RELATIONAL_MODES, help='relational reasoning ablation')
    if 'dictionary' in flags:
        parser.add_argument('--dictionary-mode', action='store_true', default=None,
                            help='score per-sample dictionary entries instead of OCR spans')
    if 'topk' in flags:
        parser.add_argument('--topk', type=int, help='retrieved additional candidates per question')


def build_parser() -> argparse.ArgumentParser:
    parser = SignpostArgumentParser(prog='signpost', description='Text-centered scene-text question answering')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('prepare', help='validate and convert a dataset')
    _common(p, 'data', 'out')
    p.add_argument('--split', default='train', choices=('train', 'dev', 'test'))
    p.add_argument('--lenient', action='store_true', help='skip bad records instead of failing')

    p = sub.add_parser('synth', help='generate a synthetic corpus')
    _common(p, 'seed', 'out')
    p.add_argument('--num-samples', type=int, default=200)
    p.add_argument('--vocab-size', type=int, default=50)
    p.add_argument('--dictionary-size', type=int, default=0)

    p = sub.add_parser('train', help='train a model')
    _common(p, 'config', 'seed', 'data', 'out', 'relational', 'dictionary', 'topk')
    p.add_argument('--dev', help='dev JSONL (default: split off dev_fraction of --data)')
    p.add_argument('--qa-pairs', help='QA-pair JSONL for retrieval')
    p.add_argument('--epochs', type=int)
    p.add_argument('--resume', help='continue from this checkpoint (last.pt) up to --epochs')
    p.add_argument('--progress', action='store_true', help='show progress bars')

    p = sub.add_parser('predict', help='predict answers with a checkpoint')
    _common(p, 'config', 'data', 'out', 'checkpoint', 'relational', 'dictionary', 'topk')
    p.add_argument('--qa-pairs', help='QA-pair JSONL for retrieval')
    p.add_argument('--force', action='store_true', help='load despite a config hash mismatch')

    p = sub.add_parser('eval', help='compute ANLS and VQA accuracy')
    _common(p, 'config', 'data', 'out')
    p.add_argument('--predictions', required=True, help='predictions JSONL')
    p.add_argument('--csv', help='per-sample CSV dump')

    p = sub.add_parser('gradcheck', help='finite-difference gradient check at toy dims')
    _common(p, 'config', 'seed')
    p.add_argument('--seeds', type=int, nargs='+', help='several seeds in one run')
    p.add_argument('--corrupt', help='offset the analytic gradient of this tensor (self-test)')

    p = sub.add_parser('retrieve-build', help='build the QA-pair retrieval corpus')
    _common(p, 'config', 'data', 'out', 'topk')
    p.add_argument('--qa-pairs', help='existing QA-pair JSONL to index instead of --data')
    p.add_argument('--query', help='run one query against the built index')
    return parser


def event_from_args(args: argparse.Namespace) -> dict:
    event = {key: value for key, value in vars(args).items() if key != 'command' and value is not None}
    if args.command == 'prepare':
        event['strict'] = not event.pop('lenient', False)
    return event


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    module = importlib.import_module(HANDLERS[args.command])
    response = module.handler(event_from_args(args))
    body = json.loads(response['body'])
    if response['statusCode'] != 200:
        print(json.dumps(body, ensure_ascii=False), file=sys.stderr)
        return 1
    print(json.dumps(body, indent=2, ensure_ascii=False))
    if body.get('status') == 'FAIL':
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
