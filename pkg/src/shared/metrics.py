"""
ANLS and VQA accuracy.

    NL(a, o)  = lev(a, o) / max(|a|, |o|), NL("", "") = 0
    s(a, o)   = 1 - NL(a, o) if NL(a, o) < tau else 0
    ANLS      = mean over questions of max over gold answers of s
    accuracy  = mean over questions of min(#humans matching / 3, 1);
                fewer than three answers: 1 on any match, else 0
"""

import csv
import json
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence

from nltk.metrics.distance import edit_distance

from .corpus import Dataset
from .errors import ValidationError
from .utils import get_logger, normalize_answer

logger = get_logger('metrics')

HUMAN_QUORUM = 3


@dataclass(frozen=True)
class MetricsConfig:
    tau: float = 0.5
    lowercase: bool = True
    strip_punct: bool = False

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValidationError(f"tau must lie in (0, 1], got {self.tau}", field='tau')

    @classmethod
    def from_run_config(cls, config) -> 'MetricsConfig':
        return cls(tau=config.anls_tau, lowercase=config.lowercase, strip_punct=config.strip_punct)

    def normalize(self, text: str) -> str:
        return normalize_answer(text, lowercase=self.lowercase, strip_punct=self.strip_punct)


@dataclass
class SampleScore:
    sample_id: str
    prediction: str
    anls_score: float
    acc_score: float
    missing: bool = False


@dataclass
class EvalReport:
    anls: float
    vqa_accuracy: float
    per_sample: List[SampleScore]
    counts: Dict[str, int]
    subsets: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return OrderedDict([
            ('anls', self.anls),
            ('vqa_accuracy', self.vqa_accuracy),
            ('counts', OrderedDict(sorted(self.counts.items()))),
            ('subsets', OrderedDict((k, OrderedDict(sorted(v.items()))) for k, v in sorted(self.subsets.items()))),
            ('per_sample', [OrderedDict([('sample_id', s.sample_id), ('prediction', s.prediction),
                                         ('anls_score', s.anls_score), ('acc_score', s.acc_score),
                                         ('missing', s.missing)])
                            for s in self.per_sample]),
        ])

    def write_json(self, path: str):
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
            f.write('\n')

    def write_csv(self, path: str):
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['sample_id', 'prediction', 'anls_score', 'acc_score', 'missing'])
            for s in self.per_sample:
                writer.writerow([s.sample_id, s.prediction, f'{s.anls_score:.6f}', f'{s.acc_score:.6f}', int(s.missing)])


def levenshtein(a: str, b: str) -> int:
    return edit_distance(a, b)


def normalized_levenshtein(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return levenshtein(a, b) / longest


def similarity(prediction: str, gold: str, tau: float = 0.5) -> float:
    nl = normalized_levenshtein(prediction, gold)
    return 1.0 - nl if nl < tau else 0.0


def anls_score(prediction: str, golds: Sequence[str], cfg: MetricsConfig = MetricsConfig()) -> float:
    if not golds:
        raise ValidationError("a question needs at least one gold answer")
    p = cfg.normalize(prediction)
    return max(similarity(p, cfg.normalize(g), cfg.tau) for g in golds)


def accuracy_score(prediction: str, humans: Sequence[str], cfg: MetricsConfig = MetricsConfig()) -> float:
    """
    min(#matching humans / 3, 1) over three or more human answers. A shorter
    list holds reference answers rather than votes: any match scores 1.
    """
    if not humans:
        raise ValidationError("a question needs at least one human answer")
    p = cfg.normalize(prediction)
    matches = sum(1 for h in humans if cfg.normalize(h) == p)
    if len(humans) < HUMAN_QUORUM:
        return 1.0 if matches else 0.0
    return min(matches / HUMAN_QUORUM, 1.0)


def _check_gold(gold: Mapping[str, Sequence[str]]):
    if not gold:
        raise ValidationError("gold set is empty")


def anls(predictions: Mapping[str, str], gold: Mapping[str, Sequence[str]],
         cfg: MetricsConfig = MetricsConfig()) -> float:
    """Mean per-question ANLS; a missing prediction counts as the empty string."""
    _check_gold(gold)
    scores = [anls_score(predictions.get(sid, ''), answers, cfg) for sid, answers in gold.items()]
    return sum(scores) / len(scores)


def vqa_accuracy(predictions: Mapping[str, str], gold_multi: Mapping[str, Sequence[str]],
                 cfg: MetricsConfig = MetricsConfig()) -> float:
    _check_gold(gold_multi)
    scores = [accuracy_score(predictions.get(sid, ''), answers, cfg) for sid, answers in gold_multi.items()]
    return sum(scores) / len(scores)


def load_predictions(path: str) -> Dict[str, str]:
    predictions = {}
    try:
        f = open(path, 'r', encoding='utf-8')
    except OSError as e:
        raise ValidationError(f"cannot read predictions {path}: {e}")
    with f:
        for line_no, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ValidationError(f"invalid JSON: {e}", line=line_no)
            if not isinstance(record, dict) or 'sample_id' not in record:
                raise ValidationError("prediction record needs a sample_id", line=line_no)
            predictions[record['sample_id']] = record.get('answer') or ''
    return predictions


def subset_of(sample_id: str, separator: str = '-') -> str:
    return sample_id.split(separator, 1)[0] if separator and separator in sample_id else sample_id


def evaluate(predictions, gold_dataset: Dataset, cfg: MetricsConfig = MetricsConfig(),
             subset_separator: str = '-', csv_path: str = None) -> EvalReport:
    """
    Score predictions (a JSONL path or a sample_id -> answer map) against a
    dataset. Subsets group samples by the sample_id prefix before the
    separator.
    """
    if isinstance(predictions, str):
        predictions = load_predictions(predictions)
    gold = OrderedDict((s.sample_id, list(s.gold_answers)) for s in gold_dataset if s.gold_answers)
    _check_gold(gold)

    per_sample = []
    subsets: Dict[str, Dict[str, float]] = {}
    for sid, answers in gold.items():
        missing = sid not in predictions
        prediction = predictions.get(sid, '')
        score = SampleScore(sample_id=sid, prediction=prediction,
                            anls_score=anls_score(prediction, answers, cfg),
                            acc_score=accuracy_score(prediction, answers, cfg), missing=missing)
        per_sample.append(score)
        bucket = subsets.setdefault(subset_of(sid, subset_separator), {'anls': 0.0, 'vqa_accuracy': 0.0, 'count': 0})
        bucket['anls'] += score.anls_score
        bucket['vqa_accuracy'] += score.acc_score
        bucket['count'] += 1
    for bucket in subsets.values():
        bucket['anls'] /= bucket['count']
        bucket['vqa_accuracy'] /= bucket['count']

    n = len(per_sample)
    report = EvalReport(
        anls=sum(s.anls_score for s in per_sample) / n,
        vqa_accuracy=sum(s.acc_score for s in per_sample) / n,
        per_sample=per_sample,
        counts={
            'questions': n,
            'missing_predictions': sum(1 for s in per_sample if s.missing),
            'extra_predictions': sum(1 for sid in predictions if sid not in gold),
        },
        subsets=subsets,
    )
    if csv_path:
        report.write_csv(csv_path)
    logger.info(f"✅ ANLS {report.anls:.4f}, accuracy {report.vqa_accuracy:.4f} over {n} questions")
    return report
