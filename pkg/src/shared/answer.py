"""
Answer prediction: candidate representations, semantic matching over OCR
spans, GRU-fused reasoning over additional texts, yes/no/unanswerable
heads, answer selection and the BCE training loss.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import torch
from torch import nn

from .attention import stable_softmax
from .errors import ShapeError, ValidationError
from .textprep import SPECIAL_KINDS, ZERO_POSITION, AnswerCandidate
from .utils import normalize_answer

PROB_EPS = 1e-7
POOL_ORDER = ('ocr_span', 'additional', 'yes', 'no', 'unanswerable')
SHAPE_DIM = 2 + len(ZERO_POSITION)


class MatchParams(nn.Module):
    def __init__(self, object_dim: int, question_dim: int, answer_dim: int):
        super().__init__()
        self.fc = nn.Linear(2 * object_dim, answer_dim)
        scale = 1.0 / math.sqrt(answer_dim)
        self.W_A = nn.Parameter(torch.randn(question_dim, answer_dim) * scale)
        self.W_AA = nn.Parameter(torch.randn(question_dim, answer_dim) * scale)
        self.W_special = nn.ParameterDict({
            kind: nn.Parameter(torch.randn(question_dim, answer_dim) * scale) for kind in SPECIAL_KINDS
        })
        self.w_special = nn.ParameterDict({
            kind: nn.Parameter(torch.randn(answer_dim) * scale) for kind in SPECIAL_KINDS
        })
        self.gru = nn.GRUCell(answer_dim, question_dim)
        self.null = nn.Parameter(torch.randn(answer_dim) * scale)
        self.W_shape = nn.Parameter(torch.zeros(SHAPE_DIM, answer_dim))

    @property
    def answer_dim(self) -> int:
        return self.fc.out_features


@dataclass
class Prediction:
    candidates: List[AnswerCandidate]
    p_ocr: torch.Tensor
    p_add: torch.Tensor
    p_yes: torch.Tensor
    p_no: torch.Tensor
    p_unanswerable: torch.Tensor
    selected: AnswerCandidate = None
    selected_score: float = 0.0
    selected_pool: str = ''

    def pool(self, kind: str) -> List[AnswerCandidate]:
        return [c for c in self.candidates if c.kind == kind]

    def special(self, kind: str) -> torch.Tensor:
        return {'yes': self.p_yes, 'no': self.p_no, 'unanswerable': self.p_unanswerable}[kind]

    def scored(self) -> List[Tuple[AnswerCandidate, float]]:
        """Every scorable candidate with its score, in pool order then index order."""
        pairs = []
        spans = self.pool('ocr_span')
        if self.p_ocr.numel() == len(spans):
            pairs.extend(zip(spans, self.p_ocr.tolist()))
        additional = self.pool('additional')
        if self.p_add.numel() == len(additional):
            pairs.extend(zip(additional, self.p_add.tolist()))
        for kind in SPECIAL_KINDS:
            for candidate in self.pool(kind):
                pairs.append((candidate, float(self.special(kind))))
        return pairs

    def to_record(self, sample_id: str) -> dict:
        return {
            'sample_id': sample_id,
            'answer': self.selected.text if self.selected else '',
            'score': round(float(self.selected_score), 8),
            'pool': self.selected_pool,
            'p_ocr': [round(p, 8) for p in self.p_ocr.tolist()],
            'p_add': [round(p, 8) for p in self.p_add.tolist()],
            'p_special': {
                'yes': round(float(self.p_yes), 8),
                'no': round(float(self.p_no), 8),
                'unanswerable': round(float(self.p_unanswerable), 8),
            },
        }


@dataclass
class LossResult:
    loss: torch.Tensor
    reachable: bool
    labels: Dict[str, List[float]] = field(default_factory=dict)


def span_shape(candidate: AnswerCandidate) -> Tuple[float, ...]:
    """Length indicator (one token, two or more) followed by the union-box position."""
    length = len(candidate.context_positions)
    return (1.0 if length <= 1 else 0.0, 1.0 if length >= 2 else 0.0) + tuple(candidate.positional)


def candidate_repr(u_span: torch.Tensor, u_hat_span: torch.Tensor, params: MatchParams,
                   shape: torch.Tensor = None) -> torch.Tensor:
    """
    ReLU(FC([u; u_hat])); works on a single vector or a batch of rows.

    ``shape`` rows (see ``span_shape``) add ``shape @ W_shape`` before the
    ReLU. Mean-pooled 2-token spans otherwise score the average of their
    tokens and can never outrank both.
    """
    pre = params.fc(torch.cat([u_span, u_hat_span], dim=-1))
    if shape is not None:
        pre = pre + shape @ params.W_shape
    return torch.relu(pre)


def _bilinear(uQ: torch.Tensor, W: torch.Tensor, reprs: torch.Tensor) -> torch.Tensor:
    return reprs @ (uQ @ W)


def match_ocr(uQ: torch.Tensor, reprs: torch.Tensor, params: MatchParams) -> torch.Tensor:
    if reprs.shape[0] == 0:
        raise ShapeError("semantic matching needs at least one candidate")
    return stable_softmax(_bilinear(uQ, params.W_A, reprs), dim=0)


def reasoning_state(uQ: torch.Tensor, p_ocr: torch.Tensor, ocr_reprs: torch.Tensor,
                    params: MatchParams) -> torch.Tensor:
    """One GRU-cell step: hidden u^Q, input the p_ocr-weighted sum of span reprs."""
    if ocr_reprs.shape[0] == 0:
        evidence = uQ.new_zeros(params.answer_dim)
    else:
        evidence = p_ocr @ ocr_reprs
    return params.gru(evidence.unsqueeze(0), uQ.unsqueeze(0)).squeeze(0)


def reason_additional(uQ: torch.Tensor, p_ocr: torch.Tensor, ocr_reprs: torch.Tensor,
                      additional_reprs: torch.Tensor, params: MatchParams) -> torch.Tensor:
    if additional_reprs.shape[0] == 0:
        raise ShapeError("semantic reasoning needs at least one additional candidate")
    tQ = reasoning_state(uQ, p_ocr, ocr_reprs, params)
    return stable_softmax(_bilinear(tQ, params.W_AA, additional_reprs), dim=0)


def special_heads(uQ: torch.Tensor, ocr_reprs: torch.Tensor, params: MatchParams) -> Dict[str, torch.Tensor]:
    """sigmoid((sum_i softmax_i(u^Q W u_i) u_i)^T w) for yes, no and unanswerable."""
    if ocr_reprs.shape[0] == 0:
        ocr_reprs = params.null.unsqueeze(0)
    heads = {}
    for kind in SPECIAL_KINDS:
        weights = stable_softmax(_bilinear(uQ, params.W_special[kind], ocr_reprs), dim=0)
        heads[kind] = torch.sigmoid((weights @ ocr_reprs) @ params.w_special[kind])
    return heads


def select_answer(pred: Prediction) -> Prediction:
    """Highest score wins; ties go to the earlier pool, then the earlier candidate."""
    best, best_score = None, -math.inf
    for candidate, score in pred.scored():
        if score > best_score:
            best, best_score = candidate, score
    if best is None:
        raise ValidationError("no candidate pool has a score")
    pred.selected = best
    pred.selected_score = best_score
    pred.selected_pool = best.kind
    return pred


def _bce(probabilities: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    p = probabilities.clamp(PROB_EPS, 1.0 - PROB_EPS)
    return -(labels * torch.log(p) + (1.0 - labels) * torch.log(1.0 - p)).sum()


def answer_labels(candidates: Sequence[AnswerCandidate], gold_answers: Sequence[str]) -> Dict[str, List[float]]:
    golds = {normalize_answer(a) for a in gold_answers}
    labels = {kind: [] for kind in ('ocr_span', 'additional')}
    for candidate in candidates:
        if candidate.kind in labels:
            labels[candidate.kind].append(1.0 if normalize_answer(candidate.text) in golds else 0.0)
    for kind in SPECIAL_KINDS:
        labels[kind] = [1.0 if kind in golds else 0.0]
    return labels


def loss(pred: Prediction, gold_answers: Sequence[str], candidates: Sequence[AnswerCandidate] = None) -> LossResult:
    """
    Summed BCE over the scored spans, the scored additional texts and the
    three special scalars. A sample whose gold matches no candidate keeps
    only the (all-negative) special terms and reports ``reachable=False``.
    """
    if not gold_answers:
        raise ValidationError("loss needs at least one gold answer")
    candidates = pred.candidates if candidates is None else candidates
    labels = answer_labels(candidates, gold_answers)
    dtype = pred.p_yes.dtype

    special_probs = torch.stack([pred.p_yes, pred.p_no, pred.p_unanswerable])
    special_labels = torch.tensor([labels[k][0] for k in SPECIAL_KINDS], dtype=dtype)
    reachable = (any(special_labels.tolist())
                 or (pred.p_ocr.numel() > 0 and any(labels['ocr_span']))
                 or (pred.p_add.numel() > 0 and any(labels['additional'])))
    if not reachable:
        return LossResult(loss=_bce(special_probs, special_labels), reachable=False, labels=labels)

    total = _bce(special_probs, special_labels)
    if pred.p_ocr.numel():
        total = total + _bce(pred.p_ocr, torch.tensor(labels['ocr_span'], dtype=dtype))
    if pred.p_add.numel():
        total = total + _bce(pred.p_add, torch.tensor(labels['additional'], dtype=dtype))
    return LossResult(loss=total, reachable=True, labels=labels)


class AnswerHead(nn.Module):
    """Scores every candidate pool from the question vector and candidate vectors."""

    def __init__(self, object_dim: int, question_dim: int, answer_dim: int,
                 candidate_inputs: str = 'both', use_semantic_reasoning: bool = True):
        super().__init__()
        self.params = MatchParams(object_dim, question_dim, answer_dim)
        self.candidate_inputs = candidate_inputs
        self.use_semantic_reasoning = use_semantic_reasoning

    def represent(self, u: torch.Tensor, u_hat: torch.Tensor, shape: torch.Tensor = None) -> torch.Tensor:
        if self.candidate_inputs == 'ocr_only':
            u_hat = torch.zeros_like(u_hat)
        elif self.candidate_inputs == 'object_only':
            u = torch.zeros_like(u)
        return candidate_repr(u, u_hat, self.params, shape)

    def forward(self, uQ: torch.Tensor, candidates: List[AnswerCandidate],
                ocr_reprs: torch.Tensor, additional_reprs: torch.Tensor) -> Prediction:
        empty = uQ.new_zeros(0)
        p_ocr = match_ocr(uQ, ocr_reprs, self.params) if ocr_reprs.shape[0] else empty
        if self.use_semantic_reasoning and additional_reprs.shape[0]:
            p_add = reason_additional(uQ, p_ocr, ocr_reprs, additional_reprs, self.params)
        else:
            p_add = empty
        heads = special_heads(uQ, ocr_reprs, self.params)
        pred = Prediction(candidates=list(candidates), p_ocr=p_ocr, p_add=p_add,
                          p_yes=heads['yes'], p_no=heads['no'], p_unanswerable=heads['unanswerable'])
        return select_answer(pred)
