"""
Turns raw OCR tokens into model inputs: reading order, OCR context,
positional features, POS/NER feature ids and answer candidates.
"""

import os
import re
import string
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np
from nltk.tag import RegexpTagger, UnigramTagger

from .corpus import OcrToken, Quad, Sample
from .errors import ValidationError
from .utils import normalize_answer

RESOURCE_PATH = os.path.join(os.path.dirname(__file__), 'resources', 'word_classes.txt')

POS_BUCKETS = (
    'noun-like', 'verb-like', 'adjective-like', 'adverb-like', 'pronoun', 'determiner',
    'preposition', 'conjunction', 'numeral', 'punctuation', 'symbol', 'other',
)
NER_BUCKETS = (
    'none', 'number', 'capitalized', 'all-caps', 'date-like', 'money-like', 'unit-like', 'mixed-alnum',
)
POS_IDS = {name: i for i, name in enumerate(POS_BUCKETS)}
NER_IDS = {name: i for i, name in enumerate(NER_BUCKETS)}

LINE_THRESHOLD = 0.5
SPECIAL_KINDS = ('yes', 'no', 'unanswerable')
ZERO_POSITION = (0.0,) * 8

_PUNCT = re.escape(string.punctuation)
_EDGE_RE = re.compile(rf'^([{_PUNCT}]*)(.*?)([{_PUNCT}]*)$', re.DOTALL)


@dataclass(frozen=True)
class ReadingOrder:
    order: Tuple[int, ...]
    line_ids: Tuple[int, ...]

    def position_of(self) -> Dict[int, int]:
        return {token: pos for pos, token in enumerate(self.order)}


@dataclass(frozen=True)
class TokenFeatureIds:
    pos_id: int
    ner_id: int


@dataclass(frozen=True)
class OcrContext:
    """The reading-ordered passage C fed to the encoders."""

    words: Tuple[str, ...]
    positional: Tuple[Tuple[float, ...], ...]
    token_indices: Tuple[int, ...]
    line_ids: Tuple[int, ...]


@dataclass(frozen=True)
class AnswerCandidate:
    kind: str
    text: str
    token_indices: Tuple[int, ...] = ()
    positional: Tuple[float, ...] = ZERO_POSITION
    context_positions: Tuple[int, ...] = ()
    crosses_line: bool = False

    @property
    def pool(self) -> str:
        return 'special' if self.kind in SPECIAL_KINDS else self.kind


@dataclass(frozen=True)
class PhraseContext:
    """Several short texts laid end to end, with the positions each one covers."""

    words: Tuple[str, ...]
    spans: Tuple[Tuple[int, ...], ...] = field(default=())


def tokenize(text: str) -> List[str]:
    """Whitespace split, then leading/trailing punctuation become separate tokens."""
    tokens = []
    for chunk in text.split():
        lead, core, trail = _EDGE_RE.match(chunk).groups()
        if not core:
            tokens.append(chunk)
            continue
        tokens.extend(lead)
        tokens.append(core)
        tokens.extend(trail)
    return tokens


def compute_reading_order(tokens: Sequence[OcrToken], image_width: float = None,
                          image_height: float = None) -> ReadingOrder:
    """
    Order tokens left to right, top to bottom.

    Tokens are visited by center-y; a token joins the current line when its
    center-y lies within 0.5 x median token height of the line's running mean,
    otherwise it opens a new line. Lines are ordered by mean center-y and
    tokens within a line by center-x; ties fall back to the original index.
    """
    if not tokens:
        return ReadingOrder(order=(), line_ids=())
    centers = [t.quad.center() for t in tokens]
    threshold = LINE_THRESHOLD * float(np.median([t.quad.height() for t in tokens]))

    lines = []
    for index in sorted(range(len(tokens)), key=lambda i: (centers[i][1], i)):
        cy = centers[index][1]
        if lines and abs(cy - lines[-1]['mean']) <= threshold:
            line = lines[-1]
            line['members'].append(index)
            line['mean'] += (cy - line['mean']) / len(line['members'])
        else:
            lines.append({'members': [index], 'mean': cy})

    lines.sort(key=lambda line: (line['mean'], min(line['members'])))
    order, line_ids = [], []
    for line_id, line in enumerate(lines):
        for index in sorted(line['members'], key=lambda i: (centers[i][0], i)):
            order.append(index)
            line_ids.append(line_id)
    return ReadingOrder(order=tuple(order), line_ids=tuple(line_ids))


def positional_features(quad: Quad, image_width: float, image_height: float) -> Tuple[float, ...]:
    """[x1/W, y1/H, ..., x4/W, y4/H], each clamped to [0, 1]."""
    if image_width <= 0 or image_height <= 0:
        raise ValidationError(f"image dims must be positive, got {image_width}x{image_height}")
    values = []
    for i, v in enumerate(quad.to_list()):
        scale = image_width if i % 2 == 0 else image_height
        values.append(min(max(v / scale, 0.0), 1.0))
    return tuple(values)


def union_quad(quads: Sequence[Quad]) -> Quad:
    xs = [x for q in quads for x in q.xs]
    ys = [y for q in quads for y in q.ys]
    return Quad.from_box(min(xs), min(ys), max(xs), max(ys))


def build_ocr_context(tokens: Sequence[OcrToken], order: ReadingOrder,
                      image_width: float = 1.0, image_height: float = 1.0) -> OcrContext:
    if sorted(order.order) != list(range(len(tokens))):
        raise ValidationError("reading order is not a permutation of the tokens")
    return OcrContext(
        words=tuple(tokens[i].text for i in order.order),
        positional=tuple(positional_features(tokens[i].quad, image_width, image_height) for i in order.order),
        token_indices=tuple(order.order),
        line_ids=tuple(order.line_ids),
    )


def build_phrase_context(texts: Sequence[str]) -> PhraseContext:
    words, spans = [], []
    for text in texts:
        pieces = tokenize(text) or [text]
        spans.append(tuple(range(len(words), len(words) + len(pieces))))
        words.extend(pieces)
    return PhraseContext(words=tuple(words), spans=tuple(spans))


@lru_cache(maxsize=1)
def _word_classes() -> Dict[str, List[str]]:
    sections: Dict[str, List[str]] = {}
    current = None
    with open(RESOURCE_PATH, 'r', encoding='utf-8') as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith('#'):
                continue
            if line.startswith('[') and line.endswith(']'):
                current = line[1:-1]
                sections.setdefault(current, [])
            elif current is not None:
                sections[current].append(line)
    return sections


@lru_cache(maxsize=1)
def _pos_tagger() -> UnigramTagger:
    closed = {}
    for bucket in ('determiner', 'pronoun', 'preposition', 'conjunction', 'adverb',
                   'verb-like', 'adjective-like'):
        tag = 'adverb-like' if bucket == 'adverb' else bucket
        for word in _word_classes().get(bucket, []):
            closed.setdefault(word, tag)
    patterns = [
        (r'^[+-]?\d+([.,:/]\d+)*(st|nd|rd|th)?$', 'numeral'),
        (r'^[.,;:!?\'"()\[\]{}\-]+$', 'punctuation'),
        (r'^[^\w\s]+$', 'symbol'),
        (r'^[^\W\d_]+ly$', 'adverb-like'),
        (r'^[^\W\d_]+(ing|ed|ize|ise)$', 'verb-like'),
        (r'^[^\W\d_]+(ous|ful|able|ible|ive|less|ish|al|ic)$', 'adjective-like'),
        (r'^[^\W\d_]+$', 'noun-like'),
        (r'.*', 'other'),
    ]
    return UnigramTagger(model=closed, backoff=RegexpTagger(patterns))


_MONEY_RE = re.compile(r'^([$€£¥][\d.,]+|[\d.,]+[$€£¥]|[\d.,]+(usd|eur|gbp))$', re.IGNORECASE)
_DATE_RE = re.compile(r'^(\d{1,4}[/.-]\d{1,2}([/.-]\d{1,4})?|\d{1,2}:\d{2})$')
_NUMBER_RE = re.compile(r'^[+-]?\d+([.,]\d+)*$')


def _ner_bucket(word: str) -> str:
    lowered = word.lower()
    if _MONEY_RE.match(word):
        return 'money-like'
    if _DATE_RE.match(word) or lowered in _word_classes().get('month', []):
        return 'date-like'
    units = _word_classes().get('unit', [])
    unit_match = re.match(r'^[+-]?\d+([.,]\d+)?(\D+)$', lowered)
    if unit_match and unit_match.group(2) in units:
        return 'unit-like'
    if _NUMBER_RE.match(word):
        return 'number'
    has_alpha = any(c.isalpha() for c in word)
    if has_alpha and any(c.isdigit() for c in word):
        return 'mixed-alnum'
    if has_alpha and len(word) > 1 and word.isupper():
        return 'all-caps'
    if word[:1].isupper():
        return 'capitalized'
    return 'none'


def pos_ner_ids(word: str, context: Sequence[str] = None) -> TokenFeatureIds:
    """
    Coarse POS (12 buckets) and NER (8 buckets) ids for one word.

    POS: closed-class word lists first, then character/suffix patterns.
    NER: money, date, unit, number, mixed-alnum, all-caps, capitalized, none,
    first match wins. ``context`` is accepted for API symmetry; the rules are
    context-free.
    """
    if not word:
        raise ValidationError("cannot tag an empty word")
    tag = _pos_tagger().tag([word.lower()])[0][1]
    return TokenFeatureIds(pos_id=POS_IDS[tag], ner_id=NER_IDS[_ner_bucket(word)])


def special_candidates() -> List[AnswerCandidate]:
    return [AnswerCandidate(kind=kind, text=kind) for kind in SPECIAL_KINDS]


def generate_candidates(sample: Sample, order: ReadingOrder, additional_texts: Sequence[str] = (),
                        max_span_tokens: int = 2) -> List[AnswerCandidate]:
    """
    All answer candidates of a sample, in pool order.

    1-token spans (reading order), then 2-token spans of reading-order
    neighbours (line breaks do not block adjacency; such spans are flagged),
    then deduplicated additional texts, then yes / no / unanswerable.
    """
    tokens = sample.ocr_tokens
    if sorted(order.order) != list(range(len(tokens))):
        raise ValidationError("reading order is not a permutation of the tokens")
    W, H = sample.image_width, sample.image_height

    candidates = []
    for pos, index in enumerate(order.order):
        candidates.append(AnswerCandidate(
            kind='ocr_span',
            text=tokens[index].text,
            token_indices=(index,),
            positional=positional_features(tokens[index].quad, W, H),
            context_positions=(pos,),
        ))
    if max_span_tokens >= 2:
        for pos in range(len(order.order) - 1):
            first, second = order.order[pos], order.order[pos + 1]
            candidates.append(AnswerCandidate(
                kind='ocr_span',
                text=f'{tokens[first].text} {tokens[second].text}',
                token_indices=(first, second),
                positional=positional_features(union_quad([tokens[first].quad, tokens[second].quad]), W, H),
                context_positions=(pos, pos + 1),
                crosses_line=order.line_ids[pos] != order.line_ids[pos + 1],
            ))

    seen = set()
    for text in additional_texts:
        key = normalize_answer(text)
        if not key or key in seen:
            continue
        seen.add(key)
        candidates.append(AnswerCandidate(kind='additional', text=key))

    return candidates + special_candidates()


def dictionary_context(sample: Sample) -> PhraseContext:
    if sample.dictionary is None:
        raise ValidationError(f"sample {sample.sample_id} has no dictionary", field='dictionary')
    return build_phrase_context(sample.dictionary)


def dictionary_mode_candidates(sample: Sample) -> List[AnswerCandidate]:
    """One zero-positioned span candidate per dictionary entry, then the specials."""
    context = dictionary_context(sample)
    candidates = [
        AnswerCandidate(kind='ocr_span', text=entry, context_positions=span)
        for entry, span in zip(sample.dictionary, context.spans)
    ]
    return candidates + special_candidates()


def answer_is_reachable(sample: Sample, max_span_tokens: int = 2) -> bool:
    """True when some candidate's normalized text equals a normalized gold answer."""
    golds = {normalize_answer(a) for a in sample.gold_answers}
    order = compute_reading_order(sample.ocr_tokens, sample.image_width, sample.image_height)
    candidates = generate_candidates(sample, order, (), max_span_tokens=max_span_tokens)
    if sample.dictionary is not None:
        candidates += dictionary_mode_candidates(sample)
    return any(normalize_answer(c.text) in golds for c in candidates)
