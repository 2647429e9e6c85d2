"""
Additional-candidate retrieval over (question, answer) pairs.

The embedded backend is a BM25 index (k1 = 1.2, b = 0.75, Lucene idf);
the Elasticsearch backend sends the same query to a live cluster.
"""

import json
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
import requests
from rank_bm25 import BM25Okapi

from .errors import RetrievalError, ValidationError
from .textprep import tokenize
from .utils import RunConfig, batch_items, get_logger, normalize_answer

logger = get_logger('retrieval')

K1 = 1.2
B = 0.75
DEFAULT_TOPK = 10


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str
    source_id: Optional[str] = None

    def __post_init__(self):
        if not self.question or not self.question.strip():
            raise ValidationError("QA pair question must be non-empty", field='question')
        if not self.answer or not self.answer.strip():
            raise ValidationError("QA pair answer must be non-empty", field='answer')

    def to_record(self) -> dict:
        record = {'question': self.question, 'answer': self.answer}
        if self.source_id is not None:
            record['source_id'] = self.source_id
        return record


def query_tokens(text: str) -> List[str]:
    """Lowercased tokens with punctuation-only pieces dropped."""
    return [t for t in tokenize(text.lower()) if any(c.isalnum() for c in t)]


class RetrievalIndex(BM25Okapi):
    """BM25Okapi with the always-positive idf log(1 + (N - df + 0.5) / (df + 0.5))."""

    def __init__(self, pairs: Sequence[QAPair], k1: float = K1, b: float = B):
        if not pairs:
            raise ValidationError("cannot build a retrieval index from an empty corpus")
        self.pairs = tuple(pairs)
        tokenized = [query_tokens(p.question) for p in self.pairs]
        if not any(tokenized):
            raise ValidationError("no indexable tokens in any QA-pair question")
        super().__init__(tokenized, k1=k1, b=b)

    def _calc_idf(self, nd):
        self.document_frequencies = dict(nd)
        self.idf = {
            word: math.log(1.0 + (self.corpus_size - df + 0.5) / (df + 0.5))
            for word, df in nd.items()
        }

    def __len__(self):
        return len(self.pairs)

    def retrieve(self, query: str, k: int = DEFAULT_TOPK, exclude_source: str = None) -> List[str]:
        return retrieve(self, query, k, exclude_source)


def build_index(pairs: Sequence[QAPair]) -> RetrievalIndex:
    index = RetrievalIndex(pairs)
    logger.info(f"📦 built BM25 index over {len(index)} QA pairs ({len(index.idf)} terms)")
    return index


def retrieve(index: RetrievalIndex, query: str, k: int = DEFAULT_TOPK, exclude_source: str = None) -> List[str]:
    """Top-k distinct normalized answers with positive score; ties keep insertion order."""
    if k < 1:
        raise ValidationError(f"k must be positive, got {k}")
    tokens = query_tokens(query)
    if not tokens:
        return []
    scores = np.asarray(index.get_scores(tokens), dtype=float)
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    answers, seen = [], set()
    for i in ranked:
        if scores[i] <= 0:
            break
        pair = index.pairs[i]
        if exclude_source is not None and pair.source_id == exclude_source:
            continue
        answer = normalize_answer(pair.answer)
        if answer in seen:
            continue
        seen.add(answer)
        answers.append(answer)
        if len(answers) == k:
            break
    return answers


class ElasticsearchRetriever:
    """Same contract as the BM25 index, backed by an Elasticsearch cluster over HTTP."""

    def __init__(self, url: str, index: str, timeout: float = 10.0):
        self.url = url.rstrip('/')
        self.index = index
        self.timeout = timeout

    def index_pairs(self, pairs: Iterable[QAPair], batch_size: int = 500) -> int:
        pairs = list(pairs)
        for batch_start, batch in zip(range(0, len(pairs), batch_size), batch_items(pairs, batch_size)):
            lines = []
            for offset, pair in enumerate(batch):
                lines.append(json.dumps({'index': {'_index': self.index, '_id': str(batch_start + offset)}}))
                lines.append(json.dumps({**pair.to_record(), 'position': batch_start + offset}))
            body = '\n'.join(lines) + '\n'
            try:
                response = requests.post(f"{self.url}/_bulk", data=body.encode('utf-8'),
                                         headers={'Content-Type': 'application/x-ndjson'},
                                         timeout=self.timeout)
                response.raise_for_status()
            except requests.exceptions.RequestException as e:
                raise RetrievalError(f"Elasticsearch bulk indexing failed: {e}")
            if response.json().get('errors'):
                raise RetrievalError("Elasticsearch reported item errors during bulk indexing")
        logger.info(f"✅ indexed {len(pairs)} QA pairs into {self.url}/{self.index}")
        return len(pairs)

    def retrieve(self, query: str, k: int = DEFAULT_TOPK, exclude_source: str = None) -> List[str]:
        if k < 1:
            raise ValidationError(f"k must be positive, got {k}")
        if not query_tokens(query):
            return []
        search = {
            'size': 4 * k,
            'query': {'match': {'question': query.lower()}},
            'sort': ['_score', {'position': 'asc'}],
        }
        if exclude_source is not None:
            search['query'] = {'bool': {
                'must': search['query'],
                'must_not': {'term': {'source_id': exclude_source}},
            }}
        try:
            response = requests.post(f"{self.url}/{self.index}/_search", json=search, timeout=self.timeout)
            response.raise_for_status()
            hits = response.json().get('hits', {}).get('hits', [])
        except requests.exceptions.RequestException as e:
            raise RetrievalError(f"Elasticsearch search failed: {e}")
        answers, seen = [], set()
        for hit in hits:
            answer = normalize_answer(hit.get('_source', {}).get('answer', ''))
            if not answer or answer in seen:
                continue
            seen.add(answer)
            answers.append(answer)
            if len(answers) == k:
                break
        return answers


def load_qa_pairs(path: str) -> List[QAPair]:
    pairs = []
    try:
        f = open(path, 'r', encoding='utf-8')
    except OSError as e:
        raise ValidationError(f"cannot read QA pairs {path}: {e}")
    with f:
        for line_no, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ValidationError(f"invalid JSON: {e}", line=line_no)
            if not isinstance(record, dict):
                raise ValidationError("record must be a JSON object", line=line_no)
            try:
                pairs.append(QAPair(question=record.get('question', ''), answer=record.get('answer', ''),
                                    source_id=record.get('source_id')))
            except ValidationError as e:
                raise ValidationError(str(e), line=line_no)
    return pairs


def write_qa_pairs(pairs: Iterable[QAPair], path: str):
    with open(path, 'w', encoding='utf-8') as f:
        for pair in pairs:
            f.write(json.dumps(pair.to_record(), ensure_ascii=False) + '\n')


def pairs_from_dataset(samples) -> List[QAPair]:
    """One pair per (sample, distinct gold answer), tagged with the sample id."""
    pairs = []
    for sample in samples:
        seen = set()
        for answer in sample.gold_answers:
            key = normalize_answer(answer)
            if key and key not in seen:
                seen.add(key)
                pairs.append(QAPair(question=sample.question, answer=answer, source_id=sample.sample_id))
    return pairs


def build_retriever(config: RunConfig, pairs: Sequence[QAPair] = None):
    """The configured backend, or None when retrieval is off."""
    if not config.use_retrieval:
        return None
    if config.retrieval_backend == 'elasticsearch':
        return ElasticsearchRetriever(config.elasticsearch_url, config.elasticsearch_index)
    if pairs is None:
        if not config.qa_pairs_path:
            raise ValidationError("retrieval is on but no QA-pair file is configured", field='qa_pairs_path')
        pairs = load_qa_pairs(config.qa_pairs_path)
    return build_index(pairs)
