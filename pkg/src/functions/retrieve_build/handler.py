import os

from shared.corpus import load_dataset
from shared.errors import ValidationError
from shared.retrieval import (ElasticsearchRetriever, build_index, load_qa_pairs, pairs_from_dataset,
                              write_qa_pairs)
from shared.utils import error_response, get_logger, http_response, load_config

logger = get_logger('retrieve_build')


def build_corpus(config, data: str = None, qa_pairs: str = None, out: str = None,
                 query: str = None, topk: int = None) -> dict:
    """
    Build the (question, answer) retrieval corpus from a training dataset or
    an existing QA-pair file, index it, and optionally run one query.
    """
    if data:
        pairs = pairs_from_dataset(load_dataset(data, split='train'))
    elif qa_pairs:
        pairs = load_qa_pairs(qa_pairs)
    else:
        raise ValidationError("either 'data' or 'qa_pairs' must be provided")

    if out:
        directory = os.path.dirname(out)
        if directory:
            os.makedirs(directory, exist_ok=True)
        write_qa_pairs(pairs, out)
        logger.info(f"✅ Wrote {len(pairs)} QA pairs to {out}")

    topk = topk or config.retrieval_topk
    if config.retrieval_backend == 'elasticsearch':
        retriever = ElasticsearchRetriever(config.elasticsearch_url, config.elasticsearch_index)
        retriever.index_pairs(pairs)
        summary = {'backend': 'elasticsearch', 'index': config.elasticsearch_index}
    else:
        retriever = build_index(pairs)
        summary = {'backend': 'bm25', 'terms': len(retriever.idf)}

    result = {'pairs': len(pairs), 'out': out, **summary}
    if query:
        result['query'] = query
        result['answers'] = retriever.retrieve(query, topk)
    return result


def handler(event, context=None):
    """Entry point for `signpost retrieve-build`"""
    try:
        overrides = {'retrieval_topk': event.get('topk')}
        config = load_config(event.get('config'), overrides)
        result = build_corpus(config, data=event.get('data'), qa_pairs=event.get('qa_pairs'),
                              out=event.get('out'), query=event.get('query'), topk=event.get('topk'))
        return http_response(200, result)
    except Exception as e:
        return error_response(e, 'retrieve_build handler')
