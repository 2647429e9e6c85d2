import hashlib
import json
import logging
import os
import re
import string
from dataclasses import asdict, dataclass, fields
from datetime import datetime

from .errors import ConfigError, SignpostError

DEFAULT_CONFIG_PATH = 'config/run.json'
ENV_PREFIX = 'SIGNPOST_'

RELATIONAL_MODES = ('full', 'semantic_only', 'positional_only', 'weighted_sum', 'none')
CANDIDATE_INPUTS = ('both', 'ocr_only', 'object_only')
OOV_MODES = ('hash_bucket', 'zero')
RETRIEVAL_BACKENDS = ('bm25', 'elasticsearch')


@dataclass
class RunConfig:
    """Every hyperparameter of a run, as flat keys.

    Defaults are the desk-scale profile; the optimizer settings are the
    published ones (Adamax, lr 2e-3, batch 16, 30 epochs, no weight decay).
    """

    # embeddings
    word_dim: int = 64
    ctx_dim: int = 64
    oov_mode: str = 'hash_bucket'
    num_hash_buckets: int = 64
    min_word_count: int = 1
    separate_question_table: bool = False
    pretrained_vectors: str = ''
    # encoders
    hidden_size: int = 64
    question_layers: int = 3
    context_layers: int = 2
    attention_size: int = 64
    pos_dim: int = 12
    ner_dim: int = 8
    dropout: float = 0.0
    use_word_attention: bool = True
    use_multilevel_attention: bool = True
    use_self_attention: bool = True
    # relational reasoning
    relational_mode: str = 'full'
    # answer prediction
    answer_dim: int = 64
    candidate_inputs: str = 'both'
    max_span_tokens: int = 2
    use_semantic_reasoning: bool = True
    dictionary_mode: bool = False
    # retrieval
    use_retrieval: bool = False
    retrieval_backend: str = 'bm25'
    retrieval_topk: int = 10
    qa_pairs_path: str = ''
    elasticsearch_url: str = 'http://localhost:9200'
    elasticsearch_index: str = 'qa_pairs'
    # metrics
    anls_tau: float = 0.5
    lowercase: bool = True
    strip_punct: bool = False
    subset_separator: str = '-'
    # optimization
    optimizer: str = 'adamax'
    lr: float = 2e-3
    weight_decay: float = 0.0
    batch_size: int = 16
    epochs: int = 30
    max_grad_norm: float = 0.0
    seed: int = 0
    num_threads: int = 1
    eval_train: bool = True
    dev_fraction: float = 0.2
    # gradient check
    gradcheck_step: float = 1e-5
    gradcheck_tolerance: float = 1e-4
    gradcheck_max_entries: int = 16
    # paths
    train_path: str = ''
    dev_path: str = ''
    output_dir: str = 'runs/latest'

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ('word_dim', 'ctx_dim', 'hidden_size', 'question_layers', 'context_layers',
                     'attention_size', 'answer_dim', 'pos_dim', 'ner_dim', 'num_hash_buckets',
                     'batch_size', 'retrieval_topk', 'num_threads', 'gradcheck_max_entries',
                     'min_word_count'):
            if getattr(self, name) < 1:
                raise ConfigError(f"'{name}' must be positive, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ConfigError(f"'epochs' must be non-negative, got {self.epochs}")
        if self.ctx_dim % 2 or self.hidden_size % 2:
            raise ConfigError("'ctx_dim' and 'hidden_size' must be even (bidirectional halves)")
        if self.lr < 0:
            raise ConfigError(f"'lr' must be non-negative, got {self.lr}")
        if not 0 < self.anls_tau <= 1:
            raise ConfigError(f"'anls_tau' must lie in (0, 1], got {self.anls_tau}")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"'dropout' must lie in [0, 1), got {self.dropout}")
        if not 0 <= self.dev_fraction < 1:
            raise ConfigError(f"'dev_fraction' must lie in [0, 1), got {self.dev_fraction}")
        if self.max_span_tokens not in (1, 2):
            raise ConfigError(f"'max_span_tokens' must be 1 or 2, got {self.max_span_tokens}")
        if self.optimizer != 'adamax':
            raise ConfigError(f"Unknown optimizer: {self.optimizer}")
        for name, allowed in (('relational_mode', RELATIONAL_MODES),
                              ('candidate_inputs', CANDIDATE_INPUTS),
                              ('oov_mode', OOV_MODES),
                              ('retrieval_backend', RETRIEVAL_BACKENDS)):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"'{name}' must be one of {allowed}, got {getattr(self, name)!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> 'RunConfig':
        merged = self.to_dict()
        merged.update(changes)
        return RunConfig.from_dict(merged)

    @classmethod
    def from_dict(cls, values: dict) -> 'RunConfig':
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
        coerced = {key: _coerce(key, value, known[key].type) for key, value in values.items()}
        return cls(**coerced)


# Keys that change parameter shapes or the forward computation.
ARCHITECTURE_KEYS = (
    'word_dim', 'ctx_dim', 'oov_mode', 'num_hash_buckets', 'min_word_count',
    'separate_question_table', 'pretrained_vectors', 'hidden_size', 'question_layers',
    'context_layers', 'attention_size', 'pos_dim', 'ner_dim', 'use_word_attention',
    'use_multilevel_attention', 'use_self_attention', 'relational_mode', 'answer_dim',
    'candidate_inputs', 'max_span_tokens', 'use_semantic_reasoning',
)


def _coerce(key: str, value, annotation):
    """Coerce env-var strings and JSON scalars to the declared field type."""
    kind = annotation if isinstance(annotation, type) else {'int': int, 'float': float,
                                                           'bool': bool, 'str': str}[annotation]
    try:
        if kind is bool:
            if isinstance(value, str):
                lowered = value.strip().lower()
                if lowered in ('1', 'true', 'yes', 'on'):
                    return True
                if lowered in ('0', 'false', 'no', 'off'):
                    return False
                raise ValueError(value)
            return bool(value)
        if kind is int and isinstance(value, float) and not value.is_integer():
            raise ValueError(value)
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"Config key '{key}' expects {kind.__name__}, got {value!r}")


def load_config(path: str = None, overrides: dict = None) -> RunConfig:
    """Load a flat JSON config file, then env overrides, then explicit overrides.

    A missing default file is not an error; a missing explicit file is.
    """
    explicit = path or os.environ.get(f'{ENV_PREFIX}CONFIG')
    values = {}
    target = explicit or DEFAULT_CONFIG_PATH
    try:
        with open(target, 'r') as f:
            values = json.load(f)
    except FileNotFoundError:
        if explicit:
            raise ConfigError(f"Config file not found: {target}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {target} is not valid JSON: {e}")
    if not isinstance(values, dict):
        raise ConfigError(f"Config file {target} must hold a flat JSON object")

    for f in fields(RunConfig):
        env_value = os.environ.get(f'{ENV_PREFIX}{f.name.upper()}')
        if env_value is not None:
            values[f.name] = env_value
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return RunConfig.from_dict(values)


def config_hash(config: RunConfig) -> str:
    """SHA-256 over the architecture keys, canonical JSON."""
    payload = {key: getattr(config, key) for key in ARCHITECTURE_KEYS}
    blob = json.dumps(payload, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(blob.encode('utf-8')).hexdigest()


_PUNCT_RE = re.compile(f"[{re.escape(string.punctuation)}]")


def normalize_answer(text: str, lowercase: bool = True, strip_punct: bool = False) -> str:
    """The one answer normalizer used for labels, retrieval dedup and metrics."""
    if text is None:
        return ''
    if lowercase:
        text = text.lower()
    if strip_punct:
        text = _PUNCT_RE.sub(' ', text)
    return ' '.join(text.split())


def batch_items(items: list, batch_size: int = 16) -> list:
    """Split a list into consecutive batches"""
    return [items[i:i + batch_size] for i in range(0, len(items), batch_size)]


def get_current_timestamp() -> str:
    """Get current timestamp in ISO format"""
    return datetime.now().isoformat()


def format_error_message(error: Exception, context: str = "") -> str:
    """Format error message with context"""
    timestamp = get_current_timestamp()
    return f"[{timestamp}] {context}: {type(error).__name__}: {str(error)}"


_LOGGING_CONFIGURED = False


def get_logger(name: str) -> logging.Logger:
    """Logger with the process-wide Signpost handler attached once."""
    global _LOGGING_CONFIGURED
    if not _LOGGING_CONFIGURED:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(name)s: %(message)s'))
        root = logging.getLogger('signpost')
        root.addHandler(handler)
        root.setLevel(os.environ.get(f'{ENV_PREFIX}LOG_LEVEL', 'INFO').upper())
        root.propagate = False
        _LOGGING_CONFIGURED = True
    return logging.getLogger(f'signpost.{name}')


def http_response(status_code: int, payload) -> dict:
    """Handler return value: status code plus a JSON body."""
    return {
        'statusCode': status_code,
        'body': json.dumps(payload, ensure_ascii=False),
    }


def error_response(error: Exception, where: str) -> dict:
    """400 for errors this package raises about its inputs, 500 for anything else."""
    status = 400 if isinstance(error, SignpostError) else 500
    payload = {'error': type(error).__name__, 'message': str(error), 'where': where}
    diagnostics = getattr(error, 'diagnostics', None)
    if diagnostics:
        payload['diagnostics'] = diagnostics
    get_logger('handlers').error(f"❌ {format_error_message(error, where)}")
    return http_response(status, payload)
