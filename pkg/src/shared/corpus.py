"""
Dataset schema, JSONL loading/writing and the synthetic scene generator.

One JSONL line holds one question about one image:

    {"sample_id": str, "image_width": num, "image_height": num,
     "question": str, "answers": [str],
     "ocr": [{"text": str, "quad": [x1, y1, x2, y2, x3, y3, x4, y4]}],
     "objects": [{"name": str, "attributes": [str], "quad": [...]}],
     "dictionary": [str]}            # optional, dictionary mode only
"""

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import ValidationError
from .utils import get_logger

logger = get_logger('corpus')

SPLITS = ('train', 'dev', 'test')


@dataclass(frozen=True)
class Quad:
    """Four corners, clockwise from top-left, in pixels."""

    x1: float
    y1: float
    x2: float
    y2: float
    x3: float
    y3: float
    x4: float
    y4: float

    @classmethod
    def from_list(cls, values) -> 'Quad':
        if not isinstance(values, (list, tuple)) or len(values) != 8:
            raise ValidationError("quad must be a list of 8 numbers")
        coords = []
        for value in values:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(f"quad coordinate {value!r} is not a number")
            if not math.isfinite(value):
                raise ValidationError(f"quad coordinate {value!r} is not finite")
            coords.append(float(value))
        return cls(*coords)

    @classmethod
    def from_box(cls, left: float, top: float, right: float, bottom: float) -> 'Quad':
        return cls(left, top, right, top, right, bottom, left, bottom)

    def to_list(self) -> List[float]:
        return [self.x1, self.y1, self.x2, self.y2, self.x3, self.y3, self.x4, self.y4]

    @property
    def xs(self) -> Tuple[float, ...]:
        return (self.x1, self.x2, self.x3, self.x4)

    @property
    def ys(self) -> Tuple[float, ...]:
        return (self.y1, self.y2, self.y3, self.y4)

    def center(self) -> Tuple[float, float]:
        return sum(self.xs) / 4.0, sum(self.ys) / 4.0

    def height(self) -> float:
        return max(self.ys) - min(self.ys)

    def clamp(self, width: float, height: float) -> Tuple['Quad', bool]:
        """Clamp every corner into [0, width] x [0, height]; report whether anything moved."""
        coords = self.to_list()
        clamped = [min(max(v, 0.0), width if i % 2 == 0 else height) for i, v in enumerate(coords)]
        return Quad(*clamped), clamped != coords


@dataclass(frozen=True)
class OcrToken:
    text: str
    quad: Quad


@dataclass(frozen=True)
class SceneObject:
    name: str
    attributes: Tuple[str, ...]
    quad: Quad


@dataclass(frozen=True)
class Sample:
    sample_id: str
    image_width: float
    image_height: float
    question: str
    gold_answers: Tuple[str, ...]
    ocr_tokens: Tuple[OcrToken, ...]
    objects: Tuple[SceneObject, ...]
    dictionary: Optional[Tuple[str, ...]] = None


@dataclass
class LoadReport:
    """Record accounting for one load; loaded + rejected == lines read."""

    lines: int = 0
    loaded: int = 0
    warned: int = 0
    rejected: int = 0
    clamped_quads: int = 0
    errors: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class Dataset:
    name: str
    samples: Tuple[Sample, ...]
    split: str = 'train'
    report: Optional[LoadReport] = field(default=None, compare=False)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def ids(self) -> List[str]:
        return [s.sample_id for s in self.samples]


def _require(record: dict, key: str, kind, line: int):
    if key not in record:
        raise ValidationError("missing required key", line=line, field=key)
    value = record[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ValidationError(f"expected a finite number, got {value!r}", line=line, field=key)
        return float(value)
    if not isinstance(value, kind):
        raise ValidationError(f"expected {kind.__name__}, got {type(value).__name__}", line=line, field=key)
    return value


def _string_list(values, line: int, field_name: str, non_empty: bool = False) -> Tuple[str, ...]:
    if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
        raise ValidationError("expected a list of strings", line=line, field=field_name)
    if non_empty and any(not v.strip() for v in values):
        raise ValidationError("entries must be non-empty strings", line=line, field=field_name)
    return tuple(values)


def _list_field(record: dict, key: str, line: int) -> list:
    value = record.get(key, [])
    if not isinstance(value, list):
        raise ValidationError(f"expected a list, got {type(value).__name__}", line=line, field=key)
    return value


def _parse_quad(raw, width: float, height: float, line: int, field_name: str):
    try:
        quad = Quad.from_list(raw)
    except ValidationError as e:
        raise ValidationError(str(e), line=line, field=field_name)
    return quad.clamp(width, height)


def sample_from_record(record: dict, line: int = None, require_answers: bool = True) -> Tuple[Sample, int]:
    """Validate one JSON record; return the sample and the number of clamped quads."""
    if not isinstance(record, dict):
        raise ValidationError("record must be a JSON object", line=line)
    sample_id = _require(record, 'sample_id', str, line)
    width = _require(record, 'image_width', float, line)
    height = _require(record, 'image_height', float, line)
    if width <= 0:
        raise ValidationError(f"must be positive, got {width}", line=line, field='image_width')
    if height <= 0:
        raise ValidationError(f"must be positive, got {height}", line=line, field='image_height')
    question = _require(record, 'question', str, line)
    if not question.strip():
        raise ValidationError("must be non-empty", line=line, field='question')
    answers = _string_list(record.get('answers', []), line, 'answers')
    if require_answers and not answers:
        raise ValidationError("at least one gold answer is required", line=line, field='answers')

    clamped = 0
    tokens = []
    for i, raw in enumerate(_list_field(record, 'ocr', line)):
        where = f'ocr[{i}]'
        if not isinstance(raw, dict):
            raise ValidationError("expected an object", line=line, field=where)
        text = raw.get('text')
        if not isinstance(text, str) or not text.strip():
            raise ValidationError("token text must be a non-empty string", line=line, field=f'{where}.text')
        if '\n' in text or '\r' in text:
            raise ValidationError("token text contains a newline", line=line, field=f'{where}.text')
        quad, moved = _parse_quad(raw.get('quad'), width, height, line, f'{where}.quad')
        clamped += int(moved)
        tokens.append(OcrToken(text=text, quad=quad))

    objects = []
    for i, raw in enumerate(_list_field(record, 'objects', line)):
        where = f'objects[{i}]'
        if not isinstance(raw, dict):
            raise ValidationError("expected an object", line=line, field=where)
        name = raw.get('name')
        if not isinstance(name, str) or not name.strip():
            raise ValidationError("object name must be a non-empty string", line=line, field=f'{where}.name')
        attributes = _string_list(raw.get('attributes', []), line, f'{where}.attributes', non_empty=True)
        quad, moved = _parse_quad(raw.get('quad'), width, height, line, f'{where}.quad')
        clamped += int(moved)
        objects.append(SceneObject(name=name, attributes=attributes, quad=quad))

    dictionary = None
    if record.get('dictionary') is not None:
        dictionary = _string_list(record['dictionary'], line, 'dictionary', non_empty=True)

    sample = Sample(
        sample_id=sample_id,
        image_width=width,
        image_height=height,
        question=question,
        gold_answers=answers,
        ocr_tokens=tuple(tokens),
        objects=tuple(objects),
        dictionary=dictionary,
    )
    return sample, clamped


def sample_to_record(sample: Sample) -> dict:
    record = {
        'sample_id': sample.sample_id,
        'image_width': sample.image_width,
        'image_height': sample.image_height,
        'question': sample.question,
        'answers': list(sample.gold_answers),
        'ocr': [{'text': t.text, 'quad': t.quad.to_list()} for t in sample.ocr_tokens],
        'objects': [
            {'name': o.name, 'attributes': list(o.attributes), 'quad': o.quad.to_list()}
            for o in sample.objects
        ],
    }
    if sample.dictionary is not None:
        record['dictionary'] = list(sample.dictionary)
    return record


def load_dataset(path: str, split: str = 'train', strict: bool = True, name: str = None) -> Dataset:
    """
    Load a JSONL dataset file.

    Args:
        path (str): JSONL file, one sample per line (blank lines are skipped)
        split (str): train, dev or test; test samples may omit gold answers
        strict (bool): raise on the first bad record instead of rejecting it

    Returns:
        Dataset: samples in file order, with a LoadReport attached

    Raises:
        ValidationError: malformed record or duplicate sample_id (strict mode),
            unknown split, or missing file
    """
    if split not in SPLITS:
        raise ValidationError(f"Unknown split {split!r}; expected one of {SPLITS}")
    report = LoadReport()
    samples = []
    seen = set()
    try:
        f = open(path, 'rb')
    except FileNotFoundError:
        raise ValidationError(f"Dataset file not found: {path}")

    with f:
        for line_no, raw_line in enumerate(f, start=1):
            if not raw_line.strip():
                continue
            report.lines += 1
            try:
                try:
                    line = raw_line.decode('utf-8')
                except UnicodeDecodeError as e:
                    raise ValidationError(f"not valid UTF-8 at byte {e.start}", line=line_no)
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise ValidationError(f"invalid JSON: {e.msg}", line=line_no)
                sample, clamped = sample_from_record(record, line=line_no,
                                                     require_answers=split != 'test')
                if sample.sample_id in seen:
                    raise ValidationError(f"duplicate sample_id {sample.sample_id!r}",
                                          line=line_no, field='sample_id')
            except ValidationError as e:
                if strict:
                    raise
                report.rejected += 1
                report.errors.append(str(e))
                logger.warning(f"⚠️ Rejected record: {e}")
                continue

            seen.add(sample.sample_id)
            samples.append(sample)
            report.loaded += 1
            if clamped:
                report.warned += 1
                report.clamped_quads += clamped
                logger.warning(f"⚠️ line {line_no}: clamped {clamped} quad(s) of {sample.sample_id} to image bounds")

    logger.info(f"✅ Loaded {report.loaded} samples from {path} "
                f"({report.warned} warned, {report.rejected} rejected)")
    return Dataset(name=name or path, samples=tuple(samples), split=split, report=report)


def write_dataset(dataset: Dataset, path: str):
    with open(path, 'w', encoding='utf-8') as f:
        for sample in dataset.samples:
            f.write(json.dumps(sample_to_record(sample), ensure_ascii=False) + '\n')


def split_dataset(dataset: Dataset, dev_fraction: float) -> Tuple[Dataset, Dataset]:
    """Deterministic head/tail split: the last ``dev_fraction`` of samples become dev."""
    n_dev = int(round(len(dataset.samples) * dev_fraction))
    cut = len(dataset.samples) - n_dev
    train = Dataset(name=f'{dataset.name}:train', samples=dataset.samples[:cut], split='train')
    dev = Dataset(name=f'{dataset.name}:dev', samples=dataset.samples[cut:], split='dev')
    return train, dev


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

CANVAS = 1000.0
FAMILIES = ('a', 'b', 'c', 'd')
OBJECT_NAMES = ('bus', 'car', 'bottle', 'shirt', 'door', 'truck', 'board', 'cup',
                'box', 'window', 'bag', 'poster')
ATTRIBUTES = ('red', 'blue', 'green', 'white', 'black', 'yellow', 'large', 'small')
UNANSWERABLE_QUESTIONS = (
    'what is the phone number on the receipt',
    'what is written on the back of the card',
)
_SYLLABLES = ('ka', 'lo', 'mi', 'ne', 'ru', 'sa', 'to', 'vi', 'ze', 'po', 'da', 'fu', 'gi', 'ho', 'ju')
# distinct 2- and 3-syllable words
MAX_SYNTHETIC_VOCAB = len(_SYLLABLES) ** 2 + len(_SYLLABLES) ** 3


@dataclass(frozen=True)
class SyntheticConfig:
    num_samples: int = 200
    vocab_size: int = 50
    seed: int = 0
    dictionary_size: int = 0


def _synthetic_vocabulary(rng: np.random.Generator, size: int) -> List[str]:
    words = set()
    while len(words) < size:
        n = int(rng.integers(2, 4))
        words.add(''.join(_SYLLABLES[int(i)] for i in rng.integers(0, len(_SYLLABLES), size=n)))
    ordered = sorted(words)
    rng.shuffle(ordered)
    return ordered


def _token_box(rng, left: float, center_y: float) -> Quad:
    width = float(rng.uniform(60, 110))
    height = float(rng.uniform(28, 36))
    return Quad.from_box(left, center_y - height / 2, left + width, center_y + height / 2)


def _overlaps(quad: Quad, others: List[Quad], margin: float = 10.0) -> bool:
    for other in others:
        if (min(quad.xs) < max(other.xs) + margin and max(quad.xs) + margin > min(other.xs)
                and min(quad.ys) < max(other.ys) + margin and max(quad.ys) + margin > min(other.ys)):
            return True
    return False


def _scatter_tokens(rng, words: List[str], taken: List[Quad], forbidden: List[Quad]) -> List[OcrToken]:
    tokens = []
    for word in words:
        for _ in range(200):
            quad = _token_box(rng, float(rng.uniform(10, 860)), float(rng.uniform(40, 960)))
            if not _overlaps(quad, taken) and not _overlaps(quad, forbidden, margin=0.0):
                break
        else:
            return []
        taken.append(quad)
        tokens.append(OcrToken(text=word, quad=quad))
    return tokens


def _scatter_objects(rng, names: List[str], taken: List[Quad]) -> List[SceneObject]:
    objects = []
    for name in names:
        for _ in range(200):
            width, height = float(rng.uniform(120, 260)), float(rng.uniform(120, 260))
            left, top = float(rng.uniform(0, CANVAS - width)), float(rng.uniform(0, CANVAS - height))
            quad = Quad.from_box(left, top, left + width, top + height)
            if not _overlaps(quad, taken, margin=30.0):
                break
        else:
            return []
        taken.append(quad)
        n_attr = int(rng.integers(0, 2))
        attrs = tuple(str(a) for a in rng.choice(ATTRIBUTES, size=n_attr, replace=False))
        objects.append(SceneObject(name=name, attributes=attrs, quad=quad))
    return objects


def _nearest_token(obj: SceneObject, tokens: List[OcrToken]) -> Tuple[int, float]:
    """Index of the token whose center is nearest the object's center, and the runner-up gap."""
    ox, oy = obj.quad.center()
    dists = []
    for token in tokens:
        tx, ty = token.quad.center()
        dists.append(math.hypot(tx - ox, ty - oy))
    order = sorted(range(len(dists)), key=lambda i: (dists[i], i))
    gap = dists[order[1]] - dists[order[0]] if len(order) > 1 else float('inf')
    return order[0], gap


def _family_a(rng, vocab) -> Optional[Tuple[str, List[str], List[OcrToken], List[SceneObject]]]:
    """'what does the sign say': the answer is the 1-2 token span printed on the sign."""
    n_sign = int(rng.integers(1, 3))
    n_other = int(rng.integers(max(1, 3 - n_sign), 8 - n_sign + 1))
    words = [str(w) for w in rng.choice(vocab, size=n_sign + n_other, replace=False)]
    sign_words, other_words = words[:n_sign], words[n_sign:]

    width = 130.0 * n_sign + 60
    height = float(rng.uniform(90, 140))
    left, top = float(rng.uniform(0, CANVAS - width)), float(rng.uniform(0, CANVAS - height))
    sign_quad = Quad.from_box(left, top, left + width, top + height)
    sign = SceneObject(name='sign', attributes=(), quad=sign_quad)

    cy = top + height / 2
    sign_tokens, taken = [], []
    for i, word in enumerate(sign_words):
        quad = Quad.from_box(left + 30 + 130 * i, cy - 16, left + 30 + 130 * i + 100, cy + 16)
        taken.append(quad)
        sign_tokens.append(OcrToken(text=word, quad=quad))

    n_extra = int(rng.integers(0, 3))
    extra_names = [str(n) for n in rng.choice(OBJECT_NAMES, size=n_extra, replace=False)]
    objects = [sign] + _scatter_objects(rng, extra_names, [sign_quad])
    if len(objects) != 1 + n_extra:
        return None
    others = _scatter_tokens(rng, other_words, taken, [sign_quad])
    if not others:
        return None
    tokens = sign_tokens + others
    order = rng.permutation(len(tokens))
    tokens = [tokens[int(i)] for i in order]
    return 'what does the sign say', [' '.join(sign_words)], tokens, objects


def _family_b(rng, vocab):
    """'what word is on the <object>': the token nearest the object's center."""
    n_objects = int(rng.integers(1, 5))
    names = [str(n) for n in rng.choice(OBJECT_NAMES, size=n_objects, replace=False)]
    objects = _scatter_objects(rng, names, [])
    if len(objects) != n_objects:
        return None
    n_tokens = int(rng.integers(3, 9))
    words = [str(w) for w in rng.choice(vocab, size=n_tokens, replace=False)]
    tokens = _scatter_tokens(rng, words, [], [])
    if not tokens:
        return None
    target = objects[int(rng.integers(0, n_objects))]
    index, gap = _nearest_token(target, tokens)
    if gap < 25.0:
        return None
    return f'what word is on the {target.name}', [tokens[index].text], tokens, objects


def _family_c(rng, vocab):
    """'is the word <w> written here': yes iff w is one of the OCR tokens."""
    n_tokens = int(rng.integers(3, 9))
    words = [str(w) for w in rng.choice(vocab, size=n_tokens + 1, replace=False)]
    tokens = _scatter_tokens(rng, words[:n_tokens], [], [])
    if not tokens:
        return None
    names = [str(n) for n in rng.choice(OBJECT_NAMES, size=int(rng.integers(1, 5)), replace=False)]
    objects = _scatter_objects(rng, names, [t.quad for t in tokens])
    if len(objects) != len(names):
        return None
    if rng.random() < 0.5:
        asked, answer = words[int(rng.integers(0, n_tokens))], 'yes'
    else:
        asked, answer = words[n_tokens], 'no'
    return f'is the word {asked} written here', [answer], tokens, objects


def _family_d(rng, vocab):
    """Questions the scene cannot answer."""
    n_tokens = int(rng.integers(3, 9))
    words = [str(w) for w in rng.choice(vocab, size=n_tokens, replace=False)]
    tokens = _scatter_tokens(rng, words, [], [])
    if not tokens:
        return None
    names = [str(n) for n in rng.choice(OBJECT_NAMES, size=int(rng.integers(1, 5)), replace=False)]
    objects = _scatter_objects(rng, names, [t.quad for t in tokens])
    if len(objects) != len(names):
        return None
    question = UNANSWERABLE_QUESTIONS[int(rng.integers(0, len(UNANSWERABLE_QUESTIONS)))]
    return question, ['unanswerable'], tokens, objects


_FAMILY_BUILDERS = {'a': _family_a, 'b': _family_b, 'c': _family_c, 'd': _family_d}


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """
    Generate a deterministic desk-scale corpus whose gold answers are known.

    Families rotate a, b, c, d by sample index. Every sample is checked to have
    its gold answer among its own answer candidates; scenes that fail the check
    (or crowd the canvas) are redrawn from the same seeded generator.
    """
    # textprep imports the schema types from this module
    from .textprep import answer_is_reachable

    if config.num_samples < 1:
        raise ValidationError(f"num_samples must be >= 1, got {config.num_samples}", field='num_samples')
    if config.vocab_size < 10:
        raise ValidationError(f"vocab_size must be >= 10, got {config.vocab_size}", field='vocab_size')
    if config.vocab_size > MAX_SYNTHETIC_VOCAB:
        raise ValidationError(f"vocab_size must be <= {MAX_SYNTHETIC_VOCAB}, got {config.vocab_size}",
                              field='vocab_size')
    if config.dictionary_size < 0:
        raise ValidationError("dictionary_size must be >= 0", field='dictionary_size')

    rng = np.random.default_rng(config.seed)
    vocab = _synthetic_vocabulary(rng, config.vocab_size)
    samples = []
    for i in range(config.num_samples):
        family = FAMILIES[i % len(FAMILIES)]
        for _ in range(1000):
            built = _FAMILY_BUILDERS[family](rng, vocab)
            if built is None:
                continue
            question, answers, tokens, objects = built
            dictionary = None
            if config.dictionary_size:
                pool = [w for w in vocab if w not in answers]
                n_distract = max(0, min(config.dictionary_size - len(answers), len(pool)))
                distractors = [str(w) for w in rng.choice(pool, size=n_distract, replace=False)]
                dictionary = tuple(sorted(set(distractors) | set(answers)))
            sample = Sample(
                sample_id=f'{family}-{config.seed}-{i:05d}',
                image_width=CANVAS,
                image_height=CANVAS,
                question=question,
                gold_answers=tuple(answers),
                ocr_tokens=tuple(tokens),
                objects=tuple(objects),
                dictionary=dictionary,
            )
            if answer_is_reachable(sample):
                samples.append(sample)
                break
        else:
            raise ValidationError(f"could not place a consistent scene for sample {i} (family {family})")

    return Dataset(name=f'synthetic-{config.seed}', samples=tuple(samples), split='train')
