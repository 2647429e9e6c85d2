"""
Pytest configuration and common fixtures for Signpost tests.

This module provides shared fixtures and configuration for all test modules.
"""

import json
import os
import sys

import pytest

# Add the src directory to the path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '../src'))

from shared.corpus import (OcrToken, Quad, Sample, SceneObject, SyntheticConfig, generate_synthetic,  # noqa: E402
                           load_dataset)
from shared.training import train  # noqa: E402
from shared.utils import load_config  # noqa: E402

TESTS_DIR = os.path.dirname(os.path.abspath(__file__))
REPO_ROOT = os.path.dirname(TESTS_DIR)
FIXTURES_DIR = os.path.join(TESTS_DIR, 'fixtures')


def box(left, top, right, bottom):
    return Quad.from_box(left, top, right, bottom)


def token(text, left, top, right, bottom):
    return OcrToken(text=text, quad=box(left, top, right, bottom))


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES_DIR


@pytest.fixture(scope="session")
def toy_config():
    """Tiny-dimension profile used for gradient checks and fast model tests."""
    return load_config(os.path.join(REPO_ROOT, 'config', 'toy.json'))


@pytest.fixture(scope="session")
def desk_config():
    return load_config(os.path.join(REPO_ROOT, 'config', 'desk.json'))


@pytest.fixture
def street_sign_sample():
    """'No right turn except buses' on a sign, a bus below it."""
    return Sample(
        sample_id='sign-0001',
        image_width=400.0,
        image_height=300.0,
        question='which turn is not allowed',
        gold_answers=('right turn',),
        ocr_tokens=(
            token('turn', 170, 40, 230, 70),
            token('No', 40, 42, 80, 68),
            token('right', 95, 40, 155, 70),
            token('except', 60, 90, 140, 120),
            token('buses', 150, 92, 220, 118),
        ),
        objects=(
            SceneObject(name='sign', attributes=('white',), quad=box(20, 20, 250, 140)),
            SceneObject(name='bus', attributes=('red', 'large'), quad=box(50, 180, 350, 290)),
        ),
    )


@pytest.fixture
def empty_ocr_sample():
    return Sample(
        sample_id='blank-0001',
        image_width=100.0,
        image_height=100.0,
        question='is there any text',
        gold_answers=('no',),
        ocr_tokens=(),
        objects=(SceneObject(name='wall', attributes=(), quad=box(0, 0, 100, 100)),),
    )


@pytest.fixture
def dictionary_sample(street_sign_sample):
    return Sample(
        sample_id='dict-0001',
        image_width=street_sign_sample.image_width,
        image_height=street_sign_sample.image_height,
        question=street_sign_sample.question,
        gold_answers=('buses',),
        ocr_tokens=street_sign_sample.ocr_tokens,
        objects=street_sign_sample.objects,
        dictionary=('buses', 'coca cola', 'stop', 'exit'),
    )


@pytest.fixture(scope="session")
def small_synthetic():
    """Twelve synthetic samples, three per question family."""
    return generate_synthetic(SyntheticConfig(num_samples=12, vocab_size=12, seed=3))


@pytest.fixture
def sample_records():
    """Raw JSONL records as they appear on disk."""
    with open(os.path.join(FIXTURES_DIR, 'samples.jsonl'), 'r', encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]


@pytest.fixture
def write_jsonl(tmp_path):
    """Write a list of dicts to a JSONL file under tmp_path and return its path."""
    def _write(name, records):
        path = tmp_path / name
        with open(path, 'w', encoding='utf-8') as f:
            for record in records:
                f.write((record if isinstance(record, str) else json.dumps(record)) + '\n')
        return str(path)
    return _write


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory, toy_config):
    """A one-epoch toy model trained on the fixture samples, with its output directory."""
    out = str(tmp_path_factory.mktemp('toy_run'))
    data = os.path.join(FIXTURES_DIR, 'samples.jsonl')
    config = toy_config.replace(epochs=1, dev_fraction=0.0, output_dir=out)
    result = train(config, load_dataset(data), output_dir=out)
    return {'dir': out, 'checkpoint': result.best_path, 'data': data, 'config': config}


# Test markers
def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers", "integration: mark test as integration test"
    )
    config.addinivalue_line(
        "markers", "unit: mark test as unit test"
    )
    config.addinivalue_line(
        "markers", "slow: mark test as slow running"
    )


# Test collection hooks
def pytest_collection_modifyitems(config, items):
    """Modify test collection to add default markers."""
    for item in items:
        # Add unit marker to tests that don't have integration marker
        if "integration" not in item.keywords:
            item.add_marker(pytest.mark.unit)

        # Add slow marker to integration tests
        if "integration" in item.keywords:
            item.add_marker(pytest.mark.slow)


@pytest.fixture(autouse=True)
def isolate_environment(monkeypatch):
    """Keep SIGNPOST_* variables from the caller's shell out of the tests."""
    for key in list(os.environ):
        if key.startswith('SIGNPOST_'):
            monkeypatch.delenv(key, raising=False)
    monkeypatch.setenv('SIGNPOST_LOG_LEVEL', 'WARNING')
    yield
