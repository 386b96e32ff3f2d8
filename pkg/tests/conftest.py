"""
Pytest configuration and fixtures for the comment benchmark tests.

This module provides:
- Flask test app with run and log directories under tmp_path
- The synthetic three-language corpus, in memory and on disk
- Small hand-built sentences and feature matrices for the heads
- Markers: acceptance, performance, dataset (gated on COMMENTBENCH_NLBSE_DIR)
"""

import os

import numpy as np
import pytest

from app import create_app
from app.models import CommentSentence, Language
from app.services.synthetic import synthetic_corpus, write_synthetic_corpus
from tests.fixtures.corpus_factory import CorpusFactory


def pytest_configure(config):
    config.addinivalue_line('markers', 'acceptance: end-to-end and published-number checks')
    config.addinivalue_line('markers', 'performance: wall-clock sensitive tests')
    config.addinivalue_line('markers', 'dataset: needs the real corpus in COMMENTBENCH_NLBSE_DIR')


def pytest_collection_modifyitems(config, items):
    if os.environ.get('COMMENTBENCH_NLBSE_DIR'):
        return
    skip = pytest.mark.skip(reason='COMMENTBENCH_NLBSE_DIR is not set')
    for item in items:
        if 'dataset' in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def app(tmp_path):
    """Flask application with the testing config."""
    app = create_app('testing')
    app.config.update(RUN_ROOT=str(tmp_path / 'runs'), LOG_DIR=str(tmp_path / 'logs'))
    yield app


@pytest.fixture
def cli_runner(app):
    """Click runner bound to the app's commands; output holds stdout and stderr."""
    return app.test_cli_runner()


@pytest.fixture
def run_root(tmp_path):
    path = tmp_path / 'runs'
    path.mkdir()
    return path


@pytest.fixture(scope='session')
def synthetic_sentences():
    """Separable three-language corpus (default size)."""
    return synthetic_corpus()


@pytest.fixture
def synthetic_corpus_path(tmp_path):
    path = tmp_path / 'synthetic.jsonl'
    write_synthetic_corpus(path)
    return path


@pytest.fixture
def single_label_corpus_path(tmp_path):
    """Synthetic corpus without multi-label sentences."""
    path = tmp_path / 'single_label.jsonl'
    write_synthetic_corpus(path, multi_label_per_language=0)
    return path


@pytest.fixture
def factory():
    return CorpusFactory(seed=0)


@pytest.fixture
def java_sentences():
    """Four hand-written Java sentences, one multi-label."""
    return [
        CommentSentence('j1', Language.JAVA, '// Returns the sum', frozenset([5])),
        CommentSentence('j2', Language.JAVA, '/** @deprecated use add instead */', frozenset([0])),
        CommentSentence('j3', Language.JAVA, 'Example: call sum(a, b)', frozenset([6])),
        CommentSentence('j4', Language.JAVA, 'Returns the sum; see usage below', frozenset([5, 6])),
    ]


@pytest.fixture
def separable_2d():
    """Two well separated Gaussian blobs in 2-D, labels 0/1."""
    rng = np.random.default_rng(3)
    negatives = rng.normal(loc=(-2.0, -2.0), scale=0.4, size=(20, 2))
    positives = rng.normal(loc=(2.0, 2.0), scale=0.4, size=(20, 2))
    X = np.vstack([negatives, positives])
    y = np.array([0] * 20 + [1] * 20)
    return X, y
