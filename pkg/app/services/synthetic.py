"""Deterministic three-language corpus with separable labels.

Every label owns a private set of marker tokens and every sentence of that
label contains all of them, so the labels are linearly separable on bag-of-
words counts. Shared filler words and comment markers add noise that the
classifiers have to ignore.
"""
import numpy as np

from app.logging_config import get_logger
from app.models import CommentSentence, Language
from app.services.corpus import taxonomy_for, write_corpus

logger = get_logger(__name__)

FILLER_WORDS = ('the', 'this', 'method', 'returns', 'value', 'object', 'when', 'used')
COMMENT_MARKERS = ('', '// ', '# ', '/** ')
TOKENS_PER_LABEL = 4


def label_tokens(language, label):
    """Marker tokens owned by one (language, label)."""
    return [f'{language.value[:2]}{label}k{j}' for j in range(TOKENS_PER_LABEL)]


def _sentence_text(rng, tokens):
    words = list(tokens) + [str(w) for w in rng.choice(FILLER_WORDS, size=2, replace=False)]
    order = rng.permutation(len(words))
    marker = COMMENT_MARKERS[int(rng.integers(len(COMMENT_MARKERS)))]
    text = marker + ' '.join(words[i] for i in order)
    return text + ' */' if marker == '/** ' else text


def synthetic_corpus(sentences_per_label=30, multi_label_per_language=4, seed=0):
    """
    Build the fixture.

    Args:
        sentences_per_label: single-label sentences per (language, label)
        multi_label_per_language: sentences carrying two labels, per language
        seed: seed for filler words, word order and markers

    Returns:
        list of CommentSentence, grouped by language
    """
    rng = np.random.default_rng(seed)
    sentences = []
    for language in Language:
        n_labels = len(taxonomy_for(language))
        for label in range(n_labels):
            for i in range(sentences_per_label):
                sentences.append(CommentSentence(
                    id=f'{language.value}-{label:02d}-{i:03d}',
                    language=language,
                    text=_sentence_text(rng, label_tokens(language, label)),
                    labels=frozenset([label]),
                ))
        for i in range(multi_label_per_language):
            first = i % n_labels
            second = (i + 1) % n_labels
            sentences.append(CommentSentence(
                id=f'{language.value}-multi-{i:03d}',
                language=language,
                text=_sentence_text(rng, label_tokens(language, first) + label_tokens(language, second)),
                labels=frozenset([first, second]),
            ))
    logger.debug(f'Synthetic corpus: {len(sentences)} sentences (seed={seed})')
    return sentences


def write_synthetic_corpus(path, **kwargs):
    sentences = synthetic_corpus(**kwargs)
    write_corpus(sentences, path)
    return sentences
