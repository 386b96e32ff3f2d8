"""Contrastive sentence pairs for external SetFit-style fine-tuning."""
import csv

import numpy as np

from app.errors import NoNegativePartner, NoPositivePartner, ParseError
from app.logging_config import get_logger
from app.models import ContrastivePair

logger = get_logger(__name__)


def _label_keys(sentence):
    # Label indices only mean something inside one language's taxonomy.
    return {(sentence.language, label) for label in sentence.labels}


def _overlap_matrix(train):
    keys = sorted({key for sentence in train for key in _label_keys(sentence)},
                  key=lambda k: (k[0].value, k[1]))
    position = {key: i for i, key in enumerate(keys)}
    indicator = np.zeros((len(train), len(keys)), dtype=np.int32)
    for row, sentence in enumerate(train):
        for key in _label_keys(sentence):
            indicator[row, position[key]] = 1
    return (indicator @ indicator.T) > 0


def generate_pairs(train, plan):
    """
    Sample positive and negative pairs.

    Per iteration every sentence anchors one positive pair (partner shares a
    label) and one negative pair (partner shares none); partners are drawn
    uniformly, independently per anchor. The result has exactly
    ``num_iterations * len(train) * 2`` pairs.

    Args:
        train: list of CommentSentence
        plan: PairPlan

    Returns:
        list: ContrastivePair objects, positive before negative per anchor
    """
    if plan.num_iterations == 0 or not train:
        return []

    overlap = _overlap_matrix(train)
    n = len(train)
    not_self = ~np.eye(n, dtype=bool)
    positives = [np.flatnonzero(overlap[i] & not_self[i]) for i in range(n)]
    negatives = [np.flatnonzero(~overlap[i]) for i in range(n)]

    lonely = [train[i].id for i in range(n) if positives[i].size == 0]
    if lonely:
        raise NoPositivePartner(lonely)
    lonely = [train[i].id for i in range(n) if negatives[i].size == 0]
    if lonely:
        raise NoNegativePartner(lonely)

    pairs = []
    for iteration in range(plan.num_iterations):
        # independent stream per iteration keeps iterations parallelizable
        rng = np.random.default_rng([plan.seed, iteration])
        for i, anchor in enumerate(train):
            positive = train[positives[i][rng.integers(positives[i].size)]]
            negative = train[negatives[i][rng.integers(negatives[i].size)]]
            pairs.append(ContrastivePair(anchor.id, positive.id, True))
            pairs.append(ContrastivePair(anchor.id, negative.id, False))

    logger.info(f'Generated {len(pairs)} pairs from {n} sentences x {plan.num_iterations} iterations')
    return pairs


def export_pairs(pairs, path):
    """Write pairs as TSV lines ``a_id<TAB>b_id<TAB>1|0``."""
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, delimiter='\t', lineterminator='\n')
        for pair in pairs:
            writer.writerow([pair.a_id, pair.b_id, 1 if pair.positive else 0])
    return path


def read_pairs(path):
    """Read a pair file written by ``export_pairs``."""
    pairs = []
    with open(path, encoding='utf-8', newline='') as handle:
        for line_no, row in enumerate(csv.reader(handle, delimiter='\t'), start=1):
            if len(row) != 3 or row[2] not in ('0', '1'):
                raise ParseError(f'Line {line_no}: expected "a_id<TAB>b_id<TAB>0|1"', line=line_no)
            pairs.append(ContrastivePair(row[0], row[1], row[2] == '1'))
    return pairs


def plan_size(num_sentences, num_iterations):
    """Number of pairs a plan produces."""
    return num_iterations * num_sentences * 2
