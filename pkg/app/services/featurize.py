"""Sentence featurization: token preprocessing, bag-of-words, dense embeddings."""
import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.errors import DimMismatch, DuplicateId, EmptyVocabulary, MissingEmbedding, ParseError
from app.logging_config import get_logger
from app.models import SparseCountVector

logger = get_logger(__name__)

TokenSequence = Tuple[str, ...]

COMMENT_MARKERS = ('/**', '*/', '//', '#')
_TOKEN_RE = re.compile(r'\w+', re.UNICODE)


def preprocess(text):
    """
    Lower-case a sentence, strip comment markers and split it into tokens.

    Args:
        text: Raw sentence

    Returns:
        tuple: tokens in order; runs of word characters, punctuation dropped
    """
    if not text:
        return ()
    text = text.lower()
    for marker in COMMENT_MARKERS:
        text = text.replace(marker, ' ')
    return tuple(_TOKEN_RE.findall(text))


@dataclass(frozen=True)
class Vocabulary:
    """Token to index mapping built from training documents."""
    index: Mapping[str, int]
    min_df: int = 1

    def __len__(self):
        return len(self.index)

    def __contains__(self, token):
        return token in self.index

    def tokens(self):
        return sorted(self.index, key=self.index.get)

    def to_dict(self):
        return {'min_df': self.min_df, 'tokens': self.tokens()}

    @classmethod
    def from_dict(cls, data):
        return cls(index={token: i for i, token in enumerate(data['tokens'])}, min_df=data['min_df'])


def build_vocabulary(train, min_df=1):
    """
    Build a vocabulary from token sequences.

    Args:
        train: iterable of TokenSequence
        min_df: minimum number of documents a token must appear in

    Returns:
        Vocabulary: tokens ordered by first occurrence
    """
    if min_df < 1:
        raise ValueError(f'min_df must be >= 1, got {min_df}')

    document_frequency = Counter()
    first_seen = {}
    for tokens in train:
        for token in tokens:
            first_seen.setdefault(token, len(first_seen))
        document_frequency.update(set(tokens))

    kept = [token for token in sorted(first_seen, key=first_seen.get) if document_frequency[token] >= min_df]
    if not kept:
        raise EmptyVocabulary(f'No token appears in at least {min_df} documents')

    logger.debug(f'Vocabulary: {len(kept)} of {len(first_seen)} tokens kept (min_df={min_df})')
    return Vocabulary(index={token: i for i, token in enumerate(kept)}, min_df=min_df)


def bow_vector(tokens, vocab):
    """Count in-vocabulary tokens; out-of-vocabulary tokens are dropped."""
    if not len(vocab):
        raise EmptyVocabulary('Cannot vectorize against an empty vocabulary')
    counts = Counter(vocab.index[token] for token in tokens if token in vocab.index)
    indices = tuple(sorted(counts))
    return SparseCountVector(indices=indices, counts=tuple(counts[i] for i in indices), dim=len(vocab))


def count_matrix(vectors: Sequence[SparseCountVector], dim=None):
    """Dense (n, dim) matrix from sparse count vectors."""
    if dim is None:
        dim = vectors[0].dim if vectors else 0
    matrix = np.zeros((len(vectors), dim))
    for row, vector in enumerate(vectors):
        if vector.dim != dim:
            raise DimMismatch(f'Row {row} has dimension {vector.dim}, expected {dim}',
                              expected=dim, actual=vector.dim)
        if vector.nnz:
            matrix[row, list(vector.indices)] = vector.counts
    return matrix


@dataclass(frozen=True)
class EmbeddingTable:
    """Sentence id to dense vector mapping produced by an external encoder."""
    vectors: Mapping[str, np.ndarray]
    dim: int
    provenance: str

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, sentence_id):
        return sentence_id in self.vectors

    def lookup(self, sentence_id):
        """Vector of a sentence; absence is an error, never a substitute."""
        try:
            return self.vectors[sentence_id]
        except KeyError:
            raise MissingEmbedding(sentence_id) from None

    def matrix(self, sentence_ids):
        if not sentence_ids:
            return np.zeros((0, self.dim))
        return np.vstack([self.lookup(sentence_id) for sentence_id in sentence_ids])


def _parse_header(line):
    fields = {}
    for part in line.split(' ', 1):
        key, sep, value = part.partition('=')
        if not sep:
            raise ParseError(f'Line 1: malformed header "{line}"', line=1)
        fields[key] = value
    if 'dim' not in fields or 'provenance' not in fields:
        raise ParseError('Line 1: header must be "dim=<int> provenance=<string>"', line=1)
    try:
        dim = int(fields['dim'])
    except ValueError:
        raise ParseError(f'Line 1: dim "{fields["dim"]}" is not an integer', line=1) from None
    if dim < 1:
        raise ParseError('Line 1: dim must be >= 1', line=1)
    return dim, fields['provenance']


def load_embeddings(path):
    """
    Read an embedding file.

    Format: first line ``dim=<int> provenance=<string>``; every other line
    ``<id>\\t<v1> <v2> ... <vdim>``.

    Args:
        path: File path

    Returns:
        EmbeddingTable
    """
    with open(path, encoding='utf-8', newline='') as handle:
        content = handle.read()
    lines = content.split('\n')
    if lines and lines[-1] == '':
        lines.pop()
    if not lines:
        raise ParseError('Empty embedding file: missing header', line=1)

    dim, provenance = _parse_header(lines[0])
    vectors: Dict[str, np.ndarray] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        sentence_id, tab, values = line.partition('\t')
        if not tab or not sentence_id:
            raise ParseError(f'Line {line_no}: expected "<id>\\t<values>"', line=line_no)
        try:
            vector = np.array([float(v) for v in values.split(' ') if v], dtype=np.float64)
        except ValueError:
            raise ParseError(f'Line {line_no}: values must be decimal floats', line=line_no) from None
        if vector.shape[0] != dim:
            raise DimMismatch(
                f'Line {line_no}: row "{sentence_id}" has {vector.shape[0]} values, expected {dim}',
                line=line_no, expected=dim, actual=int(vector.shape[0]))
        if not np.all(np.isfinite(vector)):
            raise ParseError(f'Line {line_no}: non-finite value in row "{sentence_id}"', line=line_no)
        if sentence_id in vectors:
            raise DuplicateId(f'Line {line_no}: duplicate id "{sentence_id}"', line=line_no)
        vectors[sentence_id] = vector

    logger.info(f'Loaded {len(vectors)} embeddings (dim={dim}, provenance={provenance}) from {path}')
    return EmbeddingTable(vectors=vectors, dim=dim, provenance=provenance)


def write_embeddings(table, path):
    """Write an embedding table; float repr keeps the round trip exact."""
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write(f'dim={table.dim} provenance={table.provenance}\n')
        for sentence_id, vector in table.vectors.items():
            values = ' '.join(repr(float(v)) for v in vector)
            handle.write(f'{sentence_id}\t{values}\n')


def _token_hash(token, seed, salt):
    digest = hashlib.blake2b(token.encode('utf-8'), digest_size=8,
                             key=str(seed).encode('utf-8'), person=salt).digest()
    return int.from_bytes(digest, 'little')


def hashed_embedding(tokens, dim, seed=0):
    """
    Signed feature hashing of a token multiset, L2-normalised.

    The index and the sign come from two independent keyed hashes, so the
    vector only depends on (tokens as a multiset, dim, seed).
    """
    if dim < 1:
        raise ValueError(f'dim must be >= 1, got {dim}')
    vector = np.zeros(dim)
    for token, count in Counter(tokens).items():
        index = _token_hash(token, seed, b'index') % dim
        sign = 1.0 if _token_hash(token, seed, b'sign') & 1 else -1.0
        vector[index] += sign * count
    norm = math.sqrt(float(np.dot(vector, vector)))
    if norm > 0.0:
        vector /= norm
    return vector


class Featurizer:
    """Turns sentences into a feature matrix for the heads."""
    kind = None
    # Sparse featurizers hand count vectors to Naive Bayes and report nnz for costs
    sparse = False

    def fit(self, sentences):
        return self

    def transform(self, sentences):
        raise NotImplementedError

    @property
    def dim(self):
        raise NotImplementedError

    @property
    def provenance(self):
        return self.kind

    def nnz(self, sentences):
        return [self.dim] * len(sentences)

    def to_dict(self):
        return {'kind': self.kind}


class BowFeaturizer(Featurizer):
    """Bag-of-words counts over a training vocabulary."""
    kind = 'bow'
    sparse = True

    def __init__(self, min_df=1, vocabulary: Optional[Vocabulary] = None):
        self.min_df = min_df
        self.vocabulary = vocabulary

    def fit(self, sentences):
        self.vocabulary = build_vocabulary((preprocess(s.text) for s in sentences), self.min_df)
        return self

    def vectors(self, sentences):
        return [bow_vector(preprocess(s.text), self.vocabulary) for s in sentences]

    def transform(self, sentences):
        return count_matrix(self.vectors(sentences), dim=self.dim)

    @property
    def dim(self):
        return len(self.vocabulary)

    @property
    def provenance(self):
        return f'bow(min_df={self.min_df})'

    def nnz(self, sentences):
        return [vector.nnz for vector in self.vectors(sentences)]

    def to_dict(self):
        return {'kind': self.kind, 'vocabulary': self.vocabulary.to_dict()}


class HashedFeaturizer(Featurizer):
    """Self-contained dense featurizer based on signed token hashing."""
    kind = 'hashed'

    def __init__(self, dim=384, seed=0):
        self._dim = dim
        self.seed = seed

    def transform(self, sentences):
        if not sentences:
            return np.zeros((0, self._dim))
        return np.vstack([hashed_embedding(preprocess(s.text), self._dim, self.seed) for s in sentences])

    @property
    def dim(self):
        return self._dim

    @property
    def provenance(self):
        return f'hashed(dim={self._dim}, seed={self.seed})'

    def to_dict(self):
        return {'kind': self.kind, 'dim': self._dim, 'seed': self.seed}


class TableFeaturizer(Featurizer):
    """Looks sentences up in an externally produced embedding table."""
    kind = 'embeddings'

    def __init__(self, table: EmbeddingTable, path=None):
        self.table = table
        self.path = path

    def transform(self, sentences):
        return self.table.matrix([s.id for s in sentences])

    @property
    def dim(self):
        return self.table.dim

    @property
    def provenance(self):
        return self.table.provenance

    def to_dict(self):
        return {'kind': self.kind, 'path': self.path, 'dim': self.table.dim,
                'provenance': self.table.provenance}


def featurizer_from_dict(data):
    """Rebuild a featurizer saved with ``to_dict``."""
    kind = data['kind']
    if kind == BowFeaturizer.kind:
        vocabulary = Vocabulary.from_dict(data['vocabulary'])
        return BowFeaturizer(min_df=vocabulary.min_df, vocabulary=vocabulary)
    if kind == HashedFeaturizer.kind:
        return HashedFeaturizer(dim=data['dim'], seed=data['seed'])
    if kind == TableFeaturizer.kind:
        if not data.get('path'):
            raise ParseError('Saved embedding featurizer has no table path')
        table = load_embeddings(data['path'])
        if table.provenance != data['provenance'] or table.dim != data['dim']:
            raise DimMismatch(f'Embedding table {data["path"]} does not match the saved model',
                              expected=data['dim'], actual=table.dim)
        return TableFeaturizer(table, path=data['path'])
    raise ParseError(f'Unknown featurizer kind "{kind}"')
