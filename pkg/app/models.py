from dataclasses import dataclass, field
from enum import Enum
from typing import FrozenSet, List, Tuple

from app.errors import MissingLabel, UnknownLabel


class Language(str, Enum):
    """Programming language a comment sentence was taken from."""
    JAVA = 'java'
    PYTHON = 'python'
    PHARO = 'pharo'

    @classmethod
    def parse(cls, value):
        """Parse a language tag case-insensitively."""
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f'Unknown language "{value}"') from None

    @property
    def display_name(self):
        return self.value.capitalize()


# Label names per language, in taxonomy order.
TAXONOMY_LABELS = {
    Language.JAVA: (
        'deprecation', 'expand', 'ownership', 'pointer',
        'rational', 'summary', 'usage',
    ),
    Language.PYTHON: (
        'development_notes', 'expand', 'parameters', 'summary', 'usage',
    ),
    Language.PHARO: (
        'class_references', 'collaborators', 'example', 'intent',
        'key_implementation_points', 'key_messages', 'responsibilities',
    ),
}


@dataclass(frozen=True)
class LabelTaxonomy:
    """Ordered label names of one language."""
    language: Language
    labels: Tuple[str, ...]

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f'Duplicate label names in {self.language.value} taxonomy')

    def __len__(self):
        return len(self.labels)

    def index_of(self, name):
        """Index of a label name, or None when the name is not in the taxonomy."""
        normalized = name.strip().lower().replace(' ', '_').replace('-', '_')
        try:
            return self.labels.index(normalized)
        except ValueError:
            return None

    def name_of(self, index):
        return self.labels[index]


@dataclass(frozen=True)
class CommentSentence:
    """One labeled comment sentence."""
    id: str
    language: Language
    text: str
    labels: FrozenSet[int]

    def __post_init__(self):
        if not self.labels:
            raise MissingLabel(f'Sentence "{self.id}" has no label')
        size = len(TAXONOMY_LABELS[self.language])
        invalid = sorted(i for i in self.labels if not 0 <= i < size)
        if invalid:
            raise UnknownLabel(f'Sentence "{self.id}" has label indices {invalid} outside the '
                               f'{self.language.value} taxonomy')

    @property
    def is_multi_label(self):
        return len(self.labels) > 1

    def label_names(self, taxonomy):
        return [taxonomy.name_of(i) for i in sorted(self.labels)]

    def to_record(self, taxonomy):
        """Canonical JSONL record."""
        return {
            'id': self.id,
            'language': self.language.value,
            'text': self.text,
            'labels': self.label_names(taxonomy),
        }


@dataclass(frozen=True)
class DegenerateLabel:
    """A label with too few positives to appear on both sides of a split."""
    language: Language
    label: str
    positives: int


@dataclass
class SplitDataset:
    """Train/test partition of a corpus."""
    train: List[CommentSentence]
    test: List[CommentSentence]
    ratio: float
    seed: int
    degenerate: List[DegenerateLabel] = field(default_factory=list)

    @property
    def train_fraction(self):
        total = len(self.train) + len(self.test)
        return len(self.train) / total if total else 0.0

    def for_language(self, language):
        """Train and test sentences of one language."""
        train = [s for s in self.train if s.language == language]
        test = [s for s in self.test if s.language == language]
        return train, test

    def languages(self):
        present = {s.language for s in self.train} | {s.language for s in self.test}
        return [language for language in Language if language in present]


@dataclass(frozen=True)
class SparseCountVector:
    """Token counts over a vocabulary; indices strictly increasing."""
    indices: Tuple[int, ...]
    counts: Tuple[int, ...]
    dim: int

    def __post_init__(self):
        if len(self.indices) != len(self.counts):
            raise ValueError('indices and counts differ in length')
        for a, b in zip(self.indices, self.indices[1:]):
            if a >= b:
                raise ValueError('indices must be strictly increasing')
        if self.indices and (self.indices[0] < 0 or self.indices[-1] >= self.dim):
            raise ValueError('index outside the vocabulary dimension')
        if any(c < 1 for c in self.counts):
            raise ValueError('counts must be >= 1')

    @property
    def nnz(self):
        return len(self.indices)

    @property
    def total(self):
        return sum(self.counts)

    def pairs(self):
        return list(zip(self.indices, self.counts))


@dataclass(frozen=True)
class ContrastivePair:
    """Two sentence ids with a positive or negative polarity."""
    a_id: str
    b_id: str
    positive: bool

    def __post_init__(self):
        if self.a_id == self.b_id:
            raise ValueError(f'Self pair for "{self.a_id}"')


@dataclass(frozen=True)
class PairPlan:
    num_iterations: int
    seed: int = 0

    def __post_init__(self):
        if self.num_iterations < 0:
            raise ValueError('num_iterations must be >= 0')
