"""
Unit tests for the domain types.

Tests cover:
- Language parsing and display names
- Built-in label taxonomies and sentence label validation
- Sparse count vector and contrastive pair invariants
"""

import pytest

from app.errors import MissingLabel, UnknownLabel
from app.models import (
    TAXONOMY_LABELS,
    CommentSentence,
    ContrastivePair,
    LabelTaxonomy,
    Language,
    PairPlan,
    SparseCountVector,
)
from app.services.corpus import taxonomy_for


class TestLanguage:
    """Test the language enumeration."""

    def test_exactly_three_languages(self):
        assert [language.value for language in Language] == ['java', 'python', 'pharo']

    @pytest.mark.parametrize("value,expected", [
        ('java', Language.JAVA),
        ('Python', Language.PYTHON),
        (' PHARO ', Language.PHARO),
        (Language.JAVA, Language.JAVA),
    ])
    def test_parse(self, value, expected):
        assert Language.parse(value) is expected

    def test_parse_unknown(self):
        with pytest.raises(ValueError, match='Unknown language'):
            Language.parse('cobol')

    def test_display_name(self):
        assert Language.PHARO.display_name == 'Pharo'


class TestTaxonomy:
    """Test the per-language label taxonomies."""

    def test_cardinalities(self):
        assert len(taxonomy_for(Language.JAVA)) == 7
        assert len(taxonomy_for(Language.PYTHON)) == 5
        assert len(taxonomy_for(Language.PHARO)) == 7
        assert sum(len(labels) for labels in TAXONOMY_LABELS.values()) == 19

    def test_java_labels(self):
        labels = taxonomy_for('java').labels
        assert 'summary' in labels
        assert 'usage' in labels

    def test_pharo_has_intent(self):
        assert 'intent' in taxonomy_for(Language.PHARO).labels

    def test_index_of_normalizes_names(self):
        taxonomy = taxonomy_for(Language.PYTHON)
        assert taxonomy.index_of('Development Notes') == 0
        assert taxonomy.index_of('development-notes') == 0
        assert taxonomy.index_of('ownership') is None

    def test_name_of(self):
        assert taxonomy_for(Language.JAVA).name_of(5) == 'summary'

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError, match='Duplicate'):
            LabelTaxonomy(Language.JAVA, ('summary', 'summary'))


class TestCommentSentence:
    """Test sentence helpers."""

    def test_multi_label(self, java_sentences):
        assert not java_sentences[0].is_multi_label
        assert java_sentences[3].is_multi_label

    def test_record_lists_label_names_in_taxonomy_order(self, java_sentences):
        record = java_sentences[3].to_record(taxonomy_for(Language.JAVA))
        assert record == {'id': 'j4', 'language': 'java', 'text': 'Returns the sum; see usage below',
                          'labels': ['summary', 'usage']}

    def test_empty_labels_rejected(self):
        with pytest.raises(MissingLabel, match='"x" has no label'):
            CommentSentence('x', Language.JAVA, 'text', frozenset())

    @pytest.mark.parametrize("language,index", [
        (Language.JAVA, 7),
        (Language.PYTHON, 5),
        (Language.PHARO, -1),
    ])
    def test_label_index_outside_taxonomy_rejected(self, language, index):
        with pytest.raises(UnknownLabel):
            CommentSentence('x', language, 'text', frozenset([0, index]))

    def test_sentences_are_hashable(self):
        sentence = CommentSentence('x', Language.JAVA, 'text', frozenset([1]))
        assert sentence in {sentence}


class TestSparseCountVector:
    """Test sparse vector invariants."""

    def test_valid_vector(self):
        vector = SparseCountVector((0, 3), (2, 1), dim=4)
        assert vector.nnz == 2
        assert vector.total == 3
        assert vector.pairs() == [(0, 2), (3, 1)]

    @pytest.mark.parametrize("indices,counts,dim", [
        ((1, 0), (1, 1), 3),
        ((0, 0), (1, 1), 3),
        ((0, 3), (1, 1), 3),
        ((0,), (0,), 3),
        ((0, 1), (1,), 3),
    ])
    def test_invalid_vectors(self, indices, counts, dim):
        with pytest.raises(ValueError):
            SparseCountVector(indices, counts, dim)


class TestPairTypes:
    """Test pair and plan invariants."""

    def test_self_pair_rejected(self):
        with pytest.raises(ValueError, match='Self pair'):
            ContrastivePair('a', 'a', True)

    def test_negative_iterations_rejected(self):
        with pytest.raises(ValueError):
            PairPlan(-1)

    def test_zero_iterations_allowed(self):
        assert PairPlan(0).num_iterations == 0
