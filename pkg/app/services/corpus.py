"""Corpus ingestion, validation, stratified splitting and summaries."""
import csv
import json
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from app.errors import DuplicateId, MissingLabel, ParseError, UnknownLabel
from app.logging_config import get_logger
from app.models import (
    TAXONOMY_LABELS,
    CommentSentence,
    DegenerateLabel,
    Language,
    LabelTaxonomy,
    SplitDataset,
)

logger = get_logger(__name__)

FORMAT_JSONL = 'jsonl'
FORMAT_CSV = 'csv'


def taxonomy_for(language):
    """
    Return the built-in label taxonomy of a language.

    Args:
        language: Language (or its tag)

    Returns:
        LabelTaxonomy: 7 labels for Java and Pharo, 5 for Python
    """
    language = Language.parse(language)
    return LabelTaxonomy(language=language, labels=TAXONOMY_LABELS[language])


@dataclass
class ColumnMap:
    """How CSV columns map onto sentence fields."""
    id_column: str = 'id'
    text_column: str = 'text'
    label_columns: List[str] = field(default_factory=list)
    label_list_column: Optional[str] = None
    delimiter: str = ','
    language_column: Optional[str] = None
    language: Optional[str] = None

    @classmethod
    def from_mapping(cls, mapping):
        """Build from a flat key/value mapping (e.g. an INI section)."""
        label_columns = mapping.get('label_columns') or []
        if isinstance(label_columns, str):
            label_columns = [c.strip() for c in label_columns.split(',') if c.strip()]
        column_map = cls(
            id_column=mapping.get('id_column', 'id'),
            text_column=mapping.get('text_column', 'text'),
            label_columns=list(label_columns),
            label_list_column=mapping.get('label_list_column') or None,
            delimiter=mapping.get('delimiter') or ',',
            language_column=mapping.get('language_column') or None,
            language=mapping.get('language') or None,
        )
        if not column_map.label_columns and not column_map.label_list_column:
            raise ValueError('Column map needs label_columns or label_list_column')
        if not column_map.language_column and not column_map.language:
            raise ValueError('Column map needs language_column or a fixed language')
        return column_map


def _build_sentence(sentence_id, language_value, text, label_names, line):
    if not sentence_id:
        raise ParseError(f'Line {line}: missing id', line=line)
    try:
        language = Language.parse(language_value)
    except ValueError as e:
        raise ParseError(f'Line {line}: {e}', line=line) from None
    if not isinstance(text, str):
        raise ParseError(f'Line {line}: text must be a string', line=line)

    taxonomy = taxonomy_for(language)
    labels = set()
    for name in label_names:
        index = taxonomy.index_of(str(name))
        if index is None:
            raise UnknownLabel(
                f'Line {line}: label "{name}" is not in the {language.value} taxonomy', line=line)
        labels.add(index)
    if not labels:
        raise MissingLabel(f'Line {line}: sentence "{sentence_id}" has no label', line=line)

    return CommentSentence(id=str(sentence_id), language=language, text=text, labels=frozenset(labels))


def _jsonl_rows(path):
    with open(path, encoding='utf-8') as handle:
        for line_no, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ParseError(f'Line {line_no}: invalid JSON ({e.msg})', line=line_no) from None
            if not isinstance(record, dict):
                raise ParseError(f'Line {line_no}: expected a JSON object', line=line_no)
            labels = record.get('labels')
            if not isinstance(labels, list):
                raise ParseError(f'Line {line_no}: labels must be a list', line=line_no)
            yield line_no, record.get('id'), record.get('language'), record.get('text'), labels


def _truthy(value):
    return str(value).strip().lower() in ('1', 'true', 'yes', 'y')


def _csv_rows(path, column_map):
    with open(path, encoding='utf-8', newline='') as handle:
        reader = csv.DictReader(handle)
        required = [column_map.id_column, column_map.text_column]
        required += column_map.label_columns
        if column_map.label_list_column:
            required.append(column_map.label_list_column)
        if column_map.language_column:
            required.append(column_map.language_column)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(f'Line 1: missing columns {", ".join(missing)}', line=1)

        # header is line 1
        for line_no, row in enumerate(reader, start=2):
            if column_map.label_list_column:
                raw = row.get(column_map.label_list_column) or ''
                labels = [name.strip() for name in raw.split(column_map.delimiter) if name.strip()]
            else:
                labels = [column for column in column_map.label_columns if _truthy(row.get(column, ''))]
            language = row[column_map.language_column] if column_map.language_column else column_map.language
            yield line_no, row[column_map.id_column], language, row[column_map.text_column], labels


def load_corpus(path, format=FORMAT_JSONL, column_map=None):
    """
    Load and validate a corpus file.

    Every row is validated; invalid rows are logged with their line number and
    the first failure is raised once the whole file has been read.

    Args:
        path: File path
        format: 'jsonl' (canonical) or 'csv'
        column_map: ColumnMap (or mapping), required for csv

    Returns:
        list: CommentSentence objects in file order
    """
    if format == FORMAT_JSONL:
        rows = _jsonl_rows(path)
    elif format == FORMAT_CSV:
        if column_map is None:
            raise ValueError('CSV corpora need a column map')
        if not isinstance(column_map, ColumnMap):
            column_map = ColumnMap.from_mapping(column_map)
        rows = _csv_rows(path, column_map)
    else:
        raise ValueError(f'Unknown corpus format "{format}"')

    sentences = []
    seen = {}
    errors = []
    for line_no, sentence_id, language, text, labels in rows:
        try:
            sentence = _build_sentence(sentence_id, language, text, labels, line_no)
            if sentence.id in seen:
                raise DuplicateId(
                    f'Line {line_no}: id "{sentence.id}" already used on line {seen[sentence.id]}',
                    line=line_no)
        except ParseError as e:
            logger.warning(f'{path}: {e}')
            errors.append(e)
            continue
        seen[sentence.id] = line_no
        sentences.append(sentence)

    if errors:
        first = errors[0]
        first.context['invalid_rows'] = len(errors)
        raise first

    logger.info(f'Loaded {len(sentences)} sentences from {path}')
    return sentences


def write_corpus(sentences, path):
    """Write sentences as canonical JSONL."""
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        for sentence in sentences:
            record = sentence.to_record(taxonomy_for(sentence.language))
            handle.write(json.dumps(record, ensure_ascii=False) + '\n')


def _iterative_stratification(group, ratio, rng):
    """
    Assign one language's sentences to train (fold 0) or test (fold 1).

    Labels are processed rarest first; each sentence carrying the current label
    goes to the fold that still wants the most examples of that label, ties
    broken by overall demand and then by train.
    """
    order = list(range(len(group)))
    rng.shuffle(order)

    proportions = (ratio, 1.0 - ratio)
    label_totals = Counter(label for sentence in group for label in sentence.labels)
    wanted = [len(group) * p for p in proportions]
    wanted_label = [{label: count * p for label, count in label_totals.items()} for p in proportions]

    assignment = {}
    remaining = set(order)

    def assign(index, fold):
        assignment[index] = fold
        remaining.discard(index)
        wanted[fold] -= 1
        for label in group[index].labels:
            wanted_label[fold][label] -= 1

    # Labels with a single positive cannot sit on both sides; they go to train.
    for index in order:
        if any(label_totals[label] < 2 for label in group[index].labels):
            assign(index, 0)

    while remaining:
        counts = Counter(label for index in remaining for label in group[index].labels)
        # rarest label first, lowest label index on ties
        label = min(counts, key=lambda l: (counts[l], l))
        for index in order:
            if index not in remaining or label not in group[index].labels:
                continue
            fold = max((0, 1), key=lambda f: (wanted_label[f][label], wanted[f], -f))
            assign(index, fold)

    return assignment


def stratified_split(sentences, ratio=0.8, seed=0):
    """
    Split sentences into train and test, per language, preserving label rates.

    Args:
        sentences: list of CommentSentence
        ratio: train fraction in (0, 1)
        seed: seed for the tie-breaking shuffle

    Returns:
        SplitDataset: train/test lists in input order plus degenerate labels
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f'Split ratio must be in (0, 1), got {ratio}')

    groups: Dict[Language, List[CommentSentence]] = defaultdict(list)
    for sentence in sentences:
        groups[sentence.language].append(sentence)

    for language, group in groups.items():
        if len(group) < 2:
            raise ValueError(f'Need at least 2 {language.value} sentences to split, got {len(group)}')

    train_ids, degenerate = set(), []
    for language in Language:
        group = groups.get(language)
        if not group:
            continue
        # one RNG stream per language so languages do not influence each other
        rng = random.Random(f'{seed}:{language.value}')
        assignment = _iterative_stratification(group, ratio, rng)
        train_ids.update(group[i].id for i, fold in assignment.items() if fold == 0)

        taxonomy = taxonomy_for(language)
        totals = Counter(label for sentence in group for label in sentence.labels)
        for label, count in sorted(totals.items()):
            if count < 2:
                degenerate.append(DegenerateLabel(language, taxonomy.name_of(label), count))
                logger.warning(
                    f'Label {language.value}/{taxonomy.name_of(label)} has {count} positive; kept in train')

    train = [s for s in sentences if s.id in train_ids]
    test = [s for s in sentences if s.id not in train_ids]
    logger.info(f'Split {len(sentences)} sentences into {len(train)} train / {len(test)} test '
                f'(ratio={ratio}, seed={seed})')
    return SplitDataset(train=train, test=test, ratio=ratio, seed=seed, degenerate=degenerate)


@dataclass
class CorpusSummary:
    """Per-language sentence counts and per-label positive counts."""
    sentences: Dict[Language, int]
    labels: Dict[Language, Dict[str, int]]
    multi_label: Dict[Language, int]

    @property
    def total_sentences(self):
        return sum(self.sentences.values())

    @property
    def multi_label_fraction(self):
        total = self.total_sentences
        return sum(self.multi_label.values()) / total if total else 0.0

    def label_total(self, language=None):
        languages = [language] if language else list(Language)
        return sum(sum(self.labels[lang].values()) for lang in languages)

    def rows(self):
        """(language, label, count) rows in taxonomy order."""
        return [
            (language.value, label, count)
            for language in Language
            for label, count in self.labels[language].items()
        ]


def corpus_summary(sentences: Sequence[CommentSentence]):
    """
    Count sentences per language and positives per (language, label).

    Multi-label sentences are counted once per label they carry.
    """
    counts = {language: 0 for language in Language}
    multi = {language: 0 for language in Language}
    labels = {language: {name: 0 for name in taxonomy_for(language).labels} for language in Language}
    for sentence in sentences:
        counts[sentence.language] += 1
        if sentence.is_multi_label:
            multi[sentence.language] += 1
        taxonomy = taxonomy_for(sentence.language)
        for index in sentence.labels:
            labels[sentence.language][taxonomy.name_of(index)] += 1
    return CorpusSummary(sentences=counts, labels=labels, multi_label=multi)


def split_summary(split):
    """Train and test summaries side by side."""
    return {'train': corpus_summary(split.train), 'test': corpus_summary(split.test)}


def write_summary_csv(summary, path):
    """Export a summary as CSV: language, label, count."""
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['language', 'label', 'count'])
        for row in summary.rows():
            writer.writerow(row)
        for language in Language:
            writer.writerow([language.value, '__sentences__', summary.sentences[language]])
