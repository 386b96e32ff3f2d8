"""Per-label precision/recall/F1 and the cross-language average F1."""
import csv
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

from app.errors import LengthMismatch, MissingLabelScore
from app.logging_config import get_logger
from app.models import Language
from app.services.corpus import taxonomy_for

logger = get_logger(__name__)

AGGREGATION_FLAT = 'flat'
AGGREGATION_LANGUAGE_MACRO = 'language_macro'
AGGREGATIONS = (AGGREGATION_FLAT, AGGREGATION_LANGUAGE_MACRO)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class LabelScore:
    label: str
    precision: float
    recall: float
    f1: float
    language: str = ''
    support: int = 0


def confusion(truth: Sequence, predicted: Sequence, label):
    """
    Binary confusion counts of one label over paired label sets.

    Raises:
        LengthMismatch: truth and predicted differ in length
    """
    if len(truth) != len(predicted):
        raise LengthMismatch(f'{len(truth)} truth label sets but {len(predicted)} predictions')
    tp = fp = fn = tn = 0
    for expected, actual in zip(truth, predicted):
        is_true = label in expected
        is_predicted = label in actual
        if is_true and is_predicted:
            tp += 1
        elif is_predicted:
            fp += 1
        elif is_true:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, fn, tn)


def f1(counts, label='', language=''):
    """Precision, recall and F1 of one label; every zero division yields 0."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    score = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return LabelScore(label=label, precision=precision, recall=recall, f1=score,
                      language=language, support=counts.tp + counts.fn)


def evaluate_language(language, truth, predicted):
    """LabelScore for every taxonomy label of one language."""
    language = Language.parse(language)
    taxonomy = taxonomy_for(language)
    return [
        f1(confusion(truth, predicted, index), label=name, language=language.value)
        for index, name in enumerate(taxonomy.labels)
    ]


@dataclass
class AggregateReport:
    per_language: Dict[Language, List[LabelScore]]
    avg_f1: float
    mode: str = AGGREGATION_FLAT
    language_f1: Dict[Language, float] = field(default_factory=dict)

    def scores(self):
        return [score for language in Language for score in self.per_language[language]]


def aggregate(per_language: Dict, mode=AGGREGATION_FLAT):
    """
    Combine label scores of the three languages into avg_F1.

    ``flat`` averages all 19 label F1 scores, so languages with more labels
    weigh more; ``language_macro`` averages the three per-language macro F1s.

    Raises:
        MissingLabelScore: a language is absent or its labels differ from the taxonomy
    """
    if mode not in AGGREGATIONS:
        raise ValueError(f'Unknown aggregation "{mode}", expected one of {", ".join(AGGREGATIONS)}')
    per_language = {Language.parse(lang): list(scores) for lang, scores in per_language.items()}

    for language in Language:
        if language not in per_language:
            raise MissingLabelScore(f'No label scores for {language.display_name}', language=language.value)
        expected = set(taxonomy_for(language).labels)
        present = [score.label for score in per_language[language]]
        missing = sorted(expected - set(present))
        extra = sorted(set(present) - expected)
        if missing or extra or len(present) != len(expected):
            raise MissingLabelScore(
                f'{language.display_name} label scores do not match the taxonomy',
                language=language.value, missing=missing, unexpected=extra)

    language_f1 = {
        language: sum(s.f1 for s in per_language[language]) / len(per_language[language])
        for language in Language
    }
    if mode == AGGREGATION_FLAT:
        flat = [score.f1 for language in Language for score in per_language[language]]
        avg_f1 = sum(flat) / len(flat)
    else:
        avg_f1 = sum(language_f1.values()) / len(language_f1)

    logger.debug(f'Aggregated avg_f1={avg_f1:.6f} ({mode})')
    return AggregateReport(per_language=per_language, avg_f1=avg_f1, mode=mode, language_f1=language_f1)


def write_metrics_csv(report, path):
    """Export language, label, precision, recall, f1 rows plus a summary row."""
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['language', 'label', 'precision', 'recall', 'f1'])
        for score in report.scores():
            writer.writerow([score.language, score.label, f'{score.precision:.6f}',
                             f'{score.recall:.6f}', f'{score.f1:.6f}'])
        writer.writerow(['all', f'avg_f1 ({report.mode})', '', '', f'{report.avg_f1:.6f}'])
    return path
