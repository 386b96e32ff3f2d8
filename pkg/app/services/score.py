"""Submission score, its per-term breakdown and leaderboards."""
import csv
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence

from app.errors import NonFinite
from app.logging_config import get_logger
from app.models import Language
from app.services.corpus import taxonomy_for

logger = get_logger(__name__)

STATUS_OK = 'ok'
STATUS_FAILED = 'failed'

REPORT_DECIMALS = 4


@dataclass(frozen=True)
class ScoreWeights:
    f1: float = 0.6
    runtime: float = 0.2
    gflops: float = 0.2
    runtime_budget_s: float = 5.0
    gflops_budget: float = 5000.0

    @classmethod
    def from_config(cls, config):
        return cls(f1=config.get('SCORE_F1_WEIGHT', 0.6),
                   runtime=config.get('SCORE_RUNTIME_WEIGHT', 0.2),
                   gflops=config.get('SCORE_GFLOPS_WEIGHT', 0.2),
                   runtime_budget_s=config.get('SCORE_RUNTIME_BUDGET_S', 5.0),
                   gflops_budget=config.get('SCORE_GFLOPS_BUDGET', 5000.0))


@dataclass(frozen=True)
class SubmissionInputs:
    avg_f1: float
    avg_runtime_s: float
    avg_gflops: float


@dataclass(frozen=True)
class ScoreBreakdown:
    inputs: SubmissionInputs
    f1_term: float
    runtime_term: float
    gflops_term: float
    total: float


def submission_score(inputs, weights=None):
    """
    Weighted score of F1 and the runtime / GFLOPS budget headroom.

    total = 0.6 avg_f1 + 0.2 (5 - runtime) / 5 + 0.2 (5000 - gflops) / 5000
    with the default weights. Terms are not clamped and may be negative.

    Raises:
        NonFinite: an input is NaN or infinite
    """
    weights = weights or ScoreWeights()
    values = (inputs.avg_f1, inputs.avg_runtime_s, inputs.avg_gflops)
    if not all(math.isfinite(v) for v in values):
        raise NonFinite(f'Score inputs must be finite, got {values}')
    if not 0.0 <= inputs.avg_f1 <= 1.0:
        raise ValueError(f'avg_f1 must be in [0, 1], got {inputs.avg_f1}')
    if inputs.avg_runtime_s < 0 or inputs.avg_gflops < 0:
        raise ValueError('avg_runtime_s and avg_gflops must be >= 0')

    f1_term = weights.f1 * inputs.avg_f1
    runtime_term = weights.runtime * (weights.runtime_budget_s - inputs.avg_runtime_s) / weights.runtime_budget_s
    gflops_term = weights.gflops * (weights.gflops_budget - inputs.avg_gflops) / weights.gflops_budget
    return ScoreBreakdown(inputs, f1_term, runtime_term, gflops_term, f1_term + runtime_term + gflops_term)


@dataclass(frozen=True)
class NamedScore:
    """A leaderboard entry; ``breakdown`` is None for failed configurations."""
    name: str
    breakdown: Optional[ScoreBreakdown]
    status: str = STATUS_OK
    error: str = ''

    @property
    def failed(self):
        return self.status == STATUS_FAILED or self.breakdown is None


def rank(scores: Sequence[NamedScore]):
    """Descending total, then higher avg_f1, then name; failed entries last by name."""
    ok = [s for s in scores if not s.failed]
    failed = [s for s in scores if s.failed]
    ok.sort(key=lambda s: (-s.breakdown.total, -s.breakdown.inputs.avg_f1, s.name))
    failed.sort(key=lambda s: s.name)
    return ok + failed


def breakdown_export(scores: Sequence[NamedScore], path):
    """CSV of name and the three contributions plus total, full precision."""
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['name', 'f1_term', 'runtime_term', 'gflops_term', 'total'])
        for entry in scores:
            if entry.failed:
                continue
            b = entry.breakdown
            writer.writerow([entry.name, repr(b.f1_term), repr(b.runtime_term),
                             repr(b.gflops_term), repr(b.total)])
    return path


def _fmt(value):
    return f'{value:.{REPORT_DECIMALS}f}'


def write_leaderboard_csv(ranked: Sequence[NamedScore], path, columns=None):
    """
    Leaderboard CSV rounded to 4 decimals.

    ``columns`` restricts the output to a subset of the standard columns.
    """
    header = ['name', 'avg_f1', 'avg_runtime_s', 'avg_gflops', 'f1_term', 'runtime_term',
              'gflops_term', 'total', 'status']
    columns = list(columns or header)
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(columns)
        for entry in ranked:
            if entry.failed:
                row = {key: '' for key in header}
                row.update(name=entry.name, status=STATUS_FAILED)
            else:
                b = entry.breakdown
                row = {
                    'name': entry.name,
                    'avg_f1': _fmt(b.inputs.avg_f1),
                    'avg_runtime_s': _fmt(b.inputs.avg_runtime_s),
                    'avg_gflops': _fmt(b.inputs.avg_gflops),
                    'f1_term': _fmt(b.f1_term),
                    'runtime_term': _fmt(b.runtime_term),
                    'gflops_term': _fmt(b.gflops_term),
                    'total': _fmt(b.total),
                    'status': entry.status,
                }
            writer.writerow([row[key] for key in columns])
    return path


def combine_languages(per_language: Dict, gflops_aggregation='sum', runtime_s=None):
    """
    Recombine per-language (macro F1, runtime, GFLOPS) triples into score inputs.

    The F1 is weighted by taxonomy size, which equals the flat mean over all
    19 label scores. GFLOPS are summed (``"mean"`` averages them); runtime
    is the mean unless a separately measured cross-language runtime is given.

    Args:
        per_language: Language -> (f1, runtime_s, gflops)
        gflops_aggregation: "sum" or "mean"
        runtime_s: optional measured cross-language runtime

    Returns:
        SubmissionInputs
    """
    per_language = {Language.parse(k): v for k, v in per_language.items()}
    missing = [lang.value for lang in Language if lang not in per_language]
    if missing:
        raise ValueError(f'Missing languages: {", ".join(missing)}')
    if gflops_aggregation not in ('sum', 'mean'):
        raise ValueError(f'Unknown GFLOPS aggregation "{gflops_aggregation}"')

    sizes = {lang: len(taxonomy_for(lang)) for lang in Language}
    f1 = sum(sizes[lang] * per_language[lang][0] for lang in Language) / sum(sizes.values())
    if runtime_s is None:
        runtime_s = sum(per_language[lang][1] for lang in Language) / len(Language)
    gflops = sum(per_language[lang][2] for lang in Language)
    if gflops_aggregation == 'mean':
        gflops /= len(Language)
    return SubmissionInputs(f1, runtime_s, gflops)


@dataclass(frozen=True)
class PublishedResult:
    """
    One published result row.

    ``gflops`` is None for rows of a stage-1 group that share the GFLOPS of
    the first row of the same model.
    """
    stage: str
    model: str
    f1: float
    runtime_s: float
    gflops: Optional[float]
    score: float
    language: str = ''
    head: str = ''
    iterations: Optional[int] = None

    @property
    def name(self):
        parts = [self.stage, self.language, self.model, self.head,
                 f'{self.iterations} iterations' if self.iterations else '']
        return ' / '.join(p for p in parts if p)

    @property
    def inputs(self):
        return SubmissionInputs(self.f1, self.runtime_s, self.gflops)


def _stage1(model, iterations, f1, runtime_s, gflops, score):
    return PublishedResult('stage1', model, f1, runtime_s, gflops, score, iterations=iterations)


def _stage2(language, model, head, f1, runtime_s, gflops, score):
    return PublishedResult('stage2', model, f1, runtime_s, gflops, score, language=language, head=head)


def _summary(model, f1, runtime_s, gflops, score):
    return PublishedResult('summary', model, f1, runtime_s, gflops, score)


PUBLISHED_RESULTS = (
    _stage1('baselines', 20, 0.6394, 0.9422, 999.0271, 0.7060),
    _stage1('paraphrase-MiniLM-L3-v2', 20, 0.6348, 1.0916, 999.0271, 0.6973),
    _stage1('paraphrase-MiniLM-L3-v2', 40, 0.6246, 1.0077, None, 0.6945),
    _stage1('paraphrase-MiniLM-L3-v2', 60, 0.6243, 1.0931, None, 0.6909),
    _stage1('all-MiniLM-L6-v2', 20, 0.6425, 1.3468, 2173.2976, 0.6447),
    _stage1('all-MiniLM-L6-v2', 40, 0.6476, 1.2921, None, 0.6499),
    _stage1('all-MiniLM-L6-v2', 60, 0.6578, 1.2674, None, 0.6571),
    _stage1('paraphrase-albert-small-v2', 20, 0.6363, 1.5817, 8088.5031, 0.3950),
    _stage1('paraphrase-albert-small-v2', 40, 0.6342, 1.5483, None, 0.3950),
    _stage1('paraphrase-albert-small-v2', 60, 0.6442, 1.8769, None, 0.3879),
    _stage1('all-distilroberta-v1', 20, 0.6499, 1.5599, 8997.9049, 0.3676),
    _stage1('all-distilroberta-v1', 40, 0.6559, 1.7063, None, 0.3654),
    _stage1('all-distilroberta-v1', 60, 0.6585, 1.5653, None, 0.3725),
    _stage1('all-mpnet-base-v2', 20, 0.6921, 3.5339, 18489.3073, -0.0657),
    _stage1('all-mpnet-base-v2', 40, 0.6795, 2.6626, None, -0.0384),
    _stage1('all-mpnet-base-v2', 60, 0.6564, 2.3183, None, -0.0384),

    _stage2('java', 'baseline', 'default', 0.6979, 0.6750, 803.4690, 0.7596),
    _stage2('java', 'all-mpnet-base-v2', 'SVM, C: 0.01, kernel: rbf', 0.7404, 3.7043, 15342.3384, 0.0824),
    _stage2('java', 'all-distilroberta-v1', 'SVM, C: 0.1, kernel: linear', 0.7378, 2.6844, 7527.8992, 0.4342),
    _stage2('java', 'paraphrase-albert-small-v2', 'SVM, C: 0.01, kernel: rbf', 0.7277, 3.2573, 6375.5939,
            0.4513),
    _stage2('java', 'all-MiniLM-L6-v2', 'RF, max_depth: 9', 0.7251, 0.9127, 1782.4005, 0.7273),
    _stage2('java', 'paraphrase-MiniLM-L3-v2', 'LR, C: 0.01', 0.7119, 2.1144, 803.4690, 0.7104),
    _stage2('java', 'baseline', 'SVM, C: 0.01, kernel: linear', 0.7022, 2.1690, 803.4690, 0.7024),

    _stage2('python', 'baseline', 'default', 0.6030, 0.2351, 103.6213, 0.7483),
    _stage2('python', 'all-distilroberta-v1', 'RF, max_depth: 6', 0.6737, 0.3447, 811.9539, 0.7580),
    _stage2('python', 'all-MiniLM-L6-v2', 'RF, max_depth: 4', 0.6564, 0.3212, 207.1154, 0.7727),
    _stage2('python', 'all-mpnet-base-v2', 'XG, max_depth: 2', 0.6548, 0.3648, 1665.6587, 0.7117),
    _stage2('python', 'paraphrase-MiniLM-L3-v2', 'LR, C: 0.1', 0.6165, 1.5583, 103.6213, 0.7034),
    _stage2('python', 'paraphrase-albert-small-v2', 'LR, C: 0.01', 0.6157, 1.8046, 966.8189, 0.6586),
    _stage2('python', 'baseline', 'LR, C: 0.01', 0.6062, 1.5670, 103.6213, 0.6969),

    _stage2('pharo', 'baseline', 'default', 0.6068, 0.1973, 91.9368, 0.7525),
    _stage2('pharo', 'all-mpnet-base-v2', 'default', 0.7105, 0.3296, 1481.3102, 0.7539),
    _stage2('pharo', 'all-distilroberta-v1', 'RF, max_depth: 6', 0.6658, 0.3014, 658.0518, 0.7611),
    _stage2('pharo', 'paraphrase-albert-small-v2', 'SVM, C: 1.0, kernel: sigmoid', 0.6579, 1.6541, 746.0903,
            0.6988),
    _stage2('pharo', 'paraphrase-MiniLM-L3-v2', 'SVM, C: 1.0, kernel: poly', 0.6414, 1.5860, 91.9368, 0.7177),
    _stage2('pharo', 'all-MiniLM-L6-v2', 'RF, max_depth: 6', 0.6365, 0.2838, 183.7817, 0.7632),
    _stage2('pharo', 'baseline', 'RF, max_depth: 5', 0.6356, 0.2394, 91.9368, 0.7681),

    _summary('best candidates, non-default head', 0.6740, 1.2567, 2081.4527, 0.6709),
    _summary('best candidates, default head for java', 0.6640, 1.2165, 1102.5212, 0.7056),
    _summary('naive bayes, bag-of-words', 0.4736, 0.0360, 0.0, 0.6828),
    _summary('submitted models, colab t4', 0.6740, 1.6859, 2084.5110, 0.6536),
    _summary('official baselines, colab t4', 0.6394, 1.1702, 999.0271, 0.6968),
)


def published_results(stage=None):
    """Published rows with shared stage-1 GFLOPS carried down to every row of the group."""
    rows = []
    carried = {}
    for row in PUBLISHED_RESULTS:
        if row.gflops is None:
            row = replace(row, gflops=carried[(row.stage, row.model)])
        carried[(row.stage, row.model)] = row.gflops
        if stage is None or row.stage == stage:
            rows.append(row)
    return rows


@dataclass(frozen=True)
class Reproduction:
    row: PublishedResult
    breakdown: ScoreBreakdown

    @property
    def deviation(self):
        return self.breakdown.total - self.row.score


def reproduce_published(weights=None, stage=None):
    """Recompute every published score from its (F1, runtime, GFLOPS) triple."""
    reproductions = [Reproduction(row, submission_score(row.inputs, weights)) for row in published_results(stage)]
    worst = max((abs(r.deviation) for r in reproductions), default=0.0)
    logger.info(f'Reproduced {len(reproductions)} published scores, max deviation {worst:.2e}')
    return reproductions


def best_per_language(rows: Sequence[PublishedResult], weights=None, exclude_default=False):
    """
    Highest-scoring stage-2 row per language.

    Args:
        rows: rows carrying language, head and the score triple
        exclude_default: skip rows whose head is ``default``

    Returns:
        dict: Language -> row
    """
    best: Dict[Language, PublishedResult] = {}
    best_total: Dict[Language, float] = {}
    for row in rows:
        if not row.language or (exclude_default and row.head == 'default'):
            continue
        language = Language.parse(row.language)
        total = submission_score(row.inputs, weights).total
        if language not in best or total > best_total[language]:
            best[language], best_total[language] = row, total
    return best


def leaderboard_from_published(rows: Sequence[PublishedResult], weights=None) -> List[NamedScore]:
    return rank([NamedScore(row.name, submission_score(row.inputs, weights)) for row in rows])
