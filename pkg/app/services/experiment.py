"""End-to-end experiments and hyperparameter grids."""
import hashlib
import itertools
import json
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from app.errors import BenchmarkError, GridFailed, WrongLanguageCount
from app.forms import SECTIONS, config_keys, validate_config
from app.logging_config import get_logger
from app.models import Language, PairPlan
from app.services.corpus import ColumnMap, load_corpus, stratified_split, taxonomy_for
from app.services.cost import (
    FLOPS_CONVENTION,
    MeasurementProtocol,
    classifier_flops,
    cost_report,
    encoder_preset,
    load_encoder_spec,
    measure_runtime,
    sequence_lengths,
    test_set_encoder_flops,
    write_cost_csv,
    write_samples_csv,
)
from app.services.featurize import BowFeaturizer, HashedFeaturizer, TableFeaturizer, load_embeddings
from app.services.heads.ovr import DEFAULT_PARAMS, HeadSpec, ovr_predict, ovr_train
from app.services.heads.serialization import load_model, save_model
from app.services.metrics import aggregate, evaluate_language, write_metrics_csv
from app.services.pairgen import export_pairs, generate_pairs
from app.services.score import (
    NamedScore,
    ScoreWeights,
    SubmissionInputs,
    rank,
    submission_score,
    write_leaderboard_csv,
)

logger = get_logger(__name__)

HEAD_PARAM_KEYS = {
    'logistic': ('C', 'max_iters', 'tol'),
    'svm': ('C', 'kernel', 'gamma', 'degree', 'coef0', 'tol'),
    'forest': ('max_depth', 'n_trees'),
    'boosted': ('max_depth', 'rounds', 'shrinkage'),
    'naive_bayes': ('alpha',),
}

# Head parameters that fall back to the application config instead of the head defaults
CONFIG_DEFAULTS = {
    ('forest', 'n_trees'): 'DEFAULT_N_TREES',
    ('boosted', 'rounds'): 'DEFAULT_BOOSTING_ROUNDS',
    ('boosted', 'shrinkage'): 'DEFAULT_SHRINKAGE',
    ('naive_bayes', 'alpha'): 'DEFAULT_NB_ALPHA',
}

PACKAGES = ('numpy', 'Flask', 'WTForms')


def _canonical(value):
    return json.dumps(value, sort_keys=True, separators=(',', ':'))


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment configuration; ``values`` keeps the flat key/value form."""
    values: Tuple[Tuple[str, str], ...]
    data: Dict = field(compare=False, hash=False)
    head: HeadSpec = field(compare=False, hash=False)
    threshold: float = 0.5
    protocol: MeasurementProtocol = field(default_factory=MeasurementProtocol)
    weights: ScoreWeights = field(default_factory=ScoreWeights)

    @classmethod
    def from_values(cls, values, app_config=None, swept=None):
        """
        Validate flat values (config file plus overrides) and resolve defaults.

        Args:
            values: key -> value, blank meaning unset
            app_config: Flask config supplying head, measurement and score defaults
            swept: head parameters to show in the display name; defaults to
                the explicitly given ones

        Raises:
            ConfigError: validation failed
        """
        app_config = app_config or {}
        cleaned = {k: str(v) for k, v in values.items() if v is not None and str(v).strip() != ''}
        form = validate_config(cleaned)
        data = dict(form.data)

        family = data['head']
        params = {}
        for key in HEAD_PARAM_KEYS[family]:
            if data.get(key) is not None:
                params[key] = data[key]
            elif (family, key) in CONFIG_DEFAULTS and CONFIG_DEFAULTS[(family, key)] in app_config:
                params[key] = app_config[CONFIG_DEFAULTS[(family, key)]]
        if family == 'svm':
            params['kernel'] = data['kernel']
        if swept is None:
            swept = [key for key in HEAD_PARAM_KEYS[family] if key in cleaned]
            if family == 'svm' and 'kernel' in cleaned and 'kernel' not in swept:
                swept.append('kernel')
        order = list(DEFAULT_PARAMS[family])
        swept = tuple(sorted(swept, key=order.index))
        head = HeadSpec(family, params, swept)

        threshold = data['threshold'] if data['threshold'] is not None else app_config.get('DEFAULT_THRESHOLD', 0.5)
        protocol_defaults = MeasurementProtocol.from_config(app_config)
        protocol = MeasurementProtocol(
            warmup=data['warmup'] if data['warmup'] is not None else protocol_defaults.warmup,
            repetitions=data['repetitions'] if data['repetitions'] is not None else protocol_defaults.repetitions,
            aggregation=data['aggregation'] if 'aggregation' in cleaned else protocol_defaults.aggregation,
        )
        weight_defaults = ScoreWeights.from_config(app_config)
        weights = ScoreWeights(
            f1=_pick(data['f1_weight'], weight_defaults.f1),
            runtime=_pick(data['runtime_weight'], weight_defaults.runtime),
            gflops=_pick(data['gflops_weight'], weight_defaults.gflops),
            runtime_budget_s=_pick(data['runtime_budget'], weight_defaults.runtime_budget_s),
            gflops_budget=_pick(data['gflops_budget'], weight_defaults.gflops_budget),
        )
        return cls(values=tuple(sorted(cleaned.items())), data=data, head=head, threshold=threshold,
                   protocol=protocol, weights=weights)

    def with_overrides(self, app_config=None, swept=None, **overrides):
        values = dict(self.values)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig.from_values(values, app_config, swept=swept)

    def get(self, key):
        return self.data.get(key)

    @property
    def seed(self):
        return self.data['seed'] or 0

    @property
    def config_hash(self):
        """Digest of every setting that can change a result."""
        payload = {
            'values': dict(self.values),
            'head': self.head.to_dict(),
            'threshold': self.threshold,
            'protocol': [self.protocol.warmup, self.protocol.repetitions, self.protocol.aggregation],
            'weights': [self.weights.f1, self.weights.runtime, self.weights.gflops,
                        self.weights.runtime_budget_s, self.weights.gflops_budget],
        }
        return hashlib.sha256(_canonical(payload).encode('utf-8')).hexdigest()[:12]

    @property
    def display_name(self):
        return self.data.get('name') or self.head.display_name

    def to_ini(self):
        """Config file text holding the flat values."""
        values = dict(self.values)
        lines = []
        for section, keys in SECTIONS.items():
            present = [key for key in keys if key in values]
            if not present:
                continue
            lines.append(f'[{section}]')
            lines.extend(f'{key} = {values[key]}' for key in present)
            lines.append('')
        return '\n'.join(lines)


def _pick(value, default):
    return default if value is None else value


def load_sentences(config):
    """Sentences of the configured corpus file(s), in file order."""
    fmt = config.get('corpus_format') or 'jsonl'
    sources = []
    if config.get('corpus'):
        sources.append((config.get('corpus'), None))
    for language in Language:
        path = config.get(f'{language.value}_corpus')
        if path:
            sources.append((path, language))

    sentences = []
    for path, language in sources:
        column_map = None
        if fmt == 'csv':
            column_map = ColumnMap.from_mapping({
                'label_columns': config.get('label_columns') or '',
                'label_list_column': config.get('label_list_column'),
                'language_column': None if language else config.get('language_column'),
                'language': language.value if language else None,
            })
        sentences.extend(load_corpus(path, format=fmt, column_map=column_map))
    return sentences


def build_featurizer(config):
    kind = config.get('featurizer')
    if kind == 'bow':
        return BowFeaturizer(min_df=config.get('min_df') or 1)
    if kind == 'embeddings':
        return TableFeaturizer(load_embeddings(config.get('embeddings')), path=config.get('embeddings'))
    return HashedFeaturizer(dim=config.get('hashed_dim') or 384, seed=config.seed)


def build_encoder_spec(config):
    if config.get('encoder_spec'):
        return load_encoder_spec(config.get('encoder_spec'))
    return encoder_preset(config.get('encoder'))


def train_language(config, language, train):
    """Fit the featurizer and a one-vs-rest classifier on one language's training sentences."""
    featurizer = build_featurizer(config).fit(train)
    X = featurizer.transform(train)
    classifier = ovr_train(X, [s.labels for s in train], len(taxonomy_for(language)), config.head,
                           threshold=config.threshold, seed=config.seed)
    return featurizer, classifier


@dataclass
class LanguageResult:
    language: Language
    train_size: int
    test_size: int
    label_scores: List
    runtime_s: float
    runtime_samples: List[float]
    encoder_flops: int
    head_flops: int
    flagged_labels: List[str]
    pairs: Optional[int] = None

    @property
    def gflops(self):
        return (self.encoder_flops + self.head_flops) / 1e9

    @property
    def macro_f1(self):
        return sum(s.f1 for s in self.label_scores) / len(self.label_scores)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    run_dir: Path
    languages: Dict[Language, LanguageResult]
    aggregate: object
    cost: object
    score: object
    language_scores: Dict[Language, object] = field(default_factory=dict)

    @property
    def name(self):
        return self.config.display_name

    def named_score(self):
        return NamedScore(self.name, self.score)


def _run_language(config, language, train, test, run_dir, measure):
    featurizer, classifier = train_language(config, language, train)
    X_test = featurizer.transform(test)
    predictions = ovr_predict(classifier, X_test)
    label_scores = evaluate_language(language, [s.labels for s in test], predictions)

    if featurizer.sparse:
        encoder = 0
    else:
        spec = build_encoder_spec(config)
        lengths = sequence_lengths(test, spec, config.get('seq_policy'), config.get('seq_len'))
        encoder = test_set_encoder_flops(spec, lengths).flops
    head = classifier_flops(classifier, featurizer.nnz(test)).flops

    runtime, samples = 0.0, []
    if measure and test:
        measurement = measure_runtime(lambda: ovr_predict(classifier, featurizer.transform(test)),
                                      config.protocol)
        runtime, samples = measurement.seconds, measurement.samples
        write_samples_csv(measurement, run_dir / f'runtime_{language.value}.csv')

    taxonomy = taxonomy_for(language)
    save_model(run_dir / 'models' / f'{language.value}.json', classifier, language, taxonomy.labels, featurizer)

    pairs = None
    if config.get('num_iterations') is not None:
        plan = PairPlan(config.get('num_iterations'), seed=config.seed)
        generated = generate_pairs(train, plan)
        (run_dir / 'pairs').mkdir(parents=True, exist_ok=True)
        export_pairs(generated, run_dir / 'pairs' / f'{language.value}.tsv')
        pairs = len(generated)

    flagged = [taxonomy.name_of(label) for label in classifier.flagged_labels]
    logger.info(f'{language.display_name}: {len(train)} train / {len(test)} test, '
                f'macro F1 {sum(s.f1 for s in label_scores) / len(label_scores):.4f}, '
                f'{(encoder + head) / 1e9:.4f} GFLOPS, {runtime:.4f}s')
    return LanguageResult(language, len(train), len(test), label_scores, runtime, samples,
                          encoder, head, flagged, pairs)


def _file_digest(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(1 << 16), b''):
            digest.update(block)
    return digest.hexdigest()


def _versions():
    versions = {'python': platform.python_version()}
    for package in PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = 'unknown'
    return versions


def write_manifest(config, run_dir):
    inputs = {}
    for key in ('corpus', 'java_corpus', 'python_corpus', 'pharo_corpus', 'embeddings', 'encoder_spec'):
        path = config.get(key)
        if path:
            inputs[path] = _file_digest(path)
    manifest = {
        'config_hash': config.config_hash,
        'seed': config.seed,
        'config': dict(config.values),
        'head': config.head.to_dict(),
        'flops_convention': FLOPS_CONVENTION,
        'versions': _versions(),
        'inputs': inputs,
    }
    with open(run_dir / 'manifest.json', 'w', encoding='utf-8') as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
    (run_dir / 'config.ini').write_text(config.to_ini(), encoding='utf-8')
    return manifest


def _write_language_scores(report, path):
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        handle.write('language,macro_f1,runtime_s,gflops,total\n')
        for language, breakdown in report.language_scores.items():
            inputs = breakdown.inputs
            handle.write(f'{language.value},{inputs.avg_f1:.4f},{inputs.avg_runtime_s:.4f},'
                         f'{inputs.avg_gflops:.4f},{breakdown.total:.4f}\n')


def run_experiment(config, run_root, measure=None):
    """
    Split, train, evaluate, cost and score one configuration for all three languages.

    Outputs go to ``<run_root>/<config hash>/``: metrics.csv, cost.csv,
    runtime_<language>.csv, score.csv, language_scores.csv, models/,
    pairs/ (when num_iterations is set), manifest.json and config.ini.

    Args:
        config: ExperimentConfig
        run_root: root directory for run directories
        measure: override the config's runtime measurement switch

    Returns:
        ExperimentReport
    """
    if measure is None:
        measure = config.get('measure') != 'off'
    run_dir = Path(run_root) / config.config_hash
    run_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f'Running {config.display_name} (config {config.config_hash}, seed {config.seed})')

    try:
        sentences = load_sentences(config)
        missing = [lang.value for lang in Language if not any(s.language == lang for s in sentences)]
        if missing:
            raise WrongLanguageCount(f'Corpus has no sentences for {", ".join(missing)}', missing=missing)
        split = stratified_split(sentences, ratio=config.get('split_ratio') or 0.8, seed=config.seed)

        results = {}
        for language in Language:
            train, test = split.for_language(language)
            try:
                results[language] = _run_language(config, language, train, test, run_dir, measure)
            except BenchmarkError as e:
                e.context.setdefault('language', language.value)
                raise

        report_f1 = aggregate({lang: r.label_scores for lang, r in results.items()},
                              mode=config.get('f1_aggregation') or 'flat')
        cost = cost_report(
            {lang: r.runtime_s for lang, r in results.items()},
            {lang: r.gflops for lang, r in results.items()},
            flops={lang: {'encoder': r.encoder_flops, 'head': r.head_flops} for lang, r in results.items()},
            gflops_aggregation=config.get('gflops_aggregation') or 'mean',
        )
        score = submission_score(SubmissionInputs(report_f1.avg_f1, cost.avg_runtime, cost.avg_gflops),
                                 config.weights)
        language_scores = {
            lang: submission_score(SubmissionInputs(r.macro_f1, r.runtime_s, r.gflops), config.weights)
            for lang, r in results.items()
        }
    except BenchmarkError as e:
        e.context.setdefault('config_hash', config.config_hash)
        raise

    report = ExperimentReport(config, run_dir, results, report_f1, cost, score, language_scores)
    write_metrics_csv(report_f1, run_dir / 'metrics.csv')
    write_cost_csv(cost, run_dir / 'cost.csv')
    write_leaderboard_csv([report.named_score()], run_dir / 'score.csv')
    _write_language_scores(report, run_dir / 'language_scores.csv')
    write_manifest(config, run_dir)

    logger.info(f'{config.display_name}: avg F1 {report_f1.avg_f1:.4f}, runtime {cost.avg_runtime:.4f}s, '
                f'{cost.avg_gflops:.4f} GFLOPS, score {score.total:.4f}')
    return report


def train_models(config, output_dir):
    """Train on the configured split and save one model per language; returns the model paths."""
    sentences = load_sentences(config)
    split = stratified_split(sentences, ratio=config.get('split_ratio') or 0.8, seed=config.seed)
    paths = {}
    for language in split.languages():
        train, _ = split.for_language(language)
        featurizer, classifier = train_language(config, language, train)
        paths[language] = save_model(Path(output_dir) / f'{language.value}.json', classifier, language,
                                     taxonomy_for(language).labels, featurizer)
    logger.info(f'Saved {len(paths)} models to {output_dir}')
    return paths


def evaluate_models(model_paths, sentences, mode='flat'):
    """
    Score saved models on labeled sentences.

    Args:
        model_paths: model files, one per language
        sentences: labeled CommentSentence list covering the three languages
        mode: avg_F1 aggregation

    Returns:
        AggregateReport
    """
    per_language = {}
    for path in model_paths:
        language, _, classifier, featurizer = load_model(path)
        test = [s for s in sentences if s.language == language]
        predictions = ovr_predict(classifier, featurizer.transform(test)) if test else []
        per_language[language] = evaluate_language(language, [s.labels for s in test], predictions)
    return aggregate(per_language, mode=mode)


@dataclass(frozen=True)
class GridSpec:
    """Head family plus the swept config keys; points are the cartesian product."""
    family: str
    params: Tuple[Tuple[str, Tuple], ...]

    def __post_init__(self):
        if self.family not in HEAD_PARAM_KEYS:
            raise ValueError(f'Unknown head family "{self.family}"')
        unknown = [key for key, _ in self.params if key not in config_keys()]
        if unknown:
            raise ValueError(f'Unknown grid keys: {", ".join(unknown)}')

    @classmethod
    def of(cls, family, **params):
        return cls(family, tuple((key, tuple(values)) for key, values in params.items()))

    @classmethod
    def published(cls, family, with_iterations=False):
        """The sweeps used for the published comparison: C, kernel and max_depth grids."""
        c_values = (0.001, 0.01, 0.1, 1.0)
        sweeps = {
            'logistic': {'C': c_values},
            'svm': {'C': c_values, 'kernel': ('linear', 'poly', 'rbf', 'sigmoid')},
            'forest': {'max_depth': tuple(range(3, 21))},
            # boosted starts at 2: one published boosted row uses depth 2
            'boosted': {'max_depth': tuple(range(2, 21))},
            'naive_bayes': {'alpha': (1.0,)},
        }[family]
        if with_iterations:
            sweeps['num_iterations'] = (20, 40, 60)
        return cls.of(family, **sweeps)

    @classmethod
    def parse(cls, family, text):
        """Parse ``key=v1,v2;key=v3`` into a grid."""
        params = []
        for part in (p.strip() for p in (text or '').split(';')):
            if not part:
                continue
            if '=' not in part:
                raise ValueError(f'Expected key=v1,v2 in grid, got "{part}"')
            key, values = part.split('=', 1)
            params.append((key.strip(), tuple(v.strip() for v in values.split(',') if v.strip())))
        return cls(family, tuple(params))

    @property
    def keys(self):
        return [key for key, _ in self.params]

    def points(self):
        if not self.params or any(not values for _, values in self.params):
            return []
        return [dict(zip(self.keys, combo)) for combo in itertools.product(*(v for _, v in self.params))]


@dataclass
class GridResult:
    leaderboard: List[NamedScore]
    reports: List[Optional[ExperimentReport]]
    path: Path


def _point_name(config, point):
    extra = [f'{key}: {value}' for key, value in point.items() if key not in HEAD_PARAM_KEYS[config.head.family]]
    return ', '.join([config.head.display_name] + extra)


def run_grid(grid, base_config, run_root, app_config=None, workers=1, measure=None):
    """
    Run every grid point and rank the results.

    Points run in a thread pool; runtime measurement stays serialized by the
    cost module's lock. A failing point becomes a ``failed`` leaderboard row.

    Raises:
        ValueError: the grid has no points
        GridFailed: every point failed
    """
    points = grid.points()
    if not points:
        raise ValueError('Grid has no points')

    head_keys = HEAD_PARAM_KEYS[grid.family]

    def run_point(point):
        name = ', '.join(f'{k}: {v}' for k, v in point.items())
        try:
            config = base_config.with_overrides(
                app_config, swept=[k for k in point if k in head_keys], head=grid.family, **point)
            name = _point_name(config, point)
            report = run_experiment(config, run_root, measure=measure)
            return NamedScore(name, report.score), report
        except (BenchmarkError, ValueError) as e:
            logger.warning(f'Grid point {name} failed: {e}')
            return NamedScore(name, None, status='failed', error=str(e)), None

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        outcomes = list(executor.map(run_point, points))

    scores = [score for score, _ in outcomes]
    if all(score.failed for score in scores):
        raise GridFailed(f'All {len(scores)} grid points failed',
                         errors={s.name: s.error for s in scores})

    leaderboard = rank(scores)
    digest = hashlib.sha256(_canonical([base_config.config_hash, grid.family,
                                        [list(p) for p in grid.params]]).encode('utf-8')).hexdigest()[:12]
    grid_dir = Path(run_root) / f'grid-{digest}'
    grid_dir.mkdir(parents=True, exist_ok=True)
    path = write_leaderboard_csv(leaderboard, grid_dir / 'leaderboard.csv')
    logger.info(f'Grid of {len(points)} points done, {sum(s.failed for s in scores)} failed; '
                f'best {leaderboard[0].name}')
    return GridResult(leaderboard, [report for _, report in outcomes], path)
