"""Command-line interface, registered on the Flask app's ``flask`` command group."""
import csv
import json
import sys
from pathlib import Path

import click
from flask import current_app

from app.errors import BenchmarkError
from app.forms import config_keys, load_config_values
from app.logging_config import get_logger
from app.models import Language, PairPlan
from app.services.corpus import (
    ColumnMap,
    corpus_summary,
    load_corpus,
    split_summary,
    stratified_split,
    write_corpus,
    write_summary_csv,
)
from app.services.experiment import (
    ExperimentConfig,
    GridSpec,
    evaluate_models,
    run_experiment,
    run_grid,
    train_models,
)
from app.services.metrics import write_metrics_csv
from app.services.pairgen import export_pairs, generate_pairs
from app.services.score import (
    NamedScore,
    ScoreWeights,
    SubmissionInputs,
    breakdown_export,
    published_results,
    reproduce_published,
    submission_score,
)
from app.services.synthetic import write_synthetic_corpus

logger = get_logger(__name__)


def _fail(error):
    """Print the structured error on stderr and exit with status 1."""
    logger.error(f'{type(error).__name__}: {error}')
    payload = error.to_dict() if isinstance(error, BenchmarkError) else {
        'success': False, 'error': type(error).__name__, 'message': str(error)}
    click.echo(json.dumps(payload, default=str), err=True)
    sys.exit(1)


def config_options(command):
    """Add ``--config`` plus one override option per config key."""
    for key in reversed(config_keys()):
        flag = '--C' if key == 'C' else f'--{key.replace("_", "-")}'
        command = click.option(flag, key, default=None, help=f'Override [{key}]')(command)
    return click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
                        help='Experiment config (INI)')(command)


def _experiment_config(config_path, overrides):
    values = load_config_values(config_path, {k: v for k, v in overrides.items() if k in config_keys()})
    return ExperimentConfig.from_values(values, current_app.config)


def _sentences(path, fmt, label_columns, label_list_column, language_column, language):
    column_map = None
    if fmt == 'csv':
        column_map = ColumnMap.from_mapping({
            'label_columns': label_columns,
            'label_list_column': label_list_column,
            'language_column': None if language else language_column,
            'language': language,
        })
    return load_corpus(path, format=fmt, column_map=column_map)


def register_commands(app):
    """Attach the benchmark commands to ``app.cli``."""

    @app.cli.command()
    @click.argument('input_path', required=False, type=click.Path(exists=True, dir_okay=False))
    @click.option('-o', '--output', required=True, type=click.Path(dir_okay=False), help='Canonical JSONL output')
    @click.option('--format', 'fmt', type=click.Choice(['jsonl', 'csv']), default='jsonl')
    @click.option('--label-columns', default='', help='Comma-separated one-hot label columns (csv)')
    @click.option('--label-list-column', default=None, help='Column holding a label list (csv)')
    @click.option('--language-column', default='language')
    @click.option('--language', default=None, help='Fixed language for every csv row')
    @click.option('--summary', type=click.Path(dir_okay=False), help='Write per-label counts as CSV')
    @click.option('--synthetic', is_flag=True, help='Write the separable three-language fixture instead')
    @click.option('--seed', default=0, type=int)
    def ingest(input_path, output, fmt, label_columns, label_list_column, language_column, language,
               summary, synthetic, seed):
        """Validate a corpus and write it as canonical JSONL."""
        try:
            if synthetic:
                sentences = write_synthetic_corpus(output, seed=seed)
            else:
                if not input_path:
                    raise click.UsageError('Give an input corpus or --synthetic')
                sentences = _sentences(input_path, fmt, label_columns, label_list_column,
                                       language_column, language)
                write_corpus(sentences, output)
            counts = corpus_summary(sentences)
            if summary:
                write_summary_csv(counts, summary)
        except (BenchmarkError, ValueError) as e:
            _fail(e)
        for language_ in Language:
            click.echo(f'{language_.value:7} {counts.sentences[language_]:6} sentences, '
                       f'{counts.multi_label[language_]} multi-label')
        click.echo(f'Wrote {len(sentences)} sentences to {output}')

    @app.cli.command()
    @click.argument('corpus', type=click.Path(exists=True, dir_okay=False))
    @click.option('-o', '--output-dir', required=True, type=click.Path(file_okay=False))
    @click.option('--ratio', default=0.8, type=float, help='Train fraction')
    @click.option('--seed', default=0, type=int)
    def split(corpus, output_dir, ratio, seed):
        """Stratified train/test split of a canonical corpus."""
        try:
            result = stratified_split(load_corpus(corpus), ratio=ratio, seed=seed)
        except (BenchmarkError, ValueError) as e:
            _fail(e)
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_corpus(result.train, out / 'train.jsonl')
        write_corpus(result.test, out / 'test.jsonl')
        for part, summary in split_summary(result).items():
            write_summary_csv(summary, out / f'{part}_summary.csv')
        click.echo(f'train {len(result.train)}, test {len(result.test)} '
                   f'(train fraction {result.train_fraction:.4f})')
        for item in result.degenerate:
            click.echo(f'warning: {item.language.value}/{item.label} has {item.positives} positive(s), '
                       'cannot appear on both sides', err=True)

    @app.cli.command()
    @click.argument('corpus', type=click.Path(exists=True, dir_okay=False))
    @click.option('-o', '--output-dir', required=True, type=click.Path(file_okay=False))
    @click.option('--num-iterations', '--iterations', 'num_iterations', default=20, type=int)
    @click.option('--seed', default=0, type=int)
    def pairs(corpus, output_dir, num_iterations, seed):
        """Export contrastive training pairs per language."""
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        try:
            sentences = load_corpus(corpus)
            plan = PairPlan(num_iterations, seed=seed)
            for language in Language:
                train = [s for s in sentences if s.language == language]
                if not train:
                    continue
                generated = generate_pairs(train, plan)
                export_pairs(generated, out / f'{language.value}.tsv')
                click.echo(f'{language.value:7} {len(generated)} pairs')
        except (BenchmarkError, ValueError) as e:
            _fail(e)

    @app.cli.command()
    @config_options
    @click.option('-o', '--output-dir', required=True, type=click.Path(file_okay=False))
    def train(config_path, output_dir, **overrides):
        """Train one model per language on the train split and save them."""
        try:
            config = _experiment_config(config_path, overrides)
            paths = train_models(config, output_dir)
        except (BenchmarkError, ValueError) as e:
            _fail(e)
        for language, path in paths.items():
            click.echo(f'{language.value:7} {path}')

    @app.cli.command()
    @config_options
    @click.option('--run-root', type=click.Path(file_okay=False), help='Defaults to RUN_ROOT')
    def run(config_path, run_root, **overrides):
        """Run one experiment end to end and print its score."""
        try:
            config = _experiment_config(config_path, overrides)
            report = run_experiment(config, run_root or current_app.config['RUN_ROOT'])
        except (BenchmarkError, ValueError) as e:
            _fail(e)
        for language, result in report.languages.items():
            click.echo(f'{language.value:7} macro F1 {result.macro_f1:.4f}  runtime {result.runtime_s:.4f}s  '
                       f'{result.gflops:.4f} GFLOPS')
        breakdown = report.score
        click.echo(f'avg_f1 {breakdown.inputs.avg_f1:.4f}  avg_runtime {breakdown.inputs.avg_runtime_s:.4f}s  '
                   f'avg_gflops {breakdown.inputs.avg_gflops:.4f}')
        click.echo(f'score {breakdown.total:.4f}')
        click.echo(f'run directory {report.run_dir}')

    @app.cli.command()
    @config_options
    @click.option('--family', required=True, type=click.Choice(['logistic', 'svm', 'forest', 'boosted',
                                                                 'naive_bayes']))
    @click.option('--sweep', default=None, help='Grid as key=v1,v2;key=v3')
    @click.option('--published', is_flag=True, help='Use the published sweep for the family')
    @click.option('--with-iterations', is_flag=True, help='Also sweep num_iterations over 20, 40, 60')
    @click.option('--workers', default=None, type=int, help='Defaults to GRID_WORKERS')
    @click.option('--run-root', type=click.Path(file_okay=False))
    def grid(config_path, family, sweep, published, with_iterations, workers, run_root, **overrides):
        """Run a hyperparameter grid and write the ranked leaderboard."""
        try:
            if published:
                spec = GridSpec.published(family, with_iterations=with_iterations)
            else:
                spec = GridSpec.parse(family, sweep)
            config = _experiment_config(config_path, overrides)
            result = run_grid(spec, config, run_root or current_app.config['RUN_ROOT'],
                              app_config=current_app.config,
                              workers=workers or current_app.config.get('GRID_WORKERS', 1))
        except (BenchmarkError, ValueError) as e:
            _fail(e)
        for position, entry in enumerate(result.leaderboard, start=1):
            total = 'failed' if entry.failed else f'{entry.breakdown.total:.4f}'
            click.echo(f'{position:3}. {entry.name:40} {total}')
        click.echo(f'leaderboard {result.path}')

    @app.cli.command()
    @click.argument('models', nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
    @click.option('--corpus', required=True, type=click.Path(exists=True, dir_okay=False),
                  help='Labeled test sentences (JSONL)')
    @click.option('--aggregation', type=click.Choice(['flat', 'language_macro']), default='flat')
    @click.option('-o', '--output', type=click.Path(dir_okay=False), help='Write metrics CSV')
    def evaluate(models, corpus, aggregation, output):
        """Score saved models on a labeled corpus."""
        try:
            report = evaluate_models(models, load_corpus(corpus), mode=aggregation)
        except (BenchmarkError, ValueError) as e:
            _fail(e)
        if output:
            write_metrics_csv(report, output)
        for language, value in report.language_f1.items():
            click.echo(f'{language.value:7} macro F1 {value:.4f}')
        click.echo(f'avg_f1 {report.avg_f1:.4f}')

    @app.cli.command()
    @click.option('--f1', 'avg_f1', required=True, type=float)
    @click.option('--runtime', 'avg_runtime', required=True, type=float, help='Seconds')
    @click.option('--gflops', 'avg_gflops', required=True, type=float)
    @click.option('--verbose', is_flag=True, help='Also print the three terms')
    def score(avg_f1, avg_runtime, avg_gflops, verbose):
        """Submission score of an (F1, runtime, GFLOPS) triple."""
        try:
            breakdown = submission_score(SubmissionInputs(avg_f1, avg_runtime, avg_gflops),
                                         ScoreWeights.from_config(current_app.config))
        except (BenchmarkError, ValueError) as e:
            _fail(e)
        if verbose:
            click.echo(f'f1_term {breakdown.f1_term:.4f}')
            click.echo(f'runtime_term {breakdown.runtime_term:.4f}')
            click.echo(f'gflops_term {breakdown.gflops_term:.4f}')
        click.echo(f'{breakdown.total:.4f}')

    @app.cli.command('export-breakdown')
    @click.argument('leaderboard', required=False, type=click.Path(exists=True, dir_okay=False))
    @click.option('-o', '--output', required=True, type=click.Path(dir_okay=False))
    @click.option('--published', is_flag=True, help='Export the published result rows')
    def export_breakdown(leaderboard, output, published):
        """Full-precision score terms for a leaderboard CSV or the published rows."""
        weights = ScoreWeights.from_config(current_app.config)
        try:
            if published:
                entries = [NamedScore(row.name, submission_score(row.inputs, weights))
                           for row in published_results()]
            elif leaderboard:
                entries = []
                with open(leaderboard, encoding='utf-8', newline='') as handle:
                    for row in csv.DictReader(handle):
                        if row.get('status', 'ok') != 'ok':
                            continue
                        inputs = SubmissionInputs(float(row['avg_f1']), float(row['avg_runtime_s']),
                                                  float(row['avg_gflops']))
                        entries.append(NamedScore(row['name'], submission_score(inputs, weights)))
            else:
                raise click.UsageError('Give a leaderboard CSV or --published')
        except (BenchmarkError, ValueError, KeyError) as e:
            _fail(e)
        breakdown_export(entries, output)
        click.echo(f'Wrote {len(entries)} rows to {output}')

    @app.cli.command()
    @click.option('--stage', type=click.Choice(['stage1', 'stage2', 'summary']), default=None)
    @click.option('--tolerance', default=5e-4, type=float)
    def reproduce(stage, tolerance):
        """Recompute the published scores and report deviations."""
        reproductions = reproduce_published(ScoreWeights.from_config(current_app.config), stage)
        outside = 0
        for item in reproductions:
            flag = '' if abs(item.deviation) <= tolerance else '  !'
            outside += bool(flag)
            click.echo(f'{item.row.name:70} {item.row.score:8.4f} {item.breakdown.total:8.4f} '
                       f'{item.deviation:+.1e}{flag}')
        click.echo(f'{len(reproductions) - outside}/{len(reproductions)} within {tolerance}')
        if outside:
            sys.exit(1)
