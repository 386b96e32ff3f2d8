"""Validation of experiment configuration files and CLI overrides."""
import configparser
import os

from werkzeug.datastructures import MultiDict
from wtforms import FloatField, Form, IntegerField, SelectField, StringField
from wtforms.validators import NumberRange, Optional, ValidationError

from app.errors import ConfigError
from app.services.cost import ENCODER_PRESETS, GFLOPS_AGGREGATIONS, SEQ_POLICIES
from app.services.heads.ovr import FAMILIES
from app.services.heads.svm import KERNELS
from app.services.metrics import AGGREGATIONS as F1_AGGREGATIONS

FEATURIZERS = ('hashed', 'bow', 'embeddings')

# Config file section of every field; keys are unique across sections
SECTIONS = {
    'corpus': ('corpus', 'java_corpus', 'python_corpus', 'pharo_corpus', 'corpus_format',
               'label_columns', 'label_list_column', 'language_column', 'split_ratio'),
    'featurize': ('featurizer', 'min_df', 'hashed_dim', 'embeddings', 'encoder', 'encoder_spec'),
    'heads': ('head', 'C', 'kernel', 'gamma', 'degree', 'coef0', 'max_depth', 'n_trees', 'rounds',
              'shrinkage', 'alpha', 'threshold', 'max_iters', 'tol'),
    'cost': ('seq_policy', 'seq_len', 'warmup', 'repetitions', 'aggregation', 'gflops_aggregation',
             'measure'),
    'score': ('f1_weight', 'runtime_weight', 'gflops_weight', 'runtime_budget', 'gflops_budget',
              'f1_aggregation'),
    'harness': ('name', 'seed', 'num_iterations'),
}


def _choices(values):
    return [(value, value) for value in values]


def _existing_file(form, field):
    if field.data and not os.path.isfile(field.data):
        raise ValidationError(f'File not found: {field.data}')


def _positive(form, field):
    if field.data is not None and field.data <= 0:
        raise ValidationError('Must be greater than 0.')


class ExperimentConfigForm(Form):
    """One experiment: corpus, featurizer, head, cost protocol, score constants and seed."""
    # [corpus]
    corpus = StringField('Corpus', validators=[Optional(), _existing_file])
    java_corpus = StringField('Java corpus', validators=[Optional(), _existing_file])
    python_corpus = StringField('Python corpus', validators=[Optional(), _existing_file])
    pharo_corpus = StringField('Pharo corpus', validators=[Optional(), _existing_file])
    corpus_format = SelectField('Corpus format', choices=_choices(('jsonl', 'csv')), default='jsonl')
    label_columns = StringField('One-hot label columns', validators=[Optional()])
    label_list_column = StringField('Label list column', validators=[Optional()])
    language_column = StringField('Language column', validators=[Optional()], default='language')
    split_ratio = FloatField('Train ratio', default=0.8,
                             validators=[Optional(), NumberRange(min=0.0, max=1.0)])

    # [featurize]
    featurizer = SelectField('Featurizer', choices=_choices(FEATURIZERS), default='hashed')
    min_df = IntegerField('Minimum document frequency', default=1, validators=[Optional(), NumberRange(min=1)])
    hashed_dim = IntegerField('Hashed dimension', default=384, validators=[Optional(), NumberRange(min=1)])
    embeddings = StringField('Embedding table', validators=[Optional(), _existing_file])
    encoder = SelectField('Encoder preset', choices=_choices(ENCODER_PRESETS), default='paraphrase-MiniLM-L3-v2')
    encoder_spec = StringField('Encoder spec file', validators=[Optional(), _existing_file])

    # [heads]
    head = SelectField('Head', choices=_choices(FAMILIES), default='logistic')
    C = FloatField('C', validators=[Optional(), _positive])
    kernel = SelectField('Kernel', choices=_choices(KERNELS), default='rbf')
    gamma = FloatField('Gamma', validators=[Optional(), _positive])
    degree = IntegerField('Degree', validators=[Optional(), NumberRange(min=1)])
    coef0 = FloatField('coef0', validators=[Optional()])
    max_depth = IntegerField('Max depth', validators=[Optional(), NumberRange(min=1)])
    n_trees = IntegerField('Trees', validators=[Optional(), NumberRange(min=1)])
    rounds = IntegerField('Boosting rounds', validators=[Optional(), NumberRange(min=0)])
    shrinkage = FloatField('Shrinkage', validators=[Optional(), NumberRange(min=0.0, max=1.0)])
    alpha = FloatField('Smoothing alpha', validators=[Optional(), _positive])
    threshold = FloatField('Decision threshold', validators=[Optional(), NumberRange(min=0.0, max=1.0)])
    max_iters = IntegerField('Max iterations', validators=[Optional(), NumberRange(min=1)])
    tol = FloatField('Tolerance', validators=[Optional(), _positive])

    # [cost]
    seq_policy = SelectField('Sequence length policy', choices=_choices(SEQ_POLICIES), default='actual')
    seq_len = IntegerField('Fixed sequence length', validators=[Optional(), NumberRange(min=1)])
    warmup = IntegerField('Warmup runs', validators=[Optional(), NumberRange(min=0)])
    repetitions = IntegerField('Measured repetitions', validators=[Optional(), NumberRange(min=3)])
    aggregation = SelectField('Runtime aggregation', choices=_choices(('median', 'mean')), default='median')
    gflops_aggregation = SelectField('GFLOPS aggregation', choices=_choices(GFLOPS_AGGREGATIONS),
                                     default='mean')
    measure = SelectField('Measure runtime', choices=_choices(('on', 'off')), default='on')

    # [score]
    f1_weight = FloatField('F1 weight', validators=[Optional()])
    runtime_weight = FloatField('Runtime weight', validators=[Optional()])
    gflops_weight = FloatField('GFLOPS weight', validators=[Optional()])
    runtime_budget = FloatField('Runtime budget (s)', validators=[Optional(), _positive])
    gflops_budget = FloatField('GFLOPS budget', validators=[Optional(), _positive])
    f1_aggregation = SelectField('F1 aggregation', choices=_choices(F1_AGGREGATIONS), default='flat')

    # [harness]
    name = StringField('Run name', validators=[Optional()])
    seed = IntegerField('Seed', default=0, validators=[Optional()])
    num_iterations = IntegerField('Pair iterations', validators=[Optional(), NumberRange(min=0)])

    def validate_split_ratio(self, field):
        if field.data is not None and not 0.0 < field.data < 1.0:
            raise ValidationError('Train ratio must be strictly between 0 and 1.')

    def validate_head(self, field):
        if field.data == 'naive_bayes' and self.featurizer.data != 'bow':
            raise ValidationError('Naive Bayes needs the bow featurizer.')

    def validate(self, **kwargs):
        valid = super().validate(**kwargs)
        # Checks on optional fields that depend on other fields; Optional() skips inline validators
        checks = [
            (self.corpus, not (self.corpus.data or self.java_corpus.data or self.python_corpus.data
                               or self.pharo_corpus.data),
             'Give a corpus file or per-language corpus files.'),
            (self.embeddings, self.featurizer.data == 'embeddings' and not self.embeddings.data,
             'The embeddings featurizer needs an embedding table.'),
            (self.label_columns, self.corpus_format.data == 'csv'
             and not (self.label_columns.data or self.label_list_column.data),
             'CSV corpora need label_columns or label_list_column.'),
            (self.seq_len, self.seq_len.data is not None and self.seq_policy.data != 'fixed',
             'seq_len only applies to the fixed sequence length policy.'),
        ]
        for field, failed, message in checks:
            if failed:
                field.errors = list(field.errors) + [message]
                valid = False
        return valid


def config_keys():
    """Every config key in section order."""
    return [key for keys in SECTIONS.values() for key in keys]


def read_config_file(path):
    """
    Flatten an INI experiment config into a key/value dict.

    Raises:
        ConfigError: unknown section or key, or a key repeated across sections
    """
    parser = configparser.ConfigParser(interpolation=None)
    # keys are case sensitive (C)
    parser.optionxform = str
    try:
        with open(path, encoding='utf-8') as handle:
            parser.read_file(handle)
    except configparser.Error as e:
        raise ConfigError(f'Cannot parse {path}: {e}') from None

    values = {}
    errors = {}
    for section in parser.sections():
        if section not in SECTIONS:
            errors[section] = [f'Unknown section [{section}]']
            continue
        for key, value in parser.items(section):
            if key not in SECTIONS[section]:
                errors[key] = [f'Unknown key in [{section}]']
            elif key in values:
                errors[key] = ['Key given twice']
            else:
                values[key] = value
    if errors:
        raise ConfigError(f'Invalid config file {path}', errors=errors)
    return values


def validate_config(values):
    """
    Validate flat config values; blank values count as unset.

    Returns:
        ExperimentConfigForm: validated form, ``form.data`` holds typed values

    Raises:
        ConfigError: with per-field messages
    """
    unknown = sorted(set(values) - set(config_keys()))
    if unknown:
        raise ConfigError(f'Unknown config keys: {", ".join(unknown)}',
                          errors={key: ['Unknown key'] for key in unknown})
    formdata = MultiDict([(key, str(value)) for key, value in values.items()
                          if value is not None and str(value).strip() != ''])
    form = ExperimentConfigForm(formdata=formdata)
    if not form.validate():
        raise ConfigError('Invalid experiment configuration', errors=dict(form.errors))
    return form


def load_config_values(path=None, overrides=None):
    """Config file values with CLI overrides applied on top."""
    values = read_config_file(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return values
