"""Inference cost: analytical FLOPs model and wall-clock runtime measurement.

Every count uses the convention 1 multiply-accumulate = 2 FLOPs.
"""
import csv
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from app.errors import ParseError, SeqTooLong, WrongLanguageCount
from app.logging_config import get_logger
from app.models import Language
from app.services.featurize import preprocess
from app.services.heads.base import ConstantHead
from app.services.heads.logistic import LogisticHead
from app.services.heads.svm import SvmHead
from app.services.heads.trees import BoostedHead, ForestHead

logger = get_logger(__name__)

FLOPS_CONVENTION = '1 multiply-accumulate = 2 FLOPs'

# Runtime measurements never overlap inside one process
MEASUREMENT_LOCK = threading.Lock()

SEQ_POLICY_ACTUAL = 'actual'
SEQ_POLICY_FIXED = 'fixed'
SEQ_POLICIES = (SEQ_POLICY_ACTUAL, SEQ_POLICY_FIXED)

AGGREGATIONS = ('median', 'mean')

# Cross-language GFLOPS: mean of the per-language totals, or their sum
GFLOPS_MEAN = 'mean'
GFLOPS_SUM = 'sum'
GFLOPS_AGGREGATIONS = (GFLOPS_MEAN, GFLOPS_SUM)

# Extra FLOPs per support vector on top of the 2*dim dot product / distance
KERNEL_OVERHEAD = {'linear': 0, 'poly': 3, 'rbf': 2, 'sigmoid': 3}


@dataclass(frozen=True)
class FlopCount:
    flops: int = 0

    def __post_init__(self):
        if self.flops < 0:
            raise ValueError(f'FLOP count cannot be negative: {self.flops}')

    @property
    def gflops(self):
        return self.flops / 1e9

    def __add__(self, other):
        return FlopCount(self.flops + other.flops)

    def __mul__(self, factor):
        return FlopCount(self.flops * int(factor))

    __rmul__ = __mul__


@dataclass(frozen=True)
class EncoderSpec:
    """Transformer encoder shape; speed (sentences/s) and size (MB) are informational."""
    name: str
    layers: int
    hidden_dim: int
    ffn_dim: int
    heads: int
    max_seq: int
    out_dim: int
    speed: Optional[int] = None
    size_mb: Optional[int] = None

    def __post_init__(self):
        for name in ('layers', 'hidden_dim', 'ffn_dim', 'heads', 'max_seq', 'out_dim'):
            if getattr(self, name) < 1:
                raise ValueError(f'Encoder {self.name}: {name} must be positive, got {getattr(self, name)}')


# Architecture constants of the public sentence-transformers checkpoints
ENCODER_PRESETS = {
    spec.name: spec for spec in (
        EncoderSpec('paraphrase-MiniLM-L3-v2', 3, 384, 1536, 12, 128, 384, speed=19000, size_mb=61),
        EncoderSpec('all-MiniLM-L6-v2', 6, 384, 1536, 12, 256, 384, speed=14200, size_mb=80),
        EncoderSpec('paraphrase-albert-small-v2', 6, 768, 3072, 12, 256, 768, speed=5000, size_mb=43),
        EncoderSpec('all-distilroberta-v1', 6, 768, 3072, 12, 512, 768, speed=4000, size_mb=290),
        EncoderSpec('all-mpnet-base-v2', 12, 768, 3072, 12, 384, 768, speed=2800, size_mb=420),
    )
}

_SPEC_KEYS = ('name', 'layers', 'hidden_dim', 'ffn_dim', 'heads', 'max_seq', 'out_dim')


def encoder_preset(name):
    try:
        return ENCODER_PRESETS[name]
    except KeyError:
        raise ValueError(f'Unknown encoder preset "{name}", expected one of '
                         f'{", ".join(ENCODER_PRESETS)}') from None


def load_encoder_spec(path):
    """
    Read a ``key=value`` encoder spec file.

    Keys: name, layers, hidden_dim, ffn_dim, heads, max_seq, out_dim and
    optionally speed, size_mb. Blank lines and ``#`` comments are ignored.
    """
    values = {}
    with open(path, encoding='utf-8') as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith('#'):
                continue
            if '=' not in line:
                raise ParseError(f'Expected key=value, got "{line}"', line=line_number)
            key, value = (part.strip() for part in line.split('=', 1))
            values[key] = (value, line_number)

    missing = [key for key in _SPEC_KEYS if key not in values]
    if missing:
        raise ParseError(f'Encoder spec {path} is missing {", ".join(missing)}')
    kwargs = {'name': values['name'][0]}
    for key in _SPEC_KEYS[1:] + ('speed', 'size_mb'):
        if key not in values:
            continue
        value, line_number = values[key]
        try:
            kwargs[key] = int(value)
        except ValueError:
            raise ParseError(f'{key} must be an integer, got "{value}"', line=line_number) from None
    return EncoderSpec(**kwargs)


def write_encoder_spec(spec, path):
    with open(path, 'w', encoding='utf-8') as handle:
        for key in _SPEC_KEYS + ('speed', 'size_mb'):
            value = getattr(spec, key)
            if value is not None:
                handle.write(f'{key}={value}\n')
    return path


def matmul_flops(m, k, n):
    """(m x k) @ (k x n): m*n outputs of k multiply-accumulates each."""
    if min(m, k, n) < 1:
        raise ValueError(f'Matrix dimensions must be >= 1, got ({m}, {k}, {n})')
    return FlopCount(2 * m * k * n)


def encoder_terms(spec, seq_len):
    """
    Per-layer FLOPs of one sequence, term by term.

    qkv: three L x d by d x d projections; scores: QK^T (L x d by d x L);
    context: scores times V (L x L by L x d); output: L x d by d x d;
    ffn_in / ffn_out: L x d by d x f and L x f by f x d.
    """
    L, d, f = seq_len, spec.hidden_dim, spec.ffn_dim
    return {
        'qkv': 3 * matmul_flops(L, d, d).flops,
        'scores': matmul_flops(L, d, L).flops,
        'context': matmul_flops(L, L, d).flops,
        'output': matmul_flops(L, d, d).flops,
        'ffn_in': matmul_flops(L, d, f).flops,
        'ffn_out': matmul_flops(L, f, d).flops,
    }


def encoder_flops(spec, seq_len, batch=1):
    """
    FLOPs of encoding ``batch`` sequences of length ``seq_len``.

    B * N * (sum of the per-layer terms), plus B * 2 L d out_dim for the
    output projection when the hidden and embedding dimensions differ.

    Raises:
        SeqTooLong: seq_len exceeds the encoder maximum
    """
    if seq_len < 1 or batch < 1:
        raise ValueError(f'seq_len and batch must be >= 1, got {seq_len} and {batch}')
    if seq_len > spec.max_seq:
        raise SeqTooLong(f'Sequence length {seq_len} exceeds {spec.name} maximum {spec.max_seq}',
                         seq_len=seq_len, max_seq=spec.max_seq)
    per_layer = sum(encoder_terms(spec, seq_len).values())
    flops = batch * spec.layers * per_layer
    if spec.hidden_dim != spec.out_dim:
        flops += batch * matmul_flops(seq_len, spec.hidden_dim, spec.out_dim).flops
    return FlopCount(flops)


def sequence_lengths(sentences, spec, policy=SEQ_POLICY_ACTUAL, fixed_length=None):
    """
    Sequence length charged for each sentence.

    ``actual``: token count capped at the encoder maximum (at least 1).
    ``fixed``: ``fixed_length`` (default: the encoder maximum) for every sentence.
    """
    if policy == SEQ_POLICY_ACTUAL:
        return [min(max(1, len(preprocess(s.text))), spec.max_seq) for s in sentences]
    if policy == SEQ_POLICY_FIXED:
        length = fixed_length or spec.max_seq
        if length > spec.max_seq:
            raise SeqTooLong(f'Fixed length {length} exceeds {spec.name} maximum {spec.max_seq}',
                             seq_len=length, max_seq=spec.max_seq)
        return [length] * len(sentences)
    raise ValueError(f'Unknown sequence-length policy "{policy}", expected one of {", ".join(SEQ_POLICIES)}')


def test_set_encoder_flops(spec, lengths):
    """Encoder FLOPs summed over a test set, one sequence per sentence."""
    return FlopCount(sum(encoder_flops(spec, length).flops for length in lengths))


def head_flops(head, dim, nnz=None):
    """
    FLOPs of one binary head scoring one sentence.

    logistic: 2 dim; SVM: |SV| (2 dim + kernel overhead + 2);
    forest/boosting: one comparison per level of each tree; constant: 0.
    ``nnz`` is unused except by Naive Bayes, see ``classifier_flops``.
    """
    if isinstance(head, ConstantHead):
        return FlopCount(0)
    if isinstance(head, LogisticHead):
        return FlopCount(2 * dim)
    if isinstance(head, SvmHead):
        if head.n_support == 0:
            raise ValueError('SVM head has no support vectors')
        return FlopCount(head.n_support * (2 * dim + KERNEL_OVERHEAD[head.kernel] + 2))
    if isinstance(head, (ForestHead, BoostedHead)):
        return FlopCount(sum(tree.depth for tree in head.trees))
    raise ValueError(f'No FLOPs model for head type {type(head).__name__}')


def classifier_flops(classifier, nnz):
    """
    Head FLOPs summed over a test set.

    Args:
        classifier: OneVsRestClassifier
        nnz: non-zero feature count per test sentence (dense featurizers pass dim)

    Returns:
        FlopCount
    """
    if classifier.multiclass is not None:
        classes = len(classifier.multiclass.classes)
        return FlopCount(sum(2 * count * classes for count in nnz))
    per_sentence = sum(head_flops(head, classifier.dim).flops for head in classifier.heads)
    return FlopCount(per_sentence * len(nnz))


@dataclass(frozen=True)
class MeasurementProtocol:
    warmup: int = 1
    repetitions: int = 5
    aggregation: str = 'median'

    def __post_init__(self):
        if self.repetitions < 3:
            raise ValueError(f'Need at least 3 measured repetitions, got {self.repetitions}')
        if self.warmup < 0:
            raise ValueError(f'warmup must be >= 0, got {self.warmup}')
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f'Unknown aggregation "{self.aggregation}", expected median or mean')

    @classmethod
    def from_config(cls, config):
        return cls(warmup=config.get('MEASUREMENT_WARMUP', 1),
                   repetitions=config.get('MEASUREMENT_REPETITIONS', 5),
                   aggregation=config.get('MEASUREMENT_AGGREGATION', 'median'))


@dataclass
class RuntimeMeasurement:
    seconds: float
    samples: List[float]
    protocol: MeasurementProtocol


def measure_runtime(inference: Callable[[], object], protocol=None):
    """
    Time a repeatable inference closure on the monotonic clock.

    Warmup runs are discarded; the measured repetitions are aggregated by the
    protocol's median or mean. Holds ``MEASUREMENT_LOCK`` for the whole run.
    """
    protocol = protocol or MeasurementProtocol()
    samples = []
    with MEASUREMENT_LOCK:
        for _ in range(protocol.warmup):
            inference()
        for _ in range(protocol.repetitions):
            start = time.perf_counter()
            inference()
            samples.append(time.perf_counter() - start)

    if protocol.aggregation == 'median':
        seconds = float(np.median(samples))
    else:
        seconds = float(np.mean(samples))
    logger.debug(f'Measured {seconds:.6f}s ({protocol.aggregation} of {protocol.repetitions})')
    return RuntimeMeasurement(seconds=seconds, samples=samples, protocol=protocol)


def write_samples_csv(measurement, path):
    """Raw samples as rep, seconds."""
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['rep', 'seconds'])
        for rep, seconds in enumerate(measurement.samples):
            writer.writerow([rep, repr(seconds)])
    return path


@dataclass
class CostReport:
    """Per-language runtime seconds and GFLOPS with their cross-language aggregates."""
    runtimes: Dict[Language, float]
    gflops: Dict[Language, float]
    flops: Dict[Language, Dict[str, int]] = field(default_factory=dict)
    gflops_aggregation: str = GFLOPS_MEAN

    @property
    def avg_runtime(self):
        return sum(self.runtimes.values()) / len(self.runtimes)

    @property
    def avg_gflops(self):
        total = sum(self.gflops.values())
        return total if self.gflops_aggregation == GFLOPS_SUM else total / len(self.gflops)


def _by_language(values, what):
    parsed = {Language.parse(language): float(value) for language, value in values.items()}
    if set(parsed) != set(Language) or len(values) != len(Language):
        raise WrongLanguageCount(f'{what} must cover exactly java, python and pharo, got {len(values)}',
                                 languages=sorted(str(getattr(k, 'value', k)) for k in values))
    return parsed


def cost_report(runtimes, gflops, flops=None, gflops_aggregation=GFLOPS_MEAN):
    """
    Combine per-language totals into a CostReport.

    Runtime is always the mean over the languages; GFLOPS is their mean or,
    with ``gflops_aggregation="sum"``, their total.

    Raises:
        WrongLanguageCount: either mapping does not hold exactly the three languages
    """
    if gflops_aggregation not in GFLOPS_AGGREGATIONS:
        raise ValueError(f'Unknown GFLOPS aggregation "{gflops_aggregation}", expected mean or sum')
    return CostReport(runtimes=_by_language(runtimes, 'Runtimes'),
                      gflops=_by_language(gflops, 'GFLOPS'),
                      flops={Language.parse(k): v for k, v in (flops or {}).items()},
                      gflops_aggregation=gflops_aggregation)


def write_cost_csv(report, path):
    """Per-language runtime and GFLOPS rows plus the cross-language row."""
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        handle.write(f'# {FLOPS_CONVENTION}\n')
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['language', 'runtime_s', 'gflops', 'encoder_flops', 'head_flops'])
        for language in Language:
            detail = report.flops.get(language, {})
            writer.writerow([language.value, f'{report.runtimes[language]:.6f}',
                             f'{report.gflops[language]:.6f}',
                             detail.get('encoder', ''), detail.get('head', '')])
        writer.writerow([f'cross_language ({report.gflops_aggregation} gflops)',
                         f'{report.avg_runtime:.6f}', f'{report.avg_gflops:.6f}', '', ''])
    return path
