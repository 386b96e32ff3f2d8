"""
Unit tests for the cost model.

Tests cover:
- Matrix multiply and encoder FLOP counts against an instrumented forward pass
- Sequence-length policies and encoder spec files
- Head FLOPs per family
- Runtime measurement protocol
- Cross-language cost aggregation and its CSV export
"""

import itertools

import numpy as np
import pytest

from app.errors import ParseError, SeqTooLong, WrongLanguageCount
from app.models import CommentSentence, Language
from app.services.cost import (
    ENCODER_PRESETS,
    EncoderSpec,
    FlopCount,
    MeasurementProtocol,
    classifier_flops,
    cost_report,
    encoder_flops,
    encoder_preset,
    head_flops,
    load_encoder_spec,
    matmul_flops,
    measure_runtime,
    sequence_lengths,
    test_set_encoder_flops as encoder_flops_over_test_set,
    write_cost_csv,
    write_encoder_spec,
    write_samples_csv,
)
from app.services.heads.base import ConstantHead
from app.services.heads.logistic import LogisticHead
from app.services.heads.ovr import HeadSpec, OneVsRestClassifier
from app.services.heads.svm import SvmHead
from app.services.heads.trees import train_forest


class CountingForward:
    """Naive transformer layer that counts every multiply-accumulate."""

    def __init__(self):
        self.macs = 0

    def matmul(self, A, B):
        m, k = len(A), len(A[0])
        n = len(B[0])
        out = [[0.0] * n for _ in range(m)]
        for i in range(m):
            for j in range(n):
                for t in range(k):
                    out[i][j] += A[i][t] * B[t][j]
                    self.macs += 1
        return out

    @staticmethod
    def transpose(A):
        return [list(row) for row in zip(*A)]

    def layer(self, X, rng, d, f):
        def weights(rows, cols):
            return rng.normal(size=(rows, cols)).tolist()

        Q = self.matmul(X, weights(d, d))
        K = self.matmul(X, weights(d, d))
        V = self.matmul(X, weights(d, d))
        scores = self.matmul(Q, self.transpose(K))
        context = self.matmul(scores, V)
        out = self.matmul(context, weights(d, d))
        hidden = self.matmul(out, weights(d, f))
        return self.matmul(hidden, weights(f, d))

    def encode(self, spec, seq_len, rng):
        X = rng.normal(size=(seq_len, spec.hidden_dim)).tolist()
        for _ in range(spec.layers):
            X = self.layer(X, rng, spec.hidden_dim, spec.ffn_dim)
        if spec.hidden_dim != spec.out_dim:
            X = self.matmul(X, rng.normal(size=(spec.hidden_dim, spec.out_dim)).tolist())
        return X


def tiny_spec(layers=1, d=1, f=1, max_seq=8, out_dim=None):
    return EncoderSpec('tiny', layers, d, f, 1, max_seq, out_dim or d)


class TestMatmulFlops:
    """Test the matrix multiply convention."""

    @pytest.mark.parametrize("shape,expected", [
        ((2, 3, 4), 48),
        ((1, 1, 1), 2),
        ((128, 384, 384), 2 * 128 * 384 * 384),
    ])
    def test_counts(self, shape, expected):
        assert matmul_flops(*shape).flops == expected

    def test_zero_dimension_rejected(self):
        with pytest.raises(ValueError):
            matmul_flops(0, 3, 4)

    def test_flop_count_arithmetic(self):
        assert (FlopCount(3) + FlopCount(4)).flops == 7
        assert (3 * FlopCount(5)).flops == 15
        assert FlopCount(2_000_000_000).gflops == 2.0
        with pytest.raises(ValueError):
            FlopCount(-1)


class TestEncoderFlops:
    """Test the analytical encoder FLOPs model."""

    def test_all_ones_encoder(self):
        assert encoder_flops(tiny_spec(), seq_len=1).flops == 16

    def test_matches_instrumented_forward(self):
        rng = np.random.default_rng(0)
        for layers, d, f, L in itertools.product((1, 2), (1, 2, 4), (1, 3, 4), (1, 2, 4)):
            spec = tiny_spec(layers=layers, d=d, f=f)
            forward = CountingForward()
            forward.encode(spec, L, rng)
            assert encoder_flops(spec, L).flops == 2 * forward.macs, (layers, d, f, L)

    def test_projection_counted_when_dims_differ(self):
        rng = np.random.default_rng(1)
        spec = tiny_spec(layers=1, d=2, f=3, out_dim=4)
        forward = CountingForward()
        forward.encode(spec, 3, rng)
        assert encoder_flops(spec, 3).flops == 2 * forward.macs

    @pytest.mark.parametrize("batch", [1, 2, 4])
    def test_linear_in_batch(self, batch):
        spec = encoder_preset('paraphrase-MiniLM-L3-v2')
        assert encoder_flops(spec, 32, batch=batch).flops == batch * encoder_flops(spec, 32).flops

    def test_sequence_too_long(self):
        spec = encoder_preset('paraphrase-MiniLM-L3-v2')
        with pytest.raises(SeqTooLong) as exc:
            encoder_flops(spec, spec.max_seq + 1)
        assert exc.value.context['max_seq'] == 128

    def test_presets(self):
        assert len(ENCODER_PRESETS) == 5
        mpnet = encoder_preset('all-mpnet-base-v2')
        assert (mpnet.layers, mpnet.hidden_dim, mpnet.out_dim) == (12, 768, 768)
        with pytest.raises(ValueError, match='Unknown encoder preset'):
            encoder_preset('bert-huge')

    def test_test_set_total(self):
        spec = tiny_spec(d=2, f=2)
        total = encoder_flops_over_test_set(spec, [1, 2, 2])
        assert total.flops == encoder_flops(spec, 1).flops + 2 * encoder_flops(spec, 2).flops


class TestSequenceLengths:
    """Test the sequence-length policies."""

    SENTENCES = [
        CommentSentence('a', Language.JAVA, '// Returns the sum', frozenset([5])),
        CommentSentence('b', Language.JAVA, '', frozenset([5])),
        CommentSentence('c', Language.JAVA, ' '.join(['word'] * 20), frozenset([5])),
    ]

    def test_actual_policy(self):
        assert sequence_lengths(self.SENTENCES, tiny_spec(max_seq=8)) == [3, 1, 8]

    def test_fixed_policy(self):
        assert sequence_lengths(self.SENTENCES, tiny_spec(max_seq=8), policy='fixed') == [8, 8, 8]
        assert sequence_lengths(self.SENTENCES, tiny_spec(max_seq=8), policy='fixed', fixed_length=4) == [4, 4, 4]

    def test_fixed_length_too_long(self):
        with pytest.raises(SeqTooLong):
            sequence_lengths(self.SENTENCES, tiny_spec(max_seq=8), policy='fixed', fixed_length=9)

    def test_unknown_policy(self):
        with pytest.raises(ValueError):
            sequence_lengths(self.SENTENCES, tiny_spec(), policy='padded')


class TestEncoderSpecFile:
    """Test the key=value encoder spec format."""

    def test_round_trip(self, tmp_path):
        spec = encoder_preset('all-MiniLM-L6-v2')
        assert load_encoder_spec(write_encoder_spec(spec, tmp_path / 'enc.txt')) == spec

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / 'enc.txt'
        path.write_text('# custom encoder\nname=mine\nlayers=2\n\nhidden_dim=8\nffn_dim=16\n'
                        'heads=2\nmax_seq=32\nout_dim=8\n', encoding='utf-8')
        assert load_encoder_spec(path) == EncoderSpec('mine', 2, 8, 16, 2, 32, 8)

    def test_missing_key(self, tmp_path):
        path = tmp_path / 'enc.txt'
        path.write_text('name=mine\nlayers=2\n', encoding='utf-8')
        with pytest.raises(ParseError, match='missing'):
            load_encoder_spec(path)

    def test_bad_integer_reports_line(self, tmp_path):
        path = tmp_path / 'enc.txt'
        path.write_text('name=mine\nlayers=two\nhidden_dim=8\nffn_dim=16\nheads=2\nmax_seq=32\nout_dim=8\n',
                        encoding='utf-8')
        with pytest.raises(ParseError) as exc:
            load_encoder_spec(path)
        assert exc.value.line == 2

    def test_non_positive_dimension(self):
        with pytest.raises(ValueError):
            EncoderSpec('bad', 0, 8, 16, 2, 32, 8)


class TestHeadFlops:
    """Test per-head FLOPs."""

    def test_logistic_over_java_labels(self):
        classifier = OneVsRestClassifier(spec=HeadSpec('logistic'), n_labels=7, dim=384,
                                         heads=[LogisticHead.zeros(384) for _ in range(7)],
                                         constant=[False] * 7)
        assert head_flops(classifier.heads[0], 384).flops == 768
        assert classifier_flops(classifier, nnz=[384]).flops == 5376
        assert classifier_flops(classifier, nnz=[384] * 10).flops == 53760

    def test_constant_head_is_free(self):
        assert head_flops(ConstantHead(1.0), 384).flops == 0

    def test_svm_scales_with_support_vectors(self):
        head = SvmHead('rbf', 1.0, 0.5, 3, 0.0, np.zeros((3, 4)), np.ones(3), [1, -1, 1], 0.0)
        assert head_flops(head, 4).flops == 3 * (2 * 4 + 2 + 2)

    def test_svm_without_support_vectors(self):
        head = SvmHead('linear', 1.0, 0.5, 3, 0.0, np.zeros((0, 4)), np.zeros(0), np.zeros(0), 0.0)
        with pytest.raises(ValueError, match='no support vectors'):
            head_flops(head, 4)

    def test_forest_counts_tree_levels(self, separable_2d):
        X, y = separable_2d
        head = train_forest(X, y, max_depth=3, n_trees=4)
        assert head_flops(head, 2).flops == sum(tree.depth for tree in head.trees)

    def test_naive_bayes_uses_non_zero_counts(self, java_sentences):
        from app.services.featurize import BowFeaturizer
        from app.services.heads.ovr import ovr_train

        featurizer = BowFeaturizer().fit(java_sentences)
        classifier = ovr_train(featurizer.transform(java_sentences), [s.labels for s in java_sentences], 7,
                               HeadSpec('naive_bayes'))
        nnz = featurizer.nnz(java_sentences)
        assert classifier_flops(classifier, nnz).flops == sum(2 * n * 3 for n in nnz)


class TestMeasurement:
    """Test the runtime measurement protocol."""

    def test_warmup_runs_are_discarded(self):
        calls = []
        measurement = measure_runtime(lambda: calls.append(1), MeasurementProtocol(warmup=2, repetitions=3))
        assert len(calls) == 5
        assert len(measurement.samples) == 3
        assert measurement.seconds >= 0

    def test_median_and_mean(self, mocker):
        ticks = iter([0.0, 1.0, 10.0, 13.0, 20.0, 28.0])
        mocker.patch('app.services.cost.time.perf_counter', side_effect=lambda: next(ticks))
        median = measure_runtime(lambda: None, MeasurementProtocol(warmup=0, repetitions=3))
        assert median.samples == [1.0, 3.0, 8.0]
        assert median.seconds == 3.0

        ticks = iter([0.0, 1.0, 10.0, 13.0, 20.0, 28.0])
        mocker.patch('app.services.cost.time.perf_counter', side_effect=lambda: next(ticks))
        mean = measure_runtime(lambda: None, MeasurementProtocol(warmup=0, repetitions=3, aggregation='mean'))
        assert mean.seconds == 4.0

    @pytest.mark.parametrize("kwargs", [{'repetitions': 2}, {'warmup': -1}, {'aggregation': 'max'}])
    def test_invalid_protocol(self, kwargs):
        with pytest.raises(ValueError):
            MeasurementProtocol(**kwargs)

    def test_protocol_from_app_config(self, app):
        protocol = MeasurementProtocol.from_config(app.config)
        assert (protocol.warmup, protocol.repetitions) == (0, 3)

    def test_samples_csv(self, tmp_path):
        measurement = measure_runtime(lambda: None, MeasurementProtocol(warmup=0, repetitions=3))
        lines = write_samples_csv(measurement, tmp_path / 'runtime.csv').read_text().splitlines()
        assert lines[0] == 'rep,seconds'
        assert len(lines) == 4


BASELINE_RUNTIMES = {'java': 0.6750, 'python': 0.2351, 'pharo': 0.1973}
BASELINE_GFLOPS = {'java': 803.4690, 'python': 103.6213, 'pharo': 91.9368}


class TestCostReport:
    """Test cross-language cost aggregation."""

    def test_mean_runtime(self):
        report = cost_report(BASELINE_RUNTIMES, BASELINE_GFLOPS)
        assert report.avg_runtime == pytest.approx(0.369133, abs=1e-6)
        assert report.avg_gflops == pytest.approx(999.0271 / 3)

    def test_summed_gflops(self):
        report = cost_report(BASELINE_RUNTIMES, BASELINE_GFLOPS, gflops_aggregation='sum')
        assert report.avg_gflops == pytest.approx(999.0271)

    def test_two_languages_rejected(self):
        with pytest.raises(WrongLanguageCount):
            cost_report({'java': 1.0, 'python': 1.0}, {'java': 1.0, 'python': 1.0})

    def test_unknown_aggregation(self):
        with pytest.raises(ValueError):
            cost_report(BASELINE_RUNTIMES, BASELINE_GFLOPS, gflops_aggregation='max')

    def test_cost_csv(self, tmp_path):
        report = cost_report(BASELINE_RUNTIMES, BASELINE_GFLOPS,
                             flops={'java': {'encoder': 10, 'head': 5}}, gflops_aggregation='sum')
        lines = write_cost_csv(report, tmp_path / 'cost.csv').read_text().splitlines()
        assert lines[0] == '# 1 multiply-accumulate = 2 FLOPs'
        assert lines[1] == 'language,runtime_s,gflops,encoder_flops,head_flops'
        assert lines[2] == 'java,0.675000,803.469000,10,5'
        assert lines[-1].startswith('cross_language (sum gflops),0.369133,999.027100')
