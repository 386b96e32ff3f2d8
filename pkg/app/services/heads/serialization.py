"""JSON container for trained classifiers.

Layout (version 1)::

    {
      "format": "commentbench-model",
      "version": 1,
      "language": "java",
      "labels": ["deprecation", ...],
      "head": {"family": "logistic", "params": {...}, "swept": [...]},
      "threshold": 0.5,
      "dim": 384,
      "featurizer": {"kind": "hashed", "dim": 384, "seed": 0},
      "heads": [{"type": "logistic", ...}, ...],   # empty for Naive Bayes
      "constant": [false, ...],
      "multiclass": null | {"type": "naive_bayes", ...}
    }
"""
import json
from pathlib import Path

from app.errors import ParseError
from app.models import Language
from app.services.featurize import featurizer_from_dict
from app.services.heads.base import ConstantHead
from app.services.heads.logistic import LogisticHead
from app.services.heads.naive_bayes import NaiveBayesModel
from app.services.heads.ovr import HeadSpec, OneVsRestClassifier
from app.services.heads.svm import SvmHead
from app.services.heads.trees import BoostedHead, ForestHead

MODEL_FORMAT = 'commentbench-model'
MODEL_VERSION = 1

HEAD_TYPES = {cls.type: cls for cls in (ConstantHead, LogisticHead, SvmHead, ForestHead, BoostedHead)}


def head_from_dict(data):
    try:
        return HEAD_TYPES[data['type']].from_dict(data)
    except KeyError as exc:
        raise ParseError(f'Unknown or incomplete head record: missing {exc}') from exc


def classifier_to_dict(classifier, language, labels, featurizer):
    return {
        'format': MODEL_FORMAT,
        'version': MODEL_VERSION,
        'language': Language.parse(language).value,
        'labels': list(labels),
        'head': classifier.spec.to_dict(),
        'threshold': classifier.threshold,
        'dim': classifier.dim,
        'featurizer': featurizer.to_dict(),
        'heads': [head.to_dict() for head in classifier.heads],
        'constant': list(classifier.constant),
        'multiclass': classifier.multiclass.to_dict() if classifier.multiclass is not None else None,
    }


def classifier_from_dict(data):
    """
    Rebuild (language, labels, classifier, featurizer) from a container dict.

    Raises:
        ParseError: wrong format marker or unsupported version
    """
    if data.get('format') != MODEL_FORMAT:
        raise ParseError(f'Not a model container (format={data.get("format")!r})')
    if data.get('version') != MODEL_VERSION:
        raise ParseError(f'Unsupported model version {data.get("version")}, expected {MODEL_VERSION}')

    classifier = OneVsRestClassifier(
        spec=HeadSpec.from_dict(data['head']),
        n_labels=len(data['labels']),
        dim=data['dim'],
        threshold=data['threshold'],
        heads=[head_from_dict(h) for h in data['heads']],
        constant=list(data['constant']),
        multiclass=NaiveBayesModel.from_dict(data['multiclass']) if data.get('multiclass') else None,
    )
    featurizer = featurizer_from_dict(data['featurizer'])
    return Language.parse(data['language']), list(data['labels']), classifier, featurizer


def save_model(path, classifier, language, labels, featurizer):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(classifier_to_dict(classifier, language, labels, featurizer), handle, sort_keys=True)
    return path


def load_model(path):
    try:
        with open(path, encoding='utf-8') as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ParseError(f'Model file {path} is not valid JSON: {exc.msg}', line=exc.lineno) from exc
    return classifier_from_dict(data)
