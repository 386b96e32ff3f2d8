"""Classification heads and their one-vs-rest composition."""
from app.services.heads.base import BinaryHead, ConstantHead
from app.services.heads.logistic import LogisticHead, train_logistic
from app.services.heads.naive_bayes import NaiveBayesModel, train_naive_bayes
from app.services.heads.ovr import HeadSpec, OneVsRestClassifier, ovr_predict, ovr_train
from app.services.heads.serialization import load_model, save_model
from app.services.heads.svm import SvmHead, train_svm
from app.services.heads.trees import BoostedHead, DecisionTree, ForestHead, train_boosted, train_forest

__all__ = [
    'BinaryHead', 'ConstantHead',
    'LogisticHead', 'train_logistic',
    'SvmHead', 'train_svm',
    'DecisionTree', 'ForestHead', 'train_forest', 'BoostedHead', 'train_boosted',
    'NaiveBayesModel', 'train_naive_bayes',
    'HeadSpec', 'OneVsRestClassifier', 'ovr_train', 'ovr_predict',
    'save_model', 'load_model',
]
