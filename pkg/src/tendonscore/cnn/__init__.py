"""AlexNet-topology feature extraction truncated at fc6, plus a binary head."""
from .head import (HEALTHY, INJURED, cross_entropy, forward_classify, init_head,
                   loss_and_grad, pack_head, predict, stable_learning_rate, train_head)
from .network import FEATURE_DIM, FeatureExtractor, FeatureVector, conv2d, forward_features, softmax
from .topology import LayerSpec, alexnet_fc6, chain_shapes, classifier_head
from .weights import (NetworkWeights, WeightRecord, expected_records, load_weights, random_weights, save_weights,
                      validate, zero_weights)

__all__ = [
    "HEALTHY", "INJURED", "FEATURE_DIM", "FeatureExtractor", "FeatureVector", "LayerSpec",
    "NetworkWeights", "WeightRecord", "alexnet_fc6", "chain_shapes", "classifier_head",
    "conv2d", "cross_entropy", "expected_records", "forward_classify", "forward_features", "init_head",
    "load_weights", "loss_and_grad", "pack_head", "predict", "random_weights", "save_weights",
    "softmax", "stable_learning_rate", "train_head", "validate", "zero_weights",
]
