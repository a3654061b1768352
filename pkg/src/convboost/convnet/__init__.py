"""Convolutional network trained by backpropagation, usable as a feature extractor."""

from .functional import (conv_forward, cross_entropy, dense_forward, dropout, global_average_pool,
                         pool_forward, pool_output_size, relu, softmax)
from .layers import ConvLayer, DenseLayer, Dropout, Flatten, GlobalAveragePool, PoolLayer, ReLU, Softmax
from .network import FeatureExtractor, Network, default_architecture, init_network, truncate_at
from .serialize import load_network, save_network
from .train import EpochRecord, TrainConfig, TrainHistory, evaluate, fit, sgd_step

__all__ = [
    "ConvLayer", "DenseLayer", "Dropout", "EpochRecord", "FeatureExtractor", "Flatten",
    "GlobalAveragePool", "Network", "PoolLayer", "ReLU", "Softmax", "TrainConfig", "TrainHistory",
    "conv_forward", "cross_entropy", "default_architecture", "dense_forward", "dropout", "evaluate",
    "fit", "global_average_pool", "init_network", "load_network", "pool_forward", "pool_output_size",
    "relu", "save_network", "sgd_step", "softmax", "truncate_at",
]
