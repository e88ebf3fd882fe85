from .adam import Adam, AdamState, adam_step
from .cool import CoolHead, cool_forward, cool_from_logits, cool_targets
from .layers import (Conv2D, Dense, Identity, Layer, MaxPool2x2, ReLU, Reshape,
                     Sigmoid, Softmax, TiedDense, log_softmax, sigmoid, softmax)
from .losses import cross_entropy, l2_penalty, softmax_cross_entropy, squared_error
from .stack import LayerStack, Tape, sum_grads

__all__ = [
    "Adam", "AdamState", "adam_step", "CoolHead", "cool_forward", "cool_from_logits",
    "cool_targets", "Conv2D", "Dense", "Identity", "Layer", "MaxPool2x2", "ReLU",
    "Reshape", "Sigmoid", "Softmax", "TiedDense", "log_softmax", "sigmoid", "softmax",
    "cross_entropy", "l2_penalty", "softmax_cross_entropy", "squared_error",
    "LayerStack", "Tape", "sum_grads",
]
