from .layers import (
    Conv2d,
    Flatten,
    Linear,
    MaxPool2d,
    NearestUpsample,
    NonFiniteError,
    Param,
    ReLU,
    ShapeError,
)
from .network import Classifier, Network, build_classifier_trunk
from .losses import accuracy, cross_entropy, cross_entropy_with_grad, log_softmax, softmax
from .optim import Adam, SGDMomentum
from .gradcheck import gradcheck, max_rel_error, numeric_grad
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Adam", "Classifier", "Conv2d", "Flatten", "Linear", "MaxPool2d",
    "NearestUpsample", "Network", "NonFiniteError", "Param", "ReLU",
    "SGDMomentum", "ShapeError", "accuracy", "build_classifier_trunk",
    "cross_entropy", "cross_entropy_with_grad", "gradcheck", "load_checkpoint",
    "log_softmax", "max_rel_error", "numeric_grad", "save_checkpoint", "softmax",
]
