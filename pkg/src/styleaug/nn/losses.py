"""Classification losses and small helpers shared by the training loops."""

import numpy as np

from .layers import ShapeError


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def _check_labels(logits, labels):
    if logits.ndim != 2:
        raise ShapeError(f"logits must be B x K, got {logits.shape}")
    if logits.shape[1] < 2:
        raise ValueError("cross entropy needs at least 2 classes")
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise ShapeError(f"labels shape {labels.shape} != batch {logits.shape[0]}")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError("label out of range")
    return labels


def cross_entropy(logits: np.ndarray, labels) -> float:
    """Mean over the batch of -log softmax(logits)[label]."""
    labels = _check_labels(logits, labels)
    lsm = log_softmax(logits)
    return float(-lsm[np.arange(len(labels)), labels].mean())


def cross_entropy_with_grad(logits: np.ndarray, labels):
    """Loss plus its gradient w.r.t. the logits."""
    labels = _check_labels(logits, labels)
    lsm = log_softmax(logits)
    b = len(labels)
    loss = float(-lsm[np.arange(b), labels].mean())
    grad = np.exp(lsm)
    grad[np.arange(b), labels] -= 1.0
    return loss, (grad / b).astype(logits.dtype)


def accuracy(logits: np.ndarray, labels) -> float:
    labels = np.asarray(labels)
    return float((logits.argmax(axis=1) == labels).mean())
