"""Reference methods trained alongside the augmented baseline.

Rotation: a four-way self-supervised head predicts which multiple of 90
degrees each image was rotated by; its loss joins the class loss with weight
eta. Mixup: convex combinations of sample pairs (at pixel or feature level)
with the matching convex combination of their one-hot losses; gamma = 0
degenerates to plain training exactly, drawing nothing from the rng.
"""

import numpy as np

from .nn.layers import ShapeError
from .nn.losses import cross_entropy, cross_entropy_with_grad


def rotate90(image, k: int):
    """Rotate (..., H, W) counterclockwise by 90k degrees; H must equal W."""
    if image.shape[-1] != image.shape[-2]:
        raise ShapeError(f"rotation needs square spatial dims, got {image.shape}")
    if k not in (0, 1, 2, 3):
        raise ValueError(f"k must be one of 0..3, got {k}")
    return np.rot90(image, k=k, axes=(-2, -1)).copy()


def build_rotation_batch(images, rng):
    """Rotate each image by an independently sampled k; returns (images, ks)."""
    ks = rng.integers(0, 4, size=len(images))
    rotated = np.stack([rotate90(img, int(k)) for img, k in zip(images, ks)])
    return rotated, ks.astype(np.int64)


def multitask_loss(cls_loss: float, rot_loss: float, eta: float) -> float:
    if not (np.isfinite(cls_loss) and np.isfinite(rot_loss)):
        raise ValueError(f"non-finite losses: cls={cls_loss}, rot={rot_loss}")
    if eta < 0:
        raise ValueError(f"auxiliary weight eta must be >= 0, got {eta}")
    return cls_loss + eta * rot_loss


def sample_mixup_lambda(gamma: float, rng) -> float:
    """Beta(gamma, gamma) draw; gamma = 0 returns exactly 1 without drawing,
    so a gamma = 0 run consumes the same rng stream as no mixup at all."""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if gamma == 0:
        return 1.0
    return float(rng.beta(gamma, gamma))


def _check_lambda(lambda_mix):
    if not 0.0 <= lambda_mix <= 1.0:
        raise ValueError(f"lambda_mix={lambda_mix} outside [0, 1]")


def mixup_pixel(x_i, x_j, lambda_mix: float):
    _check_lambda(lambda_mix)
    if x_i.shape != x_j.shape:
        raise ShapeError(f"mixup shapes differ: {x_i.shape} vs {x_j.shape}")
    return lambda_mix * x_i + (1.0 - lambda_mix) * x_j


def mixup_feature(f_i, f_j, lambda_mix: float):
    _check_lambda(lambda_mix)
    if f_i.shape != f_j.shape:
        raise ShapeError(f"mixup shapes differ: {f_i.shape} vs {f_j.shape}")
    return lambda_mix * f_i + (1.0 - lambda_mix) * f_j


def mixed_cross_entropy(logits, y_i, y_j, lambda_mix: float) -> float:
    """lambda * CE(y_i) + (1 - lambda) * CE(y_j); affine in lambda."""
    _check_lambda(lambda_mix)
    return (lambda_mix * cross_entropy(logits, y_i)
            + (1.0 - lambda_mix) * cross_entropy(logits, y_j))


def mixed_cross_entropy_with_grad(logits, y_i, y_j, lambda_mix: float):
    _check_lambda(lambda_mix)
    loss_i, grad_i = cross_entropy_with_grad(logits, y_i)
    loss_j, grad_j = cross_entropy_with_grad(logits, y_j)
    loss = lambda_mix * loss_i + (1.0 - lambda_mix) * loss_j
    grad = lambda_mix * grad_i + (1.0 - lambda_mix) * grad_j
    return loss, grad
