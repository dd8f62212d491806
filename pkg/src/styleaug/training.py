"""Classifier training over mixed-domain source batches.

One loop serves all four methods (baseline, rotation, mixup at pixel or
feature level), each combinable with the stylizing augmentation. Standard
crop/flip runs first, stylization second; validation is evaluated on clean
images. The best checkpoint by source-validation accuracy (earliest on
ties) is restored before returning.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .augment import AugmentationPolicy, augment_batch, augmentation_stats, \
    random_crop_flip
from .baselines import build_rotation_batch, mixed_cross_entropy_with_grad, \
    multitask_loss, sample_mixup_lambda, mixup_feature
from .data import Batch, batch_iterator, stack_images
from .nn.losses import cross_entropy_with_grad
from .nn.network import Classifier
from .nn.optim import SGDMomentum
from .style_model import StyleTransferModel, TrainingDiverged

METHODS = ("baseline", "rotation", "mixup-pixel", "mixup-feature")
AUGMENTATIONS = ("original", "stylized")


@dataclass
class ClassifierTrainConfig:
    method: str = "baseline"
    augmentation: str = "original"
    iterations: int = 3000
    lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0001
    per_domain: int = 8
    eta: float = 0.5
    gamma: float = 0.4
    p: float = 0.75
    alpha: float = 1.0
    val_every: int = 100
    widths: tuple = (16, 32, 64, 64)
    crop_flip: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.augmentation not in AUGMENTATIONS:
            raise ValueError(
                f"augmentation must be one of {AUGMENTATIONS}, got {self.augmentation!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")


@dataclass
class TrainResult:
    classifier: Classifier
    val_curve: list            # (iteration, accuracy) pairs, in order
    best_index: int
    train_losses: list
    aug_stats: object = None   # AugmentationStats when stylizing, else None

    @property
    def best_val_accuracy(self):
        return self.val_curve[self.best_index][1]


def evaluate(classifier: Classifier, images, labels, batch_size: int = 256) -> float:
    """Plain accuracy on clean images, in batches."""
    if len(images) == 0:
        raise ValueError("cannot evaluate on an empty set")
    hits = 0
    for start in range(0, len(images), batch_size):
        xb = images[start: start + batch_size]
        yb = labels[start: start + batch_size]
        hits += int((classifier.predict(xb) == yb).sum())
    return hits / len(images)


def _mixup_pairing(batch_size, gamma, rng):
    lam = sample_mixup_lambda(gamma, rng)
    perm = rng.permutation(batch_size)
    return lam, perm


def _train_step(classifier, batch: Batch, cfg: ClassifierTrainConfig, rng):
    """Forward/backward for one batch; returns the scalar loss."""
    x, y = batch.images, batch.labels
    b = len(x)

    if cfg.method == "rotation":
        rot_x, rot_y = build_rotation_batch(x, rng)
        feats = classifier.trunk.forward(np.concatenate([x, rot_x]))[0]
        cls_logits = classifier.head.forward(feats[:b])
        rot_logits = classifier.rot_head.forward(feats[b:])
        cls_loss, d_cls = cross_entropy_with_grad(cls_logits, y)
        rot_loss, d_rot = cross_entropy_with_grad(rot_logits, rot_y)
        loss = multitask_loss(cls_loss, rot_loss, cfg.eta)
        d_feats = np.concatenate([classifier.head.backward(d_cls),
                                  classifier.rot_head.backward(cfg.eta * d_rot)])
        classifier.trunk.backward(d_feats)
        return loss

    if cfg.method == "mixup-pixel" and cfg.gamma > 0:
        lam, perm = _mixup_pairing(b, cfg.gamma, rng)
        x_tilde = lam * x + (1.0 - lam) * x[perm]
        logits = classifier.logits(x_tilde)
        loss, d_logits = mixed_cross_entropy_with_grad(logits, y, y[perm], lam)
        classifier.backward_from_logits(d_logits)
        return loss

    if cfg.method == "mixup-feature" and cfg.gamma > 0:
        lam, perm = _mixup_pairing(b, cfg.gamma, rng)
        feats = classifier.trunk.forward(x)[0]
        mixed = mixup_feature(feats, feats[perm], lam)
        logits = classifier.head.forward(mixed)
        loss, d_logits = mixed_cross_entropy_with_grad(logits, y, y[perm], lam)
        d_mixed = classifier.head.backward(d_logits)
        d_feats = lam * d_mixed
        np.add.at(d_feats, perm, (1.0 - lam) * d_mixed)
        classifier.trunk.backward(d_feats)
        return loss

    # baseline; also the exact gamma = 0 degeneration of both mixup modes,
    # which must consume no extra rng draws
    logits = classifier.logits(x)
    loss, d_logits = cross_entropy_with_grad(logits, y)
    classifier.backward_from_logits(d_logits)
    return loss


class _AugRecord(NamedTuple):
    """Bookkeeping slice of an AugmentedBatch; images dropped to save memory."""
    stylized_mask: np.ndarray
    style_provider_index: np.ndarray
    domain_ids: np.ndarray


def train_classifier(source_train: dict, source_names, n_classes: int,
                     cfg: ClassifierTrainConfig, rng,
                     style_model: StyleTransferModel = None,
                     val_images=None, val_labels=None) -> TrainResult:
    """Train on domain-balanced source batches; select by source val accuracy.

    ``val_images``/``val_labels`` hold the pooled 10% validation split. When
    absent, no selection happens and the final parameters are returned.
    """
    if cfg.augmentation == "stylized":
        if style_model is None or not style_model.trained:
            raise ValueError("stylized augmentation requires a trained style model")
        policy = AugmentationPolicy(p=cfg.p, alpha=cfg.alpha)

    classifier = Classifier.build(_peek_shape(source_train), n_classes,
                                  widths=cfg.widths, rng=rng,
                                  with_rotation_head=cfg.method == "rotation")
    opt = SGDMomentum(classifier.params(), lr=cfg.lr, momentum=cfg.momentum,
                      weight_decay=cfg.weight_decay)
    batches = batch_iterator(source_train, source_names, cfg.per_domain, rng)

    val_curve = []
    train_losses = []
    best_index = -1
    best_acc = -1.0
    best_params = None
    aug_history = []

    for it in range(cfg.iterations):
        batch = next(batches)
        images = batch.images
        if cfg.crop_flip:
            images = random_crop_flip(images, rng)
        work = Batch(images, batch.labels, batch.domain_ids, batch.uids)
        if cfg.augmentation == "stylized":
            aug = augment_batch(work, style_model, policy, rng)
            aug_history.append(_AugRecord(aug.stylized_mask,
                                          aug.style_provider_index,
                                          aug.domain_ids))
            work = Batch(aug.images, aug.labels, aug.domain_ids, batch.uids)

        opt.zero_grad()
        loss = _train_step(classifier, work, cfg, rng)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"classifier loss non-finite at iteration {it}")
        opt.step()
        train_losses.append(float(loss))

        is_val_point = (it + 1) % cfg.val_every == 0 or it == cfg.iterations - 1
        if is_val_point and val_images is not None:
            acc = evaluate(classifier, val_images, val_labels)
            val_curve.append((it + 1, acc))
            if acc > best_acc:
                best_acc = acc
                best_index = len(val_curve) - 1
                best_params = [p.data.copy() for p in classifier.params()]

    if best_params is not None:
        for p, saved in zip(classifier.params(), best_params):
            p.data[...] = saved

    stats = augmentation_stats(aug_history) if aug_history else None
    return TrainResult(classifier=classifier, val_curve=val_curve,
                       best_index=best_index, train_losses=train_losses,
                       aug_stats=stats)


def _peek_shape(source_train: dict):
    for items in source_train.values():
        if items:
            return items[0].image.shape
    raise ValueError("no training images")


def save_classifier(classifier: Classifier, path) -> None:
    from .nn.checkpoint import save_checkpoint
    from .nn.network import Network

    nets = {"trunk": classifier.trunk,
            "head": Network([classifier.head])}
    if classifier.rot_head is not None:
        nets["rot_head"] = Network([classifier.rot_head])
    save_checkpoint(path, nets, extra={"kind": "classifier"})


def load_classifier(path) -> Classifier:
    from .nn.checkpoint import load_checkpoint

    nets, extra = load_checkpoint(path)
    if extra.get("kind") != "classifier":
        raise ValueError(f"{path} is not a classifier checkpoint")
    rot = nets["rot_head"].layers[0] if "rot_head" in nets else None
    return Classifier(nets["trunk"], nets["head"].layers[0], rot)
