"""Stochastic in-batch style augmentation.

Each training sample is, with probability p, replaced by a stylized copy of
itself whose style is borrowed from another instance of the same mixed-domain
batch. Labels and domain ids travel with the content image untouched. The
standard crop/flip augmentation runs first, so style statistics are measured
on already-augmented providers.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import Batch
from .style_model import StyleTransferModel, stylize


@dataclass(frozen=True)
class AugmentationPolicy:
    p: float = 0.75
    alpha: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"replacement probability p={self.p} outside [0, 1]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"stylization strength alpha={self.alpha} outside [0, 1]")


@dataclass
class AugmentedBatch:
    images: np.ndarray
    labels: np.ndarray
    domain_ids: np.ndarray
    stylized_mask: np.ndarray
    style_provider_index: np.ndarray  # -1 where not stylized


def pick_style_provider(batch_size: int, content_index: int, rng) -> int:
    """Uniform over the batch excluding the content image itself."""
    if batch_size < 2:
        raise ValueError(f"need a batch of >= 2 to borrow a style, got {batch_size}")
    if not 0 <= content_index < batch_size:
        raise ValueError(f"content index {content_index} outside batch of {batch_size}")
    j = int(rng.integers(0, batch_size - 1))
    return j + 1 if j >= content_index else j


def augment_batch(batch: Batch, model: StyleTransferModel,
                  policy: AugmentationPolicy, rng) -> AugmentedBatch:
    """Per-sample Bernoulli(p) replacement with in-batch style borrowing."""
    images = batch.images
    b = len(images)
    if b < 2:
        raise ValueError(f"need a batch of >= 2 to borrow styles, got {b}")
    if not model.trained:
        raise RuntimeError("style model is untrained; train or load one first")

    # draw order is fixed (mask, then providers for masked samples in index
    # order) so a seed fully determines the augmentation
    mask = rng.random(b) < policy.p
    providers = np.full(b, -1, dtype=np.int64)
    for i in np.flatnonzero(mask):
        providers[i] = pick_style_provider(b, int(i), rng)

    out = images.copy()
    chosen = np.flatnonzero(mask)
    if len(chosen):
        out[chosen] = stylize(model, images[chosen], images[providers[chosen]],
                              policy.alpha)
    return AugmentedBatch(images=out, labels=batch.labels.copy(),
                          domain_ids=batch.domain_ids.copy(),
                          stylized_mask=mask,
                          style_provider_index=providers)


@dataclass
class AugmentationStats:
    n_samples: int
    n_stylized: int
    n_cross_domain: int

    @property
    def rate(self) -> float:
        return self.n_stylized / self.n_samples if self.n_samples else 0.0

    @property
    def cross_domain_fraction(self) -> float:
        return self.n_cross_domain / self.n_stylized if self.n_stylized else 0.0

    def text(self) -> str:
        return ("augmentation stats\n"
                f"  samples seen: {self.n_samples}\n"
                f"  stylized: {self.n_stylized} (rate {self.rate:.4f})\n"
                f"  cross-domain styles: {self.n_cross_domain} "
                f"(fraction {self.cross_domain_fraction:.4f})")


def augmentation_stats(history) -> AugmentationStats:
    """Aggregate realized replacement and cross-domain rates over batches."""
    history = list(history)
    if not history:
        raise ValueError("empty augmentation history")
    n = n_sty = n_cross = 0
    for b in history:
        n += len(b.stylized_mask)
        idx = np.flatnonzero(b.stylized_mask)
        n_sty += len(idx)
        if len(idx):
            n_cross += int((b.domain_ids[b.style_provider_index[idx]]
                            != b.domain_ids[idx]).sum())
    return AugmentationStats(n, n_sty, n_cross)


def random_crop_flip(images, rng, pad: int = 4, flip: bool = True):
    """The standard augmentation: pad-and-crop plus horizontal flip.

    Flip can be disabled for orientation-sensitive checks.
    """
    b, c, h, w = images.shape
    padded = np.pad(images, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    offsets = rng.integers(0, 2 * pad + 1, size=(b, 2))
    flips = rng.random(b) < 0.5 if flip else np.zeros(b, dtype=bool)
    out = np.empty_like(images)
    for i in range(b):
        oy, ox = offsets[i]
        crop = padded[i, :, oy: oy + h, ox: ox + w]
        out[i] = crop[:, :, ::-1] if flips[i] else crop
    return out
