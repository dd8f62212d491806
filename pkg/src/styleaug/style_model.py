"""The style transfer model: encoder-decoder stylization and its training.

Training is two-phase. The encoder is first given discriminative features by
a short stint as a source-domain classifier, then frozen; only the decoder
learns, by minimizing

    L = content + lambda_s * style

where both losses compare features re-extracted from the decoded image
against the renormalized target: the content loss on the final encoder
output, the style loss on the channel statistics of every relu tap, targeted
at the style image's taps.
"""

from dataclasses import dataclass, field

import numpy as np

from .adain import (
    adain,
    content_loss,
    content_loss_grad,
    interpolate_features,
    style_loss,
    style_loss_grads,
)
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.layers import Conv2d, Flatten, Linear, NearestUpsample, ReLU, ShapeError
from .nn.losses import cross_entropy_with_grad
from .nn.network import Network
from .nn.optim import Adam, SGDMomentum


class TrainingDiverged(RuntimeError):
    """A training loss went non-finite."""


def build_style_encoder(in_shape=(3, 32, 32), widths=(24, 48, 64),
                        strides=(1, 1, 2), rng=None):
    """3 reflect-padded conv blocks; every relu output is a tap point."""
    rng = rng if rng is not None else np.random.default_rng(0)
    layers = []
    ch = in_shape[0]
    for w, s in zip(widths, strides):
        layers += [Conv2d(ch, w, 3, stride=s, padding=1, pad_mode="reflect",
                          rng=rng),
                   ReLU()]
        ch = w
    taps = tuple(i for i, l in enumerate(layers) if isinstance(l, ReLU))
    return Network(layers, tap_points=taps, input_shape=in_shape)


def build_style_decoder(out_shape=(3, 32, 32), widths=(24, 48, 64),
                        strides=(1, 1, 2), rng=None):
    """Mirror of the encoder: one upsample per strided encoder block, plus
    a full-resolution block to clean upsampling artifacts."""
    rng = rng if rng is not None else np.random.default_rng(0)
    c = out_shape[0]
    down = int(np.prod(strides))
    feat_hw = out_shape[1] // down
    layers = []
    ch = widths[-1]
    for w, s in zip(reversed(widths[:-1]), reversed(strides[1:])):
        layers += [Conv2d(ch, w, 3, stride=1, padding=1, pad_mode="reflect",
                          rng=rng),
                   ReLU()]
        if s > 1:
            layers.append(NearestUpsample(s))
        ch = w
    if strides[0] > 1:
        layers.append(NearestUpsample(strides[0]))
    layers += [Conv2d(ch, ch, 3, stride=1, padding=1, pad_mode="reflect",
                      rng=rng),
               ReLU(),
               Conv2d(ch, c, 3, stride=1, padding=1, pad_mode="reflect",
                      rng=rng)]
    return Network(layers, input_shape=(widths[-1], feat_hw, feat_hw))


@dataclass
class StyleTransferModel:
    encoder: Network
    decoder: Network
    lambda_s: float = 10.0
    eps: float = 1e-5
    trained: bool = False

    @property
    def input_shape(self):
        return self.encoder.input_shape


@dataclass
class StyleTrainConfig:
    epochs: int = 20
    lr: float = 5e-4
    batch_size: int = 8
    lambda_s: float = 10.0
    eps: float = 1e-5
    optimizer: str = "adam"
    encoder_pretrain_iters: int = 200
    encoder_pretrain_lr: float = 0.01
    encoder_pretrain_batch: int = 32
    encoder_widths: tuple = (24, 48, 64)
    encoder_strides: tuple = (1, 1, 2)


@dataclass
class StyleTrainHistory:
    """Per-epoch loss means plus the raw per-step trace."""
    epoch_la: list = field(default_factory=list)
    epoch_lc: list = field(default_factory=list)
    epoch_ls: list = field(default_factory=list)
    step_la: list = field(default_factory=list)
    pretrain_losses: list = field(default_factory=list)

    @property
    def first_epoch_la(self):
        return self.epoch_la[0]

    @property
    def final_epoch_la(self):
        return self.epoch_la[-1]


def _as_batch(images):
    images = np.asarray(images)
    if images.ndim == 3:
        return images[None], True
    if images.ndim == 4:
        return images, False
    raise ShapeError(f"expected (C,H,W) or (B,C,H,W) images, got {images.shape}")


def decoder_input(model: StyleTransferModel, content, style, alpha: float):
    """The feature fed to the decoder: interpolated renormalized content."""
    if content.shape == style.shape:
        both, _ = model.encoder.forward(np.concatenate([content, style]))
        f_c, f_s = both[: len(content)], both[len(content):]
    else:
        f_c, _ = model.encoder.forward(content)
        f_s, _ = model.encoder.forward(style)
    f_cs = adain(f_c, f_s, model.eps)
    return interpolate_features(f_c, f_cs, alpha)


def stylize(model: StyleTransferModel, content, style, alpha: float = 1.0):
    """Decode the content features renormalized toward the style image.

    Accepts single images or batches; output matches the content shape and
    is clamped to [0, 1].
    """
    if not model.trained:
        raise RuntimeError("style model is untrained; train or load one first")
    content_b, squeeze = _as_batch(content)
    style_b, _ = _as_batch(style)
    if content_b.shape[1:] != tuple(model.input_shape):
        raise ShapeError(
            f"content shape {content_b.shape[1:]} != model input {model.input_shape}")
    if style_b.shape[1:] != tuple(model.input_shape):
        raise ShapeError(
            f"style shape {style_b.shape[1:]} != model input {model.input_shape}")
    mix = decoder_input(model, content_b, style_b, alpha)
    out, _ = model.decoder.forward(mix)
    out = np.clip(out, 0.0, 1.0)
    return out[0] if squeeze else out


def style_train_step(model: StyleTransferModel, content, style, optimizer):
    """One decoder update; returns (L_A, L_c, L_s)."""
    enc, dec = model.encoder, model.decoder
    f_c, _ = enc.forward(content)
    f_s, style_taps = enc.forward(style)
    target = adain(f_c, f_s, model.eps)

    decoded, _ = dec.forward(target)
    f_out, out_taps = enc.forward(decoded)

    l_c = content_loss(f_out, target)
    l_s = style_loss(out_taps, style_taps, model.eps)
    l_a = l_c + model.lambda_s * l_s

    d_final = content_loss_grad(f_out, target)
    tap_grads = [model.lambda_s * g for g in style_loss_grads(out_taps, style_taps, model.eps)]
    d_decoded = enc.backward(d_final, tap_grads=tap_grads, param_grads=False)

    optimizer.zero_grad()
    dec.backward(d_decoded, param_grads=True)
    optimizer.step()
    return l_a, l_c, l_s


def pretrain_encoder(encoder: Network, images, labels, cfg: StyleTrainConfig, rng):
    """Train encoder + throwaway linear head as a source classifier."""
    n_classes = int(np.max(labels)) + 1
    feat_shape = encoder.out_shape(encoder.input_shape)
    head = Network([Flatten(), Linear(int(np.prod(feat_shape)), n_classes, rng=rng)])
    params = encoder.params() + head.params()
    opt = SGDMomentum(params, lr=cfg.encoder_pretrain_lr, momentum=0.9,
                      weight_decay=1e-4)
    n = len(images)
    losses = []
    for _ in range(cfg.encoder_pretrain_iters):
        idx = rng.integers(0, n, size=min(cfg.encoder_pretrain_batch, n))
        feats, _ = encoder.forward(images[idx])
        logits, _ = head.forward(feats)
        loss, d_logits = cross_entropy_with_grad(logits, labels[idx])
        if not np.isfinite(loss):
            raise TrainingDiverged(f"encoder pretraining diverged (loss={loss})")
        opt.zero_grad()
        d_feats = head.backward(d_logits)
        encoder.backward(d_feats)
        opt.step()
        losses.append(loss)
    return losses


def train_style_model(images, labels, cfg: StyleTrainConfig, rng):
    """Two-phase style model training on source images only.

    ``images``: (N, C, H, W) float32 in [0, 1]. ``labels`` may be None when
    encoder pretraining is disabled. Returns (model, history).
    """
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or len(images) < 1:
        raise ShapeError("need at least one source image, shaped (N, C, H, W)")
    in_shape = images.shape[1:]
    down = int(np.prod(cfg.encoder_strides))
    if in_shape[1] % down or in_shape[2] % down:
        raise ShapeError(
            f"image sides must be divisible by {down}, got {in_shape}")

    encoder = build_style_encoder(in_shape, cfg.encoder_widths,
                                  cfg.encoder_strides, rng)
    decoder = build_style_decoder(in_shape, cfg.encoder_widths,
                                  cfg.encoder_strides, rng)
    model = StyleTransferModel(encoder, decoder, lambda_s=cfg.lambda_s, eps=cfg.eps)
    history = StyleTrainHistory()

    if cfg.encoder_pretrain_iters > 0:
        if labels is None:
            raise ValueError("labels required for encoder pretraining")
        history.pretrain_losses = pretrain_encoder(
            encoder, images, np.asarray(labels), cfg, rng)

    if cfg.optimizer == "adam":
        opt = Adam(decoder.params(), lr=cfg.lr)
    elif cfg.optimizer == "sgd":
        opt = SGDMomentum(decoder.params(), lr=cfg.lr, momentum=0.9)
    else:
        raise ValueError(f"unknown optimizer {cfg.optimizer!r}")

    n = len(images)
    bs = min(cfg.batch_size, n)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        ep_la, ep_lc, ep_ls = [], [], []
        for start in range(0, n, bs):
            content = images[order[start : start + bs]]
            style = images[rng.integers(0, n, size=len(content))]
            l_a, l_c, l_s = style_train_step(model, content, style, opt)
            if not np.isfinite(l_a):
                raise TrainingDiverged(
                    f"style training diverged at epoch {epoch}, step "
                    f"{start // bs}: L_c={l_c}, L_s={l_s}")
            ep_la.append(l_a)
            ep_lc.append(l_c)
            ep_ls.append(l_s)
            history.step_la.append(l_a)
        history.epoch_la.append(float(np.mean(ep_la)))
        history.epoch_lc.append(float(np.mean(ep_lc)))
        history.epoch_ls.append(float(np.mean(ep_ls)))
    model.trained = True
    return model, history


def save_style_model(model: StyleTransferModel, path) -> None:
    save_checkpoint(path, {"encoder": model.encoder, "decoder": model.decoder},
                    extra={"kind": "style-model",
                           "tap_points": list(model.encoder.tap_points),
                           "lambda_s": model.lambda_s, "eps": model.eps,
                           "trained": model.trained})


def load_style_model(path) -> StyleTransferModel:
    nets, extra = load_checkpoint(path)
    if extra.get("kind") != "style-model":
        raise ValueError(f"{path} is not a style-model checkpoint")
    return StyleTransferModel(nets["encoder"], nets["decoder"],
                              lambda_s=extra["lambda_s"], eps=extra["eps"],
                              trained=extra["trained"])
