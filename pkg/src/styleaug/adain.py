"""Channel-statistics renormalization and the style/content losses.

The core transform re-normalizes content features to carry the style
features' channel-wise mean and standard deviation:

    out = sigma(style) * (content - mu(content)) / sigma(content) + mu(style)

with sigma(f) = sqrt(spatial variance + eps). Every op here has an explicit
backward so the decoder can be trained and the whole chain can be checked
against finite differences.
"""

from typing import NamedTuple

import numpy as np

from .nn.layers import ShapeError


class ChannelStats(NamedTuple):
    """Per-instance, per-channel spatial mean and standard deviation."""
    mu: np.ndarray      # (B, C)
    sigma: np.ndarray   # (B, C)


def channel_stats(f: np.ndarray, eps: float = 1e-5) -> ChannelStats:
    """Spatial mean and sqrt(population variance + eps) per (instance, channel)."""
    if f.ndim != 4:
        raise ShapeError(f"expected B x C x H x W features, got {f.shape}")
    if f.shape[2] * f.shape[3] < 1:
        raise ShapeError("empty spatial extent")
    mu = f.mean(axis=(2, 3))
    var = f.var(axis=(2, 3))
    sigma = np.sqrt(var + eps)
    return ChannelStats(mu, sigma)


def channel_stats_backward(f: np.ndarray, stats: ChannelStats,
                           d_mu: np.ndarray, d_sigma: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. f given gradients on its channel stats."""
    n = f.shape[2] * f.shape[3]
    mu = stats.mu[:, :, None, None]
    sigma = stats.sigma[:, :, None, None]
    df = d_mu[:, :, None, None] / n
    df = df + d_sigma[:, :, None, None] * (f - mu) / (n * sigma)
    return df.astype(f.dtype)


def adain(f_c: np.ndarray, f_s: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Renormalize content features to the style features' channel stats.

    Spatial sizes may differ; batch and channel counts must match. Output
    has the content shape.
    """
    if f_c.ndim != 4 or f_s.ndim != 4:
        raise ShapeError("adain expects B x C x H x W features")
    if f_c.shape[:2] != f_s.shape[:2]:
        raise ShapeError(
            f"batch/channel mismatch: content {f_c.shape[:2]} vs style {f_s.shape[:2]}")
    mu_c, sigma_c = channel_stats(f_c, eps)
    mu_s, sigma_s = channel_stats(f_s, eps)
    out = (f_c - mu_c[:, :, None, None]) / sigma_c[:, :, None, None]
    out = out * sigma_s[:, :, None, None] + mu_s[:, :, None, None]
    return out.astype(f_c.dtype)


def adain_backward(f_c: np.ndarray, f_s: np.ndarray, d_out: np.ndarray,
                   eps: float = 1e-5):
    """Gradients of the renormalization w.r.t. both feature inputs."""
    mu_c, sigma_c = channel_stats(f_c, eps)
    mu_s, sigma_s = channel_stats(f_s, eps)
    n_c = f_c.shape[2] * f_c.shape[3]
    n_s = f_s.shape[2] * f_s.shape[3]
    xhat = (f_c - mu_c[:, :, None, None]) / sigma_c[:, :, None, None]
    shat = (f_s - mu_s[:, :, None, None]) / sigma_s[:, :, None, None]

    g_mean = d_out.mean(axis=(2, 3), keepdims=True)
    gx_mean = (d_out * xhat).mean(axis=(2, 3), keepdims=True)
    scale = (sigma_s / sigma_c)[:, :, None, None]
    d_fc = scale * (d_out - g_mean - xhat * gx_mean)

    g_sum = d_out.sum(axis=(2, 3), keepdims=True)
    gx_sum = (d_out * xhat).sum(axis=(2, 3), keepdims=True)
    d_fs = (gx_sum * shat + g_sum) / n_s
    return d_fc.astype(f_c.dtype), d_fs.astype(f_s.dtype)


def interpolate_features(f_c: np.ndarray, f_cs: np.ndarray, alpha: float) -> np.ndarray:
    """Convex combination (1-alpha)*f_c + alpha*f_cs; endpoints are exact."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if f_c.shape != f_cs.shape:
        raise ShapeError(f"shape mismatch {f_c.shape} vs {f_cs.shape}")
    if alpha == 0.0:
        return f_c.copy()
    if alpha == 1.0:
        return f_cs.copy()
    return (1.0 - alpha) * f_c + alpha * f_cs


def content_loss(f_out: np.ndarray, f_target: np.ndarray) -> float:
    """Mean squared error between re-extracted and target features."""
    if f_out.shape != f_target.shape:
        raise ShapeError(f"shape mismatch {f_out.shape} vs {f_target.shape}")
    d = f_out - f_target
    return float((d * d).mean())


def content_loss_grad(f_out: np.ndarray, f_target: np.ndarray) -> np.ndarray:
    if f_out.shape != f_target.shape:
        raise ShapeError(f"shape mismatch {f_out.shape} vs {f_target.shape}")
    return (2.0 / f_out.size) * (f_out - f_target)


def style_loss(out_taps, style_taps, eps: float = 1e-5) -> float:
    """Sum over taps of MSE(mu, mu_style) + MSE(sigma, sigma_style)."""
    _check_taps(out_taps, style_taps)
    total = 0.0
    for f_o, f_s in zip(out_taps, style_taps):
        mu_o, sig_o = channel_stats(f_o, eps)
        mu_s, sig_s = channel_stats(f_s, eps)
        total += float(((mu_o - mu_s) ** 2).mean() + ((sig_o - sig_s) ** 2).mean())
    return total


def style_loss_grads(out_taps, style_taps, eps: float = 1e-5):
    """Per-tap gradients of the style loss w.r.t. the output taps."""
    _check_taps(out_taps, style_taps)
    grads = []
    for f_o, f_s in zip(out_taps, style_taps):
        stats_o = channel_stats(f_o, eps)
        mu_s, sig_s = channel_stats(f_s, eps)
        k = stats_o.mu.size
        d_mu = 2.0 * (stats_o.mu - mu_s) / k
        d_sigma = 2.0 * (stats_o.sigma - sig_s) / k
        grads.append(channel_stats_backward(f_o, stats_o, d_mu, d_sigma))
    return grads


def _check_taps(out_taps, style_taps):
    if len(out_taps) != len(style_taps):
        raise ShapeError(
            f"tap count mismatch: {len(out_taps)} vs {len(style_taps)}")
    for i, (a, b) in enumerate(zip(out_taps, style_taps)):
        if a.shape[:2] != b.shape[:2]:
            raise ShapeError(
                f"tap {i} batch/channel mismatch: {a.shape[:2]} vs {b.shape[:2]}")
