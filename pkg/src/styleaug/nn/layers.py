"""Network building blocks with explicit forward/backward passes.

Every layer caches what its backward pass needs during forward, returns the
gradient w.r.t. its input from backward, and accumulates parameter gradients
into ``Param.grad``. All parameters are float32; layers compute in whatever
dtype they are given, so a float64 clone of a network (see ``Layer.clone``)
can be used for high-precision finite-difference checking.
"""

import math

import numpy as np


class ShapeError(ValueError):
    """Input shape incompatible with a layer or operation."""


class NonFiniteError(FloatingPointError):
    """A forward or backward pass produced NaN or Inf."""


class Param:
    """A trainable array plus its gradient slot."""

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = data
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    def add_grad(self, g: np.ndarray) -> None:
        self.grad = g if self.grad is None else self.grad + g


def kaiming_uniform(shape, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Kaiming-uniform fan-in init (relu gain), float32."""
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def _check_spatial_input(x: np.ndarray, in_channels: int, kind: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{kind} expects a B x C x H x W input, got shape {x.shape}")
    if x.shape[1] != in_channels:
        raise ShapeError(
            f"{kind} expects {in_channels} input channels, got {x.shape[1]}"
        )


class Layer:
    """Base layer: subclasses fill in kind, shape function and both passes."""

    kind = "?"

    def params(self) -> list:
        return []

    def hyperparams(self) -> dict:
        return {}

    def out_shape(self, in_shape: tuple) -> tuple:
        """Output shape (excluding batch) as a function of the input shape."""
        raise NotImplementedError

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, d_out: np.ndarray, param_grads: bool = True) -> np.ndarray:
        raise NotImplementedError

    def clone(self, dtype=None) -> "Layer":
        """Structural copy with parameters copied (optionally cast)."""
        raise NotImplementedError


def _im2col(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """Window an already-padded (B,C,H,W) array into (B, C*k*k, L) columns."""
    b, c, h, w = x.shape
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    s0, s1, s2, s3 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(b, c, k, k, ho, wo),
        strides=(s0, s1, s2, s3, s2 * stride, s3 * stride),
        writeable=False,
    )
    return np.ascontiguousarray(windows).reshape(b, c * k * k, ho * wo), ho, wo


def _fold_reflect_axis(d: np.ndarray, pad: int, axis: int) -> np.ndarray:
    """Fold reflect-pad gradients back onto the unpadded extent of one axis."""
    if pad == 0:
        return d
    d = np.moveaxis(d, axis, -1)
    n = d.shape[-1] - 2 * pad
    core = d[..., pad : pad + n].copy()
    # padded index j < pad mirrors source index pad - j
    core[..., 1 : pad + 1] += d[..., pad - 1 :: -1]
    # padded index n + pad + t mirrors source index n - 2 - t
    core[..., n - 1 - pad : n - 1] += d[..., : n + pad - 1 : -1]
    return np.moveaxis(core, -1, axis)


class Conv2d(Layer):
    """Square-kernel 2-D convolution with zero or reflection padding."""

    kind = "conv"

    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=0,
                 pad_mode="zero", rng=None):
        if pad_mode not in ("zero", "reflect"):
            raise ValueError(f"unknown pad_mode {pad_mode!r}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.pad_mode = pad_mode
        fan_in = in_channels * kernel * kernel
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Param(kaiming_uniform(
            (out_channels, in_channels, kernel, kernel), fan_in, rng))
        self.bias = Param(np.zeros(out_channels, dtype=np.float32))
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def hyperparams(self):
        return {
            "in_channels": self.in_channels, "out_channels": self.out_channels,
            "kernel": self.kernel, "stride": self.stride,
            "padding": self.padding, "pad_mode": self.pad_mode,
        }

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise ShapeError(f"conv expects {self.in_channels} channels, got {c}")
        ho = (h + 2 * self.padding - self.kernel) // self.stride + 1
        wo = (w + 2 * self.padding - self.kernel) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"conv kernel {self.kernel} too large for input {in_shape}")
        return (self.out_channels, ho, wo)

    def _pad(self, x):
        p = self.padding
        if p == 0:
            return x
        if self.pad_mode == "zero":
            return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        if p > x.shape[2] - 1 or p > x.shape[3] - 1:
            raise ShapeError(f"reflect padding {p} needs spatial extent > {p}")
        return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), mode="reflect")

    def forward(self, x):
        _check_spatial_input(x, self.in_channels, "conv")
        self.out_shape(x.shape[1:])
        xp = self._pad(x)
        cols, ho, wo = _im2col(xp, self.kernel, self.stride)
        w2 = self.weight.data.reshape(self.out_channels, -1)
        y = np.matmul(w2, cols) + self.bias.data.astype(cols.dtype)[:, None]
        self._cache = (x.shape, xp.shape, cols)
        return y.reshape(x.shape[0], self.out_channels, ho, wo)

    def backward(self, d_out, param_grads=True):
        if self._cache is None:
            raise RuntimeError("conv backward called without a prior forward")
        x_shape, xp_shape, cols = self._cache
        b = x_shape[0]
        k, s, p = self.kernel, self.stride, self.padding
        ho, wo = d_out.shape[2], d_out.shape[3]
        dy = d_out.reshape(b, self.out_channels, ho * wo)
        w2 = self.weight.data.reshape(self.out_channels, -1)
        if param_grads:
            dw = np.matmul(dy, cols.transpose(0, 2, 1)).sum(axis=0)
            self.weight.add_grad(dw.reshape(self.weight.shape).astype(self.weight.data.dtype))
            self.bias.add_grad(d_out.sum(axis=(0, 2, 3)).astype(self.bias.data.dtype))
        dcols = np.matmul(w2.T, dy)  # (B, C*k*k, L)
        dcols = dcols.reshape(b, self.in_channels, k, k, ho, wo)
        dxp = np.zeros(xp_shape, dtype=d_out.dtype)
        for ki in range(k):
            for kj in range(k):
                dxp[:, :, ki : ki + ho * s : s, kj : kj + wo * s : s] += dcols[:, :, ki, kj]
        if p == 0:
            return dxp
        if self.pad_mode == "zero":
            return dxp[:, :, p:-p, p:-p]
        return _fold_reflect_axis(_fold_reflect_axis(dxp, p, 3), p, 2)

    def clone(self, dtype=None):
        out = Conv2d.__new__(Conv2d)
        out.in_channels, out.out_channels = self.in_channels, self.out_channels
        out.kernel, out.stride, out.padding = self.kernel, self.stride, self.padding
        out.pad_mode = self.pad_mode
        out.weight = Param(self.weight.data.astype(dtype or self.weight.data.dtype))
        out.bias = Param(self.bias.data.astype(dtype or self.bias.data.dtype))
        out._cache = None
        return out


class Linear(Layer):
    kind = "linear"

    def __init__(self, in_features, out_features, rng=None):
        self.in_features = in_features
        self.out_features = out_features
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Param(kaiming_uniform((out_features, in_features), in_features, rng))
        self.bias = Param(np.zeros(out_features, dtype=np.float32))
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def hyperparams(self):
        return {"in_features": self.in_features, "out_features": self.out_features}

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.in_features:
            raise ShapeError(f"linear expects ({self.in_features},), got {in_shape}")
        return (self.out_features,)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"linear expects B x {self.in_features}, got {x.shape}")
        self._x = x
        return x @ self.weight.data.T.astype(x.dtype) + self.bias.data.astype(x.dtype)

    def backward(self, d_out, param_grads=True):
        if self._x is None:
            raise RuntimeError("linear backward called without a prior forward")
        if param_grads:
            self.weight.add_grad((d_out.T @ self._x).astype(self.weight.data.dtype))
            self.bias.add_grad(d_out.sum(axis=0).astype(self.bias.data.dtype))
        return d_out @ self.weight.data.astype(d_out.dtype)

    def clone(self, dtype=None):
        out = Linear.__new__(Linear)
        out.in_features, out.out_features = self.in_features, self.out_features
        out.weight = Param(self.weight.data.astype(dtype or self.weight.data.dtype))
        out.bias = Param(self.bias.data.astype(dtype or self.bias.data.dtype))
        out._x = None
        return out


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        self._mask = None

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, d_out, param_grads=True):
        return d_out * self._mask

    def clone(self, dtype=None):
        return ReLU()


class MaxPool2d(Layer):
    kind = "maxpool"

    def __init__(self, kernel, stride=None):
        self.kernel = kernel
        self.stride = stride if stride is not None else kernel
        self._cache = None

    def hyperparams(self):
        return {"kernel": self.kernel, "stride": self.stride}

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if h < self.kernel or w < self.kernel:
            raise ShapeError(f"maxpool window {self.kernel} exceeds input {in_shape}")
        ho = (h - self.kernel) // self.stride + 1
        wo = (w - self.kernel) // self.stride + 1
        return (c, ho, wo)

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeError(f"maxpool expects B x C x H x W, got {x.shape}")
        k, s = self.kernel, self.stride
        self.out_shape(x.shape[1:])
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
        win = win[:, :, ::s, ::s]
        b, c, ho, wo = win.shape[:4]
        flat = win.reshape(b, c, ho, wo, k * k)
        idx = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        self._cache = (x.shape, idx)
        return out

    def backward(self, d_out, param_grads=True):
        x_shape, idx = self._cache
        k, s = self.kernel, self.stride
        ho, wo = d_out.shape[2], d_out.shape[3]
        dx = np.zeros(x_shape, dtype=d_out.dtype)
        for ki in range(k):
            for kj in range(k):
                sel = d_out * (idx == ki * k + kj)
                dx[:, :, ki : ki + ho * s : s, kj : kj + wo * s : s] += sel
        return dx

    def clone(self, dtype=None):
        return MaxPool2d(self.kernel, self.stride)


class NearestUpsample(Layer):
    kind = "nearest-upsample"

    def __init__(self, factor):
        self.factor = factor
        self._in_shape = None

    def hyperparams(self):
        return {"factor": self.factor}

    def out_shape(self, in_shape):
        c, h, w = in_shape
        return (c, h * self.factor, w * self.factor)

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeError(f"upsample expects B x C x H x W, got {x.shape}")
        self._in_shape = x.shape
        return x.repeat(self.factor, axis=2).repeat(self.factor, axis=3)

    def backward(self, d_out, param_grads=True):
        b, c, h, w = self._in_shape
        f = self.factor
        return d_out.reshape(b, c, h, f, w, f).sum(axis=(3, 5))

    def clone(self, dtype=None):
        return NearestUpsample(self.factor)


class Flatten(Layer):
    kind = "flatten"

    def __init__(self):
        self._in_shape = None

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, d_out, param_grads=True):
        return d_out.reshape(self._in_shape)

    def clone(self, dtype=None):
        return Flatten()


LAYER_KINDS = {
    "conv": Conv2d,
    "linear": Linear,
    "relu": ReLU,
    "maxpool": MaxPool2d,
    "nearest-upsample": NearestUpsample,
    "flatten": Flatten,
}


def layer_from_manifest(kind: str, hyperparams: dict) -> Layer:
    """Reconstruct a layer (untrained parameters) from its manifest entry."""
    cls = LAYER_KINDS.get(kind)
    if cls is None:
        raise ValueError(f"unknown layer kind {kind!r}")
    return cls(**hyperparams)
