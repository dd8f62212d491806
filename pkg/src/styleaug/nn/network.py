"""Sequential networks with tap points, plus the two-headed classifier."""

import numpy as np

from .layers import Conv2d, Flatten, Linear, MaxPool2d, NonFiniteError, ReLU, ShapeError


class Network:
    """An ordered stack of layers; selected layer outputs can be "tapped".

    Tap points name layer indices whose activations are returned alongside
    the final output (used for style-statistics losses). The backward pass
    accepts one extra gradient per tap, injected where the tap was taken.
    """

    def __init__(self, layers, tap_points=(), input_shape=None):
        self.layers = list(layers)
        self.tap_points = tuple(tap_points)
        self.input_shape = tuple(input_shape) if input_shape is not None else None
        for t in self.tap_points:
            if not 0 <= t < len(self.layers):
                raise ValueError(f"tap point {t} out of range")

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def zero_grad(self):
        for p in self.params():
            p.grad = None

    def out_shape(self, in_shape):
        shape = tuple(in_shape)
        for layer in self.layers:
            shape = layer.out_shape(shape)
        return shape

    def forward(self, x, check_finite=True):
        """Run the stack; returns (output, taps) with taps in tap-point order."""
        if self.input_shape is not None and tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(
                f"network expects input {self.input_shape}, got {tuple(x.shape[1:])}"
            )
        taps = []
        tapset = set(self.tap_points)
        for i, layer in enumerate(self.layers):
            x = layer.forward(x)
            if i in tapset:
                taps.append(x)
        if check_finite and not np.isfinite(x).all():
            raise NonFiniteError("non-finite values in network output")
        return x, taps

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, d_out, tap_grads=None, param_grads=True, check_finite=True):
        """Reverse pass; returns the gradient w.r.t. the network input.

        ``d_out`` may be None when the loss touches taps only. ``tap_grads``
        must then supply one gradient per tap point (None entries allowed).
        """
        if tap_grads is None:
            tap_grads = [None] * len(self.tap_points)
        if len(tap_grads) != len(self.tap_points):
            raise ShapeError("one tap gradient required per tap point")
        if d_out is None and all(g is None for g in tap_grads):
            raise ValueError("backward needs an output or tap gradient")
        inject = dict(zip(self.tap_points, tap_grads))
        d = d_out
        for i in range(len(self.layers) - 1, -1, -1):
            g = inject.get(i)
            if g is not None:
                d = g if d is None else d + g
            if d is None:
                # the loss enters at a tap further down; layers above it see
                # exactly zero gradient
                if param_grads:
                    for p in self.layers[i].params():
                        p.grad = np.zeros_like(p.data)
                continue
            d = self.layers[i].backward(d, param_grads=param_grads)
        if check_finite and param_grads:
            for p in self.params():
                if p.grad is not None and not np.isfinite(p.grad).all():
                    raise NonFiniteError("non-finite parameter gradient")
        return d

    def clone(self, dtype=None):
        net = Network([l.clone(dtype) for l in self.layers], self.tap_points,
                      self.input_shape)
        return net

    def astype(self, dtype):
        return self.clone(dtype=dtype)


def build_classifier_trunk(in_shape, widths=(16, 32, 64, 64), rng=None):
    """Conv trunk for the object classifier: 4 conv blocks, then flatten.

    Zero padding throughout; each block halves the spatial extent.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    c, h, w = in_shape
    layers = []
    ch = c
    for width in widths:
        layers += [Conv2d(ch, width, 3, stride=1, padding=1, rng=rng),
                   ReLU(), MaxPool2d(2)]
        ch = width
    layers.append(Flatten())
    net = Network(layers, input_shape=in_shape)
    return net


class Classifier:
    """Shared conv trunk with a class head, plus an optional rotation head.

    The trunk output (penultimate feature vector) is the insertion point for
    feature-level mixup and the input to both linear heads.
    """

    def __init__(self, trunk: Network, head: Linear, rot_head: Linear | None = None):
        self.trunk = trunk
        self.head = head
        self.rot_head = rot_head

    @classmethod
    def build(cls, in_shape, n_classes, widths=(16, 32, 64, 64),
              with_rotation_head=False, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        trunk = build_classifier_trunk(in_shape, widths, rng)
        feat_dim = trunk.out_shape(in_shape)[0]
        head = Linear(feat_dim, n_classes, rng=rng)
        rot_head = Linear(feat_dim, 4, rng=rng) if with_rotation_head else None
        return cls(trunk, head, rot_head)

    @property
    def n_classes(self):
        return self.head.out_features

    def params(self):
        ps = self.trunk.params() + self.head.params()
        if self.rot_head is not None:
            ps += self.rot_head.params()
        return ps

    def zero_grad(self):
        for p in self.params():
            p.grad = None

    def features(self, x):
        return self.trunk.forward(x)[0]

    def logits(self, x):
        return self.head.forward(self.features(x))

    def predict(self, x):
        return self.logits(x).argmax(axis=1)

    def backward_from_logits(self, d_logits, param_grads=True):
        d_feat = self.head.backward(d_logits, param_grads=param_grads)
        return self.trunk.backward(d_feat, param_grads=param_grads)

    def param_vector(self):
        """All parameters flattened into one float32 vector (hashing, tests)."""
        return np.concatenate([p.data.ravel() for p in self.params()])
