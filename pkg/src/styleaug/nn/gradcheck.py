"""Finite-difference gradient checking.

The oracle works in float64: networks are cloned and cast before probing, so
the comparison isolates the correctness of the analytic backward pass from
float32 rounding. The canonical scalar objective for a bare network check is
the sum of its outputs.
"""

import numpy as np


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())


def numeric_grad(f, x: np.ndarray, epsilon: float = 1e-3) -> np.ndarray:
    """Central-difference gradient of scalar f w.r.t. every element of x."""
    x = x.astype(np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        up = f(x)
        flat[i] = orig - epsilon
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * epsilon)
    return grad


def gradcheck(net, x: np.ndarray, epsilon: float = 1e-3) -> float:
    """Max relative error between analytic and numeric parameter gradients.

    Loss is sum(output). Small nets only: cost is two forwards per parameter
    element.
    """
    net64 = net.astype(np.float64)
    x64 = x.astype(np.float64)

    out, _ = net64.forward(x64)
    net64.backward(np.ones_like(out))
    analytic = [p.grad.copy() for p in net64.params()]

    worst = 0.0
    for p, a in zip(net64.params(), analytic):
        flat = p.data.ravel()
        num = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = net64.forward(x64)[0].sum()
            flat[i] = orig - epsilon
            down = net64.forward(x64)[0].sum()
            flat[i] = orig
            num[i] = (up - down) / (2 * epsilon)
        worst = max(worst, max_rel_error(a.ravel(), num))
    return worst
