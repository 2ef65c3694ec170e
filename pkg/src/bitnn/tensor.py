"""Dense reference linear algebra, activations, loss, and a finite-difference oracle.

Arrays are float32 by default; dot products accumulate in float64 before the
result is cast back, so the reference path is stable enough to serve as the
oracle for the packed kernels. All functions preserve the input dtype, which
lets the gradient checker run everything in float64.
"""

import numpy as np

from .errors import ConfigError, DataError

PROB_FLOOR = 1e-12


def gemv(w, x, bias):
    """Matrix-vector product with bias: out[i] = sum_j w[i,j]*x[j] + bias[i].

    Accumulates in float64 regardless of storage dtype.
    """
    w = np.asarray(w)
    x = np.asarray(x)
    bias = np.asarray(bias)
    if w.ndim != 2 or x.ndim != 1 or bias.ndim != 1:
        raise ConfigError(
            f"gemv expects matrix/vector/vector, got ndim {w.ndim}/{x.ndim}/{bias.ndim}"
        )
    if w.shape[1] != x.shape[0]:
        raise ConfigError(f"gemv: weight cols {w.shape[1]} != input len {x.shape[0]}")
    if w.shape[0] != bias.shape[0]:
        raise ConfigError(f"gemv: weight rows {w.shape[0]} != bias len {bias.shape[0]}")
    out = w.astype(np.float64) @ x.astype(np.float64) + bias.astype(np.float64)
    return out.astype(np.result_type(w, x, bias))


def linear(w, xs, bias):
    """Batched gemv: xs has one sample per row, returns (n, out_dim)."""
    w = np.asarray(w)
    xs = np.asarray(xs)
    bias = np.asarray(bias)
    if xs.ndim != 2:
        raise ConfigError(f"linear expects a 2-d batch, got ndim {xs.ndim}")
    if w.shape[1] != xs.shape[1]:
        raise ConfigError(f"linear: weight cols {w.shape[1]} != input dim {xs.shape[1]}")
    if w.shape[0] != bias.shape[0]:
        raise ConfigError(f"linear: weight rows {w.shape[0]} != bias len {bias.shape[0]}")
    out = xs.astype(np.float64) @ w.astype(np.float64).T + bias.astype(np.float64)
    return out.astype(np.result_type(w, xs, bias))


def sigmoid(x):
    """Elementwise logistic function, computed without overflow on either tail."""
    x = np.asarray(x)
    z = x.astype(np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out.astype(x.dtype if x.dtype.kind == "f" else np.float32)


def softmax(x):
    """Max-shifted softmax along the last axis."""
    x = np.asarray(x)
    if x.shape[-1] < 1:
        raise ConfigError("softmax needs at least one logit")
    z = x.astype(np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)
    return out.astype(x.dtype if x.dtype.kind == "f" else np.float32)


def cross_entropy(probs, label):
    """Negative log-likelihood of `label` under softmax output `probs`.

    Returns (loss, grad) where grad is with respect to the pre-softmax
    logits: probs - one_hot(label). probs[label] is clamped to avoid -ln(0).
    """
    probs = np.asarray(probs)
    label = int(label)
    if not 0 <= label < probs.shape[0]:
        raise DataError(f"label {label} out of range for {probs.shape[0]} classes")
    loss = -np.log(max(float(probs[label]), PROB_FLOOR))
    grad = probs.copy()
    grad[label] -= 1.0
    return loss, grad


def batch_cross_entropy(probs, labels):
    """Mean NLL over a batch plus per-sample logit gradient rows.

    Each gradient row is probs[i] - one_hot(labels[i]); summing the rows'
    backward contributions yields the gradient of the batch-summed loss.
    """
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    n = probs.shape[0]
    if labels.shape != (n,):
        raise DataError(f"labels shape {labels.shape} does not match batch of {n}")
    if n and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        bad = labels[(labels < 0) | (labels >= probs.shape[1])][0]
        raise DataError(f"label {bad} out of range for {probs.shape[1]} classes")
    picked = probs[np.arange(n), labels].astype(np.float64)
    loss = float(-np.log(np.maximum(picked, PROB_FLOOR)).mean()) if n else 0.0
    grad = probs.astype(np.float64).copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad.astype(probs.dtype)


def finite_diff_grad(f, x, eps=1e-5):
    """Central-difference gradient of a scalar function, computed in float64."""
    if eps <= 0:
        raise ConfigError(f"finite_diff_grad needs eps > 0, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step.flat[i] = eps
        g.flat[i] = (f(x + step) - f(x - step)) / (2.0 * eps)
    return g
