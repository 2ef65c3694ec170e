"""Training engine for real, binary-weight, binary-activation, and full-binary nets.

Propagation always uses each layer's effective (possibly binarized) weights
while updates land on the real-valued shadows, which are clipped back into
[-1, +1] after every step. Binary activations backpropagate through an
identity approximation gated by a magnitude mask: units whose pre-activation
exceeds the threshold k pass zero gradient. Full-binary nets additionally
clip each layer's weight-gradient norm to alpha before the update, and an
optional semi-stochastic pass snaps shadow weights to their sign with
probability equal to their magnitude.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import tensor
from .binarize import grad_mask, clip_weights, semi_stochastic_round
from .data import shuffle_batches
from .errors import ConfigError, TrainingDiverged
from .network import (
    ActivationKind,
    BINARY_ACTIVATIONS,
    BINARY_MODES,
    ForwardTrace,
    UpdatePolicy,
    forward_batch,
)


@dataclass
class TrainOptions:
    initial_lr: float = 0.008       # 0.001 is the binary fine-tuning setting
    k: float = 1.0                  # gradient-mask threshold for binary activations
    p: float = 0.0                  # per-step probability of the semi-stochastic pass
    alpha: float = 15.0             # weight-gradient norm threshold; 0 disables
    batch_size: int = 256
    lr_decay: float = 0.5
    start_decay_improvement: float = 1e-3
    halt_improvement: float = 1e-4
    max_epochs: int = 50
    seed: int = 0
    clip_real_weights: bool = False   # also clip REAL-mode layers after updates
    force_grad_clip: bool = False     # apply norm clipping outside full-binary nets

    def validate(self, net=None):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"p must be in [0, 1], got {self.p}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if net is not None and self.k <= 0:
            if any(s.activation in BINARY_ACTIVATIONS for s in net.specs):
                raise ConfigError(f"k must be > 0 with binary activations, got {self.k}")


@dataclass
class EpochReport:
    epoch: int
    train_loss: float
    holdout_loss: float
    holdout_acc: float
    lr: float


@dataclass
class LayerGrads:
    """Mean weight and bias gradients, one entry per layer."""

    weights: list
    biases: list


def is_full_binary(net):
    """True when the net binarizes both weights and activations somewhere."""
    has_bw = any(s.weight_mode in BINARY_MODES for s in net.specs)
    has_ba = any(s.activation in BINARY_ACTIVATIONS for s in net.specs)
    return has_bw and has_ba


def backward(net, trace, grad_out, k=1.0):
    """Backpropagate through a forward trace.

    grad_out is the gradient with respect to the final activations, except
    when the last layer is softmax: there the caller passes the fused
    logit gradient (probs - one_hot) and it is used directly as the last
    layer's pre-activation gradient. Batched traces take one grad_out row
    per sample; layer gradients sum the per-sample contributions, so mean
    gradients come from pre-scaled rows (batch_cross_entropy does this).

    Returns (LayerGrads, g_input). Gradients are always real-valued; the
    upstream gradient flows through the effective (binarized) weights.
    """
    batched = trace.x.ndim == 2
    if len(trace.pre) != net.num_layers:
        raise ConfigError("trace does not match network layer count")
    g_post = np.asarray(grad_out)
    if not batched:
        g_post = g_post[None, :]

    g_weights = [None] * net.num_layers
    g_biases = [None] * net.num_layers
    for l in range(net.num_layers - 1, -1, -1):
        spec = net.specs[l]
        pre = trace.pre[l] if batched else trace.pre[l][None, :]
        post = trace.post[l] if batched else trace.post[l][None, :]
        act = spec.activation
        if act is ActivationKind.SOFTMAX:
            if l != net.num_layers - 1:
                raise ConfigError("softmax below the last layer")
            g_pre = g_post  # fused softmax + cross-entropy logit gradient
        elif act is ActivationKind.SIGMOID:
            g_pre = g_post * post * (1.0 - post)
        elif act in BINARY_ACTIVATIONS:
            g_pre = g_post * grad_mask(pre, k)
        elif act is ActivationKind.IDENTITY:
            g_pre = g_post
        else:
            raise ConfigError(f"unknown activation {act}")
        h_prev = trace.post[l - 1] if l else trace.x
        if not batched:
            h_prev = h_prev[None, :]
        g64 = g_pre.astype(np.float64)
        g_weights[l] = (g64.T @ h_prev.astype(np.float64)).astype(g_pre.dtype)
        g_biases[l] = g64.sum(axis=0).astype(g_pre.dtype)
        g_post = (g64 @ net.effective_weight(l).astype(np.float64)).astype(g_pre.dtype)
    g_input = g_post if batched else g_post[0]
    return LayerGrads(g_weights, g_biases), g_input


def clip_grad_norm(g, alpha):
    """Rescale g to Frobenius norm alpha when it exceeds alpha; direction preserved."""
    if alpha <= 0:
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    g = np.asarray(g)
    norm = float(np.linalg.norm(g.astype(np.float64)))
    if norm > alpha:
        return (g * (alpha / norm)).astype(g.dtype)
    return g


def sgd_step(net, grads, lr, opts, rng):
    """One SGD update, in place.

    Trainable layers move against their gradients; binary-mode shadows are
    clipped back into [-1, +1]. Full-binary nets (or force_grad_clip) get
    per-layer weight-gradient norm clipping at alpha first. Afterwards a
    single uniform draw decides, with probability opts.p, whether the
    semi-stochastic rounding pass runs over every trainable binary layer.
    """
    apply_norm_clip = opts.alpha > 0 and (opts.force_grad_clip or is_full_binary(net))
    for l, spec in enumerate(net.specs):
        if spec.policy is UpdatePolicy.FIXED:
            continue
        g_w, g_b = grads.weights[l], grads.biases[l]
        if apply_norm_clip:
            g_w = clip_grad_norm(g_w, opts.alpha)
        net.weights[l] = (net.weights[l] - lr * g_w).astype(net.weights[l].dtype)
        net.biases[l] = (net.biases[l] - lr * g_b).astype(net.biases[l].dtype)
        if spec.weight_mode in BINARY_MODES or opts.clip_real_weights:
            net.weights[l] = clip_weights(net.weights[l])
    if opts.p > 0 and rng.random() < opts.p:
        for l, spec in enumerate(net.specs):
            if spec.policy is UpdatePolicy.TRAINABLE and spec.weight_mode in BINARY_MODES:
                net.weights[l] = semi_stochastic_round(net.weights[l], rng)
    return net


def lr_schedule_step(lr, prev_holdout_loss, new_holdout_loss, opts):
    """Newbob-style schedule on relative holdout improvement.

    Improvement below start_decay_improvement halves the rate (by lr_decay);
    improvement below halt_improvement signals the caller to stop. Returns
    (new_lr, halt). The rate never increases.
    """
    improvement = (prev_holdout_loss - new_holdout_loss) / abs(prev_holdout_loss)
    if improvement < opts.start_decay_improvement:
        lr = lr * opts.lr_decay
    return lr, improvement < opts.halt_improvement


def evaluate(net, dataset, batch_size=4096):
    """Mean cross-entropy and frame accuracy over a dataset."""
    total_loss = 0.0
    correct = 0
    for start in range(0, dataset.n, batch_size):
        feats = dataset.features[start:start + batch_size]
        labels = dataset.labels[start:start + batch_size]
        probs = forward_batch(net, feats, train=False)
        loss, _ = tensor.batch_cross_entropy(probs, labels)
        total_loss += loss * feats.shape[0]
        correct += int((probs.argmax(axis=1) == labels).sum())
    n = max(dataset.n, 1)
    return total_loss / n, correct / n


def _first_nonfinite_layer(trace):
    for l, pre in enumerate(trace.pre):
        if not np.all(np.isfinite(pre)):
            return l
    return None


def train(net, train_set, holdout_set, opts):
    """Minibatch SGD over epochs; returns (net, [EpochReport]).

    Updates use the gradient summed over the minibatch, which is the scale
    the 0.008 / 0.001 learning rates were tuned for; reported losses are
    per-frame means. Epoch 0 reports the untrained losses so convergence
    curves start at the initialization point. Raises TrainingDiverged as
    soon as a minibatch loss goes non-finite, naming the epoch, batch, and
    offending layer.
    """
    opts.validate(net)
    if train_set.dim != net.in_dim or train_set.num_classes > net.out_dim:
        raise ConfigError(
            f"dataset ({train_set.dim} dims, {train_set.num_classes} classes) does not "
            f"match network ({net.in_dim} in, {net.out_dim} out)"
        )
    rng = np.random.default_rng(opts.seed)
    lr = opts.initial_lr
    reports = []

    train_loss, _ = evaluate(net, train_set)
    holdout_loss, holdout_acc = evaluate(net, holdout_set)
    reports.append(EpochReport(0, train_loss, holdout_loss, holdout_acc, lr))
    prev_holdout = holdout_loss

    for epoch in range(1, opts.max_epochs + 1):
        loss_sum = 0.0
        seen = 0
        for bi, batch in enumerate(shuffle_batches(train_set, opts.batch_size, opts.seed, epoch)):
            trace = forward_batch(net, batch.features, train=True)
            loss, g_logits = tensor.batch_cross_entropy(trace.output, batch.labels)
            if not math.isfinite(loss):
                layer = _first_nonfinite_layer(trace)
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {bi}"
                    + (f", layer {layer}" if layer is not None else ""),
                    epoch=epoch, batch_index=bi, layer=layer,
                )
            grads, _ = backward(net, trace, g_logits, opts.k)
            sgd_step(net, grads, lr, opts, rng)
            loss_sum += loss * batch.features.shape[0]
            seen += batch.features.shape[0]
        train_loss = loss_sum / max(seen, 1)
        holdout_loss, holdout_acc = evaluate(net, holdout_set)
        if not math.isfinite(holdout_loss):
            raise TrainingDiverged(
                f"non-finite holdout loss after epoch {epoch}",
                epoch=epoch, batch_index=-1, layer=None,
            )
        reports.append(EpochReport(epoch, train_loss, holdout_loss, holdout_acc, lr))
        lr, halt = lr_schedule_step(lr, prev_holdout, holdout_loss, opts)
        prev_holdout = holdout_loss
        if halt:
            break
    net.check_invariants()
    return net, reports


def _flatten_params(net):
    return np.concatenate(
        [net.weights[l].ravel() for l in range(net.num_layers)]
        + [net.biases[l].ravel() for l in range(net.num_layers)]
    ).astype(np.float64)


def _set_params(net, theta):
    pos = 0
    for l in range(net.num_layers):
        size = net.weights[l].size
        net.weights[l] = theta[pos:pos + size].reshape(net.weights[l].shape)
        pos += size
    for l in range(net.num_layers):
        size = net.biases[l].size
        net.biases[l] = theta[pos:pos + size]
        pos += size


def gradient_check(net, x, label, eps=1e-5):
    """Max relative error between backprop and central differences, in float64.

    Covers every weight and bias of the network. Relative error per element
    is |analytic - numeric| / (max(|analytic|, |numeric|) + 1e-6).
    """
    net64 = net.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)

    trace = forward_batch(net64, x[None, :], train=True)
    if net64.specs[-1].activation is ActivationKind.SOFTMAX:
        _, g_out = tensor.batch_cross_entropy(trace.output, np.array([label]))
    else:
        # squared-error loss against zero for non-softmax heads
        g_out = trace.output.copy()
    grads, _ = backward(net64, trace, g_out, k=1.0)
    analytic = np.concatenate(
        [grads.weights[l].ravel() for l in range(net64.num_layers)]
        + [grads.biases[l].ravel() for l in range(net64.num_layers)]
    )

    probe = net64.copy()

    def loss_at(theta):
        _set_params(probe, theta)
        out = forward_batch(probe, x[None, :], train=False)
        if probe.specs[-1].activation is ActivationKind.SOFTMAX:
            loss, _ = tensor.batch_cross_entropy(out, np.array([label]))
            return loss
        return 0.5 * float((out.astype(np.float64) ** 2).sum())

    numeric = tensor.finite_diff_grad(loss_at, _flatten_params(net64), eps)
    denom = np.maximum(np.abs(analytic), np.abs(numeric)) + 1e-6
    return float(np.max(np.abs(analytic - numeric) / denom))
