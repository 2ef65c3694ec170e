"""Model representation and forward propagation.

A Network keeps real-valued "shadow" weights for every layer. Layers whose
weight mode is binary are binarized on the fly each time they are used, so
the shadows remain the single source of truth during training.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import tensor
from .binarize import BinaryAlphabet, clip_weights, sign_binarize
from .errors import ConfigError


class ActivationKind(Enum):
    SIGMOID = "sigmoid"
    BINARY_SIGNED = "binary_signed"
    BINARY_UNSIGNED = "binary_unsigned"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


class WeightMode(Enum):
    REAL = "real"
    BINARY_SIGNED = "binary_signed"
    BINARY_UNSIGNED = "binary_unsigned"


class UpdatePolicy(Enum):
    TRAINABLE = "trainable"
    FIXED = "fixed"


BINARY_ACTIVATIONS = (ActivationKind.BINARY_SIGNED, ActivationKind.BINARY_UNSIGNED)
BINARY_MODES = (WeightMode.BINARY_SIGNED, WeightMode.BINARY_UNSIGNED)

_ACT_TOKENS = {
    "s": ActivationKind.SIGMOID,
    "b": ActivationKind.BINARY_SIGNED,
    "u": ActivationKind.BINARY_UNSIGNED,
    "d": ActivationKind.SOFTMAX,
    "i": ActivationKind.IDENTITY,
}
_MODE_TOKENS = {
    "r": WeightMode.REAL,
    "b": WeightMode.BINARY_SIGNED,
    "u": WeightMode.BINARY_UNSIGNED,
}
_POLICY_TOKENS = {"t": UpdatePolicy.TRAINABLE, "f": UpdatePolicy.FIXED}


def mode_alphabet(mode):
    if mode is WeightMode.BINARY_SIGNED:
        return BinaryAlphabet.SIGNED
    if mode is WeightMode.BINARY_UNSIGNED:
        return BinaryAlphabet.UNSIGNED
    raise ConfigError(f"weight mode {mode} has no binary alphabet")


def activation_alphabet(kind):
    if kind is ActivationKind.BINARY_SIGNED:
        return BinaryAlphabet.SIGNED
    if kind is ActivationKind.BINARY_UNSIGNED:
        return BinaryAlphabet.UNSIGNED
    raise ConfigError(f"activation {kind} has no binary alphabet")


def parse_layer_string(spec):
    """Parse a comma-separated activation string like "s,b,b,b,b,s,d".

    Tokens: s=sigmoid, b=binary (-1,+1), u=binary (0,1), d=softmax, i=identity.
    The softmax token must appear exactly once, in last position.
    """
    tokens = [t.strip() for t in spec.split(",")]
    kinds = []
    for pos, tok in enumerate(tokens, start=1):
        if tok not in _ACT_TOKENS:
            raise ConfigError(f"unknown activation token {tok!r} at position {pos}")
        kind = _ACT_TOKENS[tok]
        if kind is ActivationKind.SOFTMAX and pos != len(tokens):
            raise ConfigError(f"softmax must be the last layer, found at position {pos}")
        kinds.append(kind)
    if kinds[-1] is not ActivationKind.SOFTMAX:
        raise ConfigError(f"last layer must be softmax, found at position {len(tokens)}")
    return kinds


def _parse_tokens(spec, table, what):
    out = []
    for pos, tok in enumerate((t.strip() for t in spec.split(",")), start=1):
        if tok not in table:
            raise ConfigError(f"unknown {what} token {tok!r} at position {pos}")
        out.append(table[tok])
    return out


def parse_weight_modes(spec):
    """Tokens: r=real, b=binary (-1,+1), u=binary (0,1)."""
    return _parse_tokens(spec, _MODE_TOKENS, "weight mode")


def parse_policies(spec):
    """Tokens: t=trainable, f=fixed."""
    return _parse_tokens(spec, _POLICY_TOKENS, "policy")


@dataclass
class LayerSpec:
    in_dim: int
    out_dim: int
    weight_mode: WeightMode = WeightMode.REAL
    activation: ActivationKind = ActivationKind.SIGMOID
    policy: UpdatePolicy = UpdatePolicy.TRAINABLE

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ConfigError(f"layer dims must be positive, got {self.in_dim}x{self.out_dim}")


@dataclass
class NetworkConfig:
    dims: list            # layer widths, input through output
    activations: list     # one ActivationKind per layer
    weight_modes: list = None
    policies: list = None

    def __post_init__(self):
        n_layers = len(self.dims) - 1
        if n_layers < 1:
            raise ConfigError("config needs at least two dims (input and output)")
        if any(d <= 0 for d in self.dims):
            raise ConfigError(f"dims must be positive, got {self.dims}")
        if len(self.activations) != n_layers:
            raise ConfigError(
                f"{len(self.activations)} activations for {n_layers} layers"
            )
        if self.weight_modes is None:
            self.weight_modes = [WeightMode.REAL] * n_layers
        if self.policies is None:
            self.policies = [UpdatePolicy.TRAINABLE] * n_layers
        if len(self.weight_modes) != n_layers or len(self.policies) != n_layers:
            raise ConfigError("weight_modes/policies length must match layer count")
        for l, act in enumerate(self.activations[:-1]):
            if act is ActivationKind.SOFTMAX:
                raise ConfigError(f"softmax must be the last layer, found at position {l + 1}")
        if self.activations[-1] is not ActivationKind.SOFTMAX:
            raise ConfigError("last layer must be softmax")

    @property
    def num_layers(self):
        return len(self.dims) - 1

    def layer_specs(self):
        return [
            LayerSpec(self.dims[l], self.dims[l + 1], self.weight_modes[l],
                      self.activations[l], self.policies[l])
            for l in range(self.num_layers)
        ]


def parse_network_config(text):
    """Parse the line-oriented `key = value` config format.

    Keys: dims (comma-separated widths), activations (layer string),
    weight_modes, policies (optional token lists aligned to layers).
    """
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        entries[key] = value
    unknown = set(entries) - {"dims", "activations", "weight_modes", "policies"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for required in ("dims", "activations"):
        if required not in entries:
            raise ConfigError(f"config missing required key {required!r}")
    try:
        dims = [int(tok) for tok in entries["dims"].split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad dims value {entries['dims']!r}") from exc
    activations = parse_layer_string(entries["activations"])
    modes = parse_weight_modes(entries["weight_modes"]) if "weight_modes" in entries else None
    policies = parse_policies(entries["policies"]) if "policies" in entries else None
    return NetworkConfig(dims, activations, modes, policies)


@dataclass
class Network:
    specs: list           # LayerSpec per layer
    weights: list = field(repr=False)  # (out_dim, in_dim) shadow weights per layer
    biases: list = field(repr=False)   # (out_dim,) per layer

    def __post_init__(self):
        if len(self.weights) != len(self.specs) or len(self.biases) != len(self.specs):
            raise ConfigError("weights/biases count must match layer count")
        for l, spec in enumerate(self.specs):
            if l and spec.in_dim != self.specs[l - 1].out_dim:
                raise ConfigError(
                    f"layer {l} in_dim {spec.in_dim} != layer {l - 1} out_dim "
                    f"{self.specs[l - 1].out_dim}"
                )
            if self.weights[l].shape != (spec.out_dim, spec.in_dim):
                raise ConfigError(
                    f"layer {l} weight shape {self.weights[l].shape} != "
                    f"({spec.out_dim}, {spec.in_dim})"
                )
            if self.biases[l].shape != (spec.out_dim,):
                raise ConfigError(f"layer {l} bias shape {self.biases[l].shape}")

    @property
    def num_layers(self):
        return len(self.specs)

    @property
    def in_dim(self):
        return self.specs[0].in_dim

    @property
    def out_dim(self):
        return self.specs[-1].out_dim

    def effective_weight(self, l):
        """The weight actually used in propagation: binarized view for binary modes."""
        spec = self.specs[l]
        if spec.weight_mode in BINARY_MODES:
            return sign_binarize(self.weights[l], mode_alphabet(spec.weight_mode))
        return self.weights[l]

    def copy(self):
        return Network(
            [LayerSpec(s.in_dim, s.out_dim, s.weight_mode, s.activation, s.policy)
             for s in self.specs],
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def astype(self, dtype):
        net = self.copy()
        net.weights = [w.astype(dtype) for w in net.weights]
        net.biases = [b.astype(dtype) for b in net.biases]
        return net

    def check_invariants(self):
        for l, spec in enumerate(self.specs):
            if not (np.all(np.isfinite(self.weights[l])) and np.all(np.isfinite(self.biases[l]))):
                raise ConfigError(f"non-finite parameters in layer {l}")
            if spec.weight_mode in BINARY_MODES:
                w = self.weights[l]
                if w.size and (w.min() < -1.0 or w.max() > 1.0):
                    raise ConfigError(f"binary-mode shadow weights outside [-1, 1] in layer {l}")


def apply_activation(kind, pre):
    if kind is ActivationKind.SIGMOID:
        return tensor.sigmoid(pre)
    if kind is ActivationKind.SOFTMAX:
        return tensor.softmax(pre)
    if kind is ActivationKind.IDENTITY:
        return pre.copy()
    if kind in BINARY_ACTIVATIONS:
        return sign_binarize(pre, activation_alphabet(kind))
    raise ConfigError(f"unknown activation {kind}")


@dataclass
class ForwardTrace:
    """Per-layer pre-activations and activations kept for the backward pass."""

    x: np.ndarray
    pre: list
    post: list

    @property
    def output(self):
        return self.post[-1]


def forward_batch(net, xs, train=True):
    """Propagate a batch (one sample per row).

    In train mode returns a ForwardTrace holding every layer's pre- and
    post-activation; in infer mode returns only the final activations.
    """
    xs = np.asarray(xs)
    if xs.ndim != 2 or xs.shape[1] != net.in_dim:
        raise ConfigError(f"input shape {xs.shape} does not match in_dim {net.in_dim}")
    h = xs
    pres, posts = [], []
    for l, spec in enumerate(net.specs):
        pre = tensor.linear(net.effective_weight(l), h, net.biases[l])
        h = apply_activation(spec.activation, pre)
        if train:
            pres.append(pre)
            posts.append(h)
    return ForwardTrace(xs, pres, posts) if train else h


def forward(net, x, train=True):
    """Single-sample forward pass; see forward_batch."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise ConfigError(f"forward expects a vector, got ndim {x.ndim}")
    result = forward_batch(net, x[None, :], train=train)
    if not train:
        return result[0]
    return ForwardTrace(x, [p[0] for p in result.pre], [p[0] for p in result.post])


def init_random(config, seed):
    """Glorot-uniform weights, zero biases, deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for spec in config.layer_specs():
        a = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        w = rng.uniform(-a, a, size=(spec.out_dim, spec.in_dim)).astype(np.float32)
        weights.append(w)
        biases.append(np.zeros(spec.out_dim, dtype=np.float32))
    return Network(config.layer_specs(), weights, biases)


def derive_binary_config(baseline, weight_modes=None, activations=None, policies=None):
    """Copy a trained baseline and re-mode its layers for binary fine-tuning.

    Each override is either None (keep) or a full-length per-layer list whose
    None entries keep the baseline value. Layers switching to a binary weight
    mode get their shadow weights clipped into [-1, +1].
    """
    net = baseline.copy()
    n = net.num_layers

    def resolve(override, current, what):
        if override is None:
            return current
        if len(override) != n:
            raise ConfigError(f"{what} override needs {n} entries, got {len(override)}")
        return [cur if new is None else new for cur, new in zip(current, override)]

    modes = resolve(weight_modes, [s.weight_mode for s in net.specs], "weight_modes")
    acts = resolve(activations, [s.activation for s in net.specs], "activations")
    pols = resolve(policies, [s.policy for s in net.specs], "policies")
    for l, act in enumerate(acts[:-1]):
        if act is ActivationKind.SOFTMAX:
            raise ConfigError(f"softmax must be the last layer, found at position {l + 1}")
    if acts[-1] is not ActivationKind.SOFTMAX:
        raise ConfigError("last layer must stay softmax")
    for l in range(n):
        was_binary = net.specs[l].weight_mode in BINARY_MODES
        net.specs[l].weight_mode = modes[l]
        net.specs[l].activation = acts[l]
        net.specs[l].policy = pols[l]
        if modes[l] in BINARY_MODES and not was_binary:
            net.weights[l] = clip_weights(net.weights[l])
    return net


def binary_finetune(baseline, mode, alphabet=BinaryAlphabet.SIGNED,
                    fix_input=True, fix_softmax=True):
    """Derive the bw / ba / bnn fine-tuning configuration from a float baseline.

    bw binarizes the weights of the intermediate matrices (everything between
    the input and softmax layers), ba binarizes the activations of the middle
    hidden layers (the first and last hidden activations stay as they are),
    and bnn does both. The input and softmax layers are frozen by default,
    the setting that loses the least accuracy.
    """
    n = baseline.num_layers
    bin_mode = (WeightMode.BINARY_SIGNED if alphabet is BinaryAlphabet.SIGNED
                else WeightMode.BINARY_UNSIGNED)
    bin_act = (ActivationKind.BINARY_SIGNED if alphabet is BinaryAlphabet.SIGNED
               else ActivationKind.BINARY_UNSIGNED)
    modes = [None] * n
    acts = [None] * n
    if mode in ("bw", "bnn"):
        if n < 3:
            raise ConfigError(f"mode {mode} needs at least 3 layers, got {n}")
        for l in range(1, n - 1):
            modes[l] = bin_mode
    if mode in ("ba", "bnn"):
        if n < 4:
            raise ConfigError(f"mode {mode} needs at least 4 layers, got {n}")
        for l in range(1, n - 2):
            acts[l] = bin_act
    if mode not in ("bw", "ba", "bnn"):
        raise ConfigError(f"unknown fine-tune mode {mode!r}")
    policies = [None] * n
    policies[0] = UpdatePolicy.FIXED if fix_input else UpdatePolicy.TRAINABLE
    policies[-1] = UpdatePolicy.FIXED if fix_softmax else UpdatePolicy.TRAINABLE
    return derive_binary_config(baseline, modes, acts, policies)
