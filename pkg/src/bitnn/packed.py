"""Bit-packed inference kernels.

Binary x binary dot products run as XOR (or AND) plus popcount over 64-bit
words: for (-1,+1) operands the signed dot is n - 2*popcount(a XOR b), for
(0,1) operands it is popcount(a AND b). Binary-weight x real-activation rows
use the identity sum(+-x_j) = 2*sum(x over set bits) - sum(x). Integer parts
are exact; floats only enter at the bias addition, so the packed path can be
checked against the dense reference without rounding slack on the dot.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import tensor
from .binarize import (
    BinaryAlphabet,
    PackedMatrix,
    _pack_bit_rows,
    _unpack_bit_rows,
    pack_bits,
    unpack_bits,
    words_per_row,
)
from .errors import ConfigError, DataError, FormatError
from .network import (
    ActivationKind,
    BINARY_ACTIVATIONS,
    LayerSpec,
    Network,
    UpdatePolicy,
    WeightMode,
    activation_alphabet,
    apply_activation,
    mode_alphabet,
)


@dataclass
class PackedVector:
    length: int
    alphabet: BinaryAlphabet
    words: np.ndarray  # uint64, LSB-first, padding bits zero

    def validate(self):
        wpr = words_per_row(self.length)
        if self.words.shape != (wpr,):
            raise FormatError(f"packed vector words shape {self.words.shape} != ({wpr},)")
        pad = self.length % 64
        if pad and wpr:
            keep = np.uint64((1 << pad) - 1)
            if self.words[-1] & ~keep:
                raise FormatError("nonzero padding bits in packed vector")


def pack_vector(v, alphabet=BinaryAlphabet.SIGNED):
    """Pack a binarized vector; elements must be alphabet codes."""
    v = np.asarray(v)
    if v.ndim != 1:
        raise ConfigError(f"pack_vector expects a vector, got ndim {v.ndim}")
    is_high = v == alphabet.high
    bad = ~(is_high | (v == alphabet.low))
    if np.any(bad):
        j = int(np.argwhere(bad)[0])
        raise DataError(f"non-code element {v[j]} at index {j} for {alphabet.value} alphabet")
    words = _pack_bit_rows(is_high.astype(np.uint8)[None, :])[0]
    return PackedVector(v.shape[0], alphabet, words)


def unpack_vector(p):
    p.validate()
    bits = _unpack_bit_rows(p.words[None, :], p.length)[0]
    return np.where(bits == 1, p.alphabet.high, p.alphabet.low).astype(np.float32)


def _pack_positive(values, alphabet):
    """Pack the predicate values > 0 directly, skipping the float code round trip."""
    bits = (np.asarray(values) > 0).astype(np.uint8)
    return PackedVector(bits.shape[0], alphabet, _pack_bit_rows(bits[None, :])[0])


def xnor_dot(a, b, n):
    """Signed dot over {-1,+1}: n - 2*popcount(a XOR b). Exact integer."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    if a.shape != b.shape:
        raise ValueError(f"packed length mismatch: {a.shape} vs {b.shape}")
    return n - 2 * int(np.bitwise_count(a ^ b).sum())

def and_dot(a, b, n):
    """Unsigned dot over {0,1}: popcount(a AND b). Exact integer in [0, n]."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    if a.shape != b.shape:
        raise ValueError(f"packed length mismatch: {a.shape} vs {b.shape}")
    return int(np.bitwise_count(a & b).sum())


def packed_gemv_real(w, x, bias):
    """Signed packed weights times a real vector: out[i] = sum_j (+-x[j]) + bias[i]."""
    if w.alphabet is not BinaryAlphabet.SIGNED:
        raise ConfigError("packed_gemv_real requires the signed alphabet")
    x = np.asarray(x)
    bias = np.asarray(bias)
    if w.cols != x.shape[0]:
        raise ConfigError(f"packed cols {w.cols} != input len {x.shape[0]}")
    if w.rows != bias.shape[0]:
        raise ConfigError(f"packed rows {w.rows} != bias len {bias.shape[0]}")
    bits = _unpack_bit_rows(w.words, w.cols)
    x64 = x.astype(np.float64)
    plus = bits.astype(np.float64) @ x64
    out = 2.0 * plus - x64.sum() + bias.astype(np.float64)
    return out.astype(np.float32)


def packed_gemv_binary(w, x, bias):
    """Packed weights times a packed vector; the integer dot part is exact."""
    if w.alphabet is not x.alphabet:
        raise ConfigError(
            f"alphabet mismatch: weights {w.alphabet.value}, activations {x.alphabet.value}"
        )
    if w.cols != x.length:
        raise ConfigError(f"packed cols {w.cols} != input len {x.length}")
    bias = np.asarray(bias)
    if w.rows != bias.shape[0]:
        raise ConfigError(f"packed rows {w.rows} != bias len {bias.shape[0]}")
    if w.alphabet is BinaryAlphabet.SIGNED:
        dots = w.cols - 2 * np.bitwise_count(w.words ^ x.words[None, :]).sum(axis=1).astype(np.int64)
    else:
        dots = np.bitwise_count(w.words & x.words[None, :]).sum(axis=1).astype(np.int64)
    return (dots + bias.astype(np.float64)).astype(np.float32)


@dataclass
class RealLayer:
    weights: np.ndarray  # (out_dim, in_dim) float32
    bias: np.ndarray
    activation: ActivationKind
    policy: UpdatePolicy = UpdatePolicy.TRAINABLE

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]


@dataclass
class PackedLayer:
    weights: PackedMatrix
    bias: np.ndarray
    activation: ActivationKind
    policy: UpdatePolicy = UpdatePolicy.TRAINABLE

    @property
    def in_dim(self):
        return self.weights.cols

    @property
    def out_dim(self):
        return self.weights.rows

    @property
    def alphabet(self):
        return self.weights.alphabet


@dataclass
class PackedModel:
    layers: list  # RealLayer | PackedLayer

    def __post_init__(self):
        for l, layer in enumerate(self.layers):
            if layer.bias.shape != (layer.out_dim,):
                raise FormatError(f"layer {l} bias shape {layer.bias.shape}")
            if l and layer.in_dim != self.layers[l - 1].out_dim:
                raise FormatError(
                    f"layer {l} in_dim {layer.in_dim} != layer {l - 1} out_dim "
                    f"{self.layers[l - 1].out_dim}"
                )

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim


def from_network(net):
    """Re-encode a training Network: binary-mode layers are binarized and packed."""
    layers = []
    for l, spec in enumerate(net.specs):
        if spec.weight_mode is WeightMode.REAL:
            layers.append(RealLayer(net.weights[l].astype(np.float32).copy(),
                                    net.biases[l].astype(np.float32).copy(),
                                    spec.activation, spec.policy))
        else:
            alphabet = mode_alphabet(spec.weight_mode)
            packed = pack_bits(net.effective_weight(l).astype(np.float32), alphabet)
            layers.append(PackedLayer(packed, net.biases[l].astype(np.float32).copy(),
                                      spec.activation, spec.policy))
    return PackedModel(layers)


def pack_hidden(model, alphabet=BinaryAlphabet.SIGNED):
    """Force-binarize and pack every layer except the first and the softmax layer.

    The endpoints stay in real arithmetic; binarizing them costs far more
    accuracy than it saves.
    """
    layers = []
    last = len(model.layers) - 1
    for l, layer in enumerate(model.layers):
        if l in (0, last) or isinstance(layer, PackedLayer):
            layers.append(layer)
            continue
        binarized = np.where(layer.weights > 0, alphabet.high, alphabet.low).astype(np.float32)
        layers.append(PackedLayer(pack_bits(binarized, alphabet), layer.bias,
                                  layer.activation, layer.policy))
    return PackedModel(layers)


def as_reference_network(model):
    """The dense twin of a packed model: packed layers unpacked to code weights.

    Running the ordinary forward pass over this Network is the independent
    reference the packed path is verified against.
    """
    specs, weights, biases = [], [], []
    for layer in model.layers:
        if isinstance(layer, PackedLayer):
            w = unpack_bits(layer.weights)
        else:
            w = layer.weights.copy()
        specs.append(LayerSpec(layer.in_dim, layer.out_dim, WeightMode.REAL,
                               layer.activation, layer.policy))
        weights.append(w)
        biases.append(layer.bias.copy())
    return Network(specs, weights, biases)


def validate_for_infer(model):
    if isinstance(model.layers[0], PackedLayer) and \
            model.layers[0].alphabet is not BinaryAlphabet.SIGNED:
        raise FormatError("first layer must consume real input (real or signed-packed weights)")
    last = model.layers[-1]
    if not isinstance(last, RealLayer) or last.activation is not ActivationKind.SOFTMAX:
        raise FormatError("last layer must be a real-weight softmax layer")


def infer(model, x):
    """Packed forward pass; returns class posteriors.

    Kernel choice per layer: real weights use the dense reference gemv,
    signed-packed weights with real activations use add/subtract selection,
    packed weights with same-alphabet packed activations use XNOR or AND
    popcount. Binary activations travel packed when the next layer can
    consume them.
    """
    validate_for_infer(model)
    x = np.asarray(x, dtype=np.float32)
    if x.shape != (model.in_dim,):
        raise ConfigError(f"input shape {x.shape} does not match in_dim {model.in_dim}")
    h = x
    for l, layer in enumerate(model.layers):
        if isinstance(layer, RealLayer):
            if isinstance(h, PackedVector):
                h = unpack_vector(h)
            pre = tensor.gemv(layer.weights, h, layer.bias)
        elif isinstance(h, PackedVector):
            pre = packed_gemv_binary(layer.weights, h, layer.bias)
        else:
            pre = packed_gemv_real(layer.weights, h, layer.bias)
        act = layer.activation
        if act in BINARY_ACTIVATIONS:
            alphabet = activation_alphabet(act)
            nxt = model.layers[l + 1] if l + 1 < len(model.layers) else None
            if isinstance(nxt, PackedLayer) and nxt.alphabet is alphabet:
                h = _pack_positive(pre, alphabet)
            else:
                h = apply_activation(act, pre)
        else:
            h = apply_activation(act, pre)
    return h


def model_weight_bytes(model):
    """Serialized weight payload size per layer, in bytes."""
    sizes = []
    for layer in model.layers:
        if isinstance(layer, PackedLayer):
            sizes.append(layer.weights.nbytes)
        else:
            sizes.append(layer.weights.shape[0] * layer.weights.shape[1] * 4)
    return sizes


@dataclass
class BenchRow:
    kernel: str
    rows: int
    cols: int
    reps: int
    ns_per_gemv: float
    bytes_model: int


def bench_kernels(rows, cols, reps, seed=0):
    """Time one gemv per kernel (reference_f32, packed_real_act, packed_binary)."""
    rng = np.random.default_rng(seed)
    dense = np.where(rng.random((rows, cols)) < 0.5, -1.0, 1.0).astype(np.float32)
    bias = rng.standard_normal(rows).astype(np.float32)
    x_real = rng.standard_normal(cols).astype(np.float32)
    x_bin = np.where(rng.random(cols) < 0.5, -1.0, 1.0).astype(np.float32)
    packed = pack_bits(dense, BinaryAlphabet.SIGNED)
    packed_x = pack_vector(x_bin, BinaryAlphabet.SIGNED)
    float_bytes = rows * cols * 4

    def clock(fn):
        fn()  # warm up
        start = time.perf_counter_ns()
        for _ in range(reps):
            fn()
        return (time.perf_counter_ns() - start) / reps

    return [
        BenchRow("reference_f32", rows, cols, reps,
                 clock(lambda: tensor.gemv(dense, x_real, bias)), float_bytes),
        BenchRow("packed_real_act", rows, cols, reps,
                 clock(lambda: packed_gemv_real(packed, x_real, bias)), packed.nbytes),
        BenchRow("packed_binary", rows, cols, reps,
                 clock(lambda: packed_gemv_binary(packed, packed_x, bias)), packed.nbytes),
    ]
