"""Bit-exact model serialization.

Container layout (all little-endian):

    magic "BNN1" | version u16 | layer_count u16
    per layer: in_dim u32 | out_dim u32 | weight_encoding u8 | activation u8
               | policy u8 | bias f32[out_dim] | weights
    crc32 u32 over all preceding bytes (IEEE polynomial)

Weight payloads: encoding 0 stores out_dim x in_dim f32 row-major; encodings
1 (packed signed) and 2 (packed unsigned) store out_dim rows of
ceil(in_dim/64) u64 words, LSB-first bits, padding bits zero. One container
serves both float and packed models, so packing a model is a re-encode.
Saving a training Network writes binary-weight-mode layers in packed form.
"""

import struct
import zlib

import numpy as np

from .binarize import BinaryAlphabet, PackedMatrix, words_per_row
from .errors import FormatError
from .network import ActivationKind, LayerSpec, Network, UpdatePolicy, WeightMode
from .packed import PackedLayer, PackedModel, RealLayer, from_network

MAGIC = b"BNN1"
VERSION = 1

ENC_REAL = 0
ENC_PACKED_SIGNED = 1
ENC_PACKED_UNSIGNED = 2

_ACT_TO_BYTE = {
    ActivationKind.SIGMOID: 0,
    ActivationKind.BINARY_SIGNED: 1,
    ActivationKind.BINARY_UNSIGNED: 2,
    ActivationKind.SOFTMAX: 3,
    ActivationKind.IDENTITY: 4,
}
_BYTE_TO_ACT = {v: k for k, v in _ACT_TO_BYTE.items()}
_POLICY_TO_BYTE = {UpdatePolicy.TRAINABLE: 0, UpdatePolicy.FIXED: 1}
_BYTE_TO_POLICY = {v: k for k, v in _POLICY_TO_BYTE.items()}
_ENC_TO_ALPHABET = {
    ENC_PACKED_SIGNED: BinaryAlphabet.SIGNED,
    ENC_PACKED_UNSIGNED: BinaryAlphabet.UNSIGNED,
}
_ALPHABET_TO_ENC = {v: k for k, v in _ENC_TO_ALPHABET.items()}


def real_layer_record_bytes(in_dim, out_dim):
    return 11 + 4 * out_dim + 4 * out_dim * in_dim


def packed_layer_record_bytes(in_dim, out_dim):
    return 11 + 4 * out_dim + 8 * out_dim * words_per_row(in_dim)


def _encode(model):
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HH", VERSION, len(model.layers))
    for layer in model.layers:
        if isinstance(layer, PackedLayer):
            enc = _ALPHABET_TO_ENC[layer.alphabet]
        else:
            enc = ENC_REAL
        out += struct.pack("<IIBBB", layer.in_dim, layer.out_dim, enc,
                           _ACT_TO_BYTE[layer.activation], _POLICY_TO_BYTE[layer.policy])
        out += layer.bias.astype("<f4").tobytes()
        if enc == ENC_REAL:
            out += layer.weights.astype("<f4").tobytes()
        else:
            out += layer.weights.words.astype("<u8").tobytes()
    return bytes(out)


def save_model(model, path):
    """Write a Network or PackedModel; binary-mode Network layers are packed."""
    if isinstance(model, Network):
        model = from_network(model)
    payload = _encode(model)
    payload += struct.pack("<I", zlib.crc32(payload))
    with open(path, "wb") as f:
        f.write(payload)


class _Reader:
    def __init__(self, buf, offset=0):
        self.buf = buf
        self.off = offset

    def take(self, count, what):
        if self.off + count > len(self.buf):
            raise FormatError(
                f"truncated file: {what} needs {count} bytes at byte {self.off}, "
                f"only {len(self.buf) - self.off} remain"
            )
        out = self.buf[self.off:self.off + count]
        self.off += count
        return out


def load_model(path):
    """Exact inverse of save_model; returns a Network for all-real files, else a PackedModel."""
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 12:
        raise FormatError(f"truncated file: header needs 12 bytes, got {len(buf)}")
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r} at byte 0")
    version, layer_count = struct.unpack("<HH", buf[4:8])
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at byte 4")
    (stored_crc,) = struct.unpack("<I", buf[-4:])
    actual_crc = zlib.crc32(buf[:-4])
    if stored_crc != actual_crc:
        raise FormatError(
            f"CRC mismatch at byte {len(buf) - 4}: stored {stored_crc:#010x}, "
            f"computed {actual_crc:#010x}"
        )

    r = _Reader(buf[:-4], offset=8)
    layers = []
    prev_out = None
    for l in range(layer_count):
        record_off = r.off
        in_dim, out_dim = struct.unpack("<II", r.take(8, f"layer {l} dims"))
        if in_dim == 0 or out_dim == 0:
            raise FormatError(f"layer {l} has zero dimension at byte {record_off}")
        if prev_out is not None and in_dim != prev_out:
            raise FormatError(
                f"layer {l} in_dim {in_dim} does not chain from previous out_dim "
                f"{prev_out} at byte {record_off}"
            )
        prev_out = out_dim
        enc, act_byte, pol_byte = r.take(3, f"layer {l} mode bytes")
        if enc not in (ENC_REAL, ENC_PACKED_SIGNED, ENC_PACKED_UNSIGNED):
            raise FormatError(f"layer {l} unknown weight encoding {enc} at byte {record_off + 8}")
        if act_byte not in _BYTE_TO_ACT:
            raise FormatError(f"layer {l} unknown activation {act_byte} at byte {record_off + 9}")
        if pol_byte not in _BYTE_TO_POLICY:
            raise FormatError(f"layer {l} unknown policy {pol_byte} at byte {record_off + 10}")
        bias_off = r.off
        bias = np.frombuffer(r.take(4 * out_dim, f"layer {l} bias"), dtype="<f4").astype(np.float32)
        if not np.all(np.isfinite(bias)):
            raise FormatError(f"layer {l} non-finite bias at byte {bias_off}")
        weights_off = r.off
        if enc == ENC_REAL:
            raw = r.take(4 * out_dim * in_dim, f"layer {l} weights")
            weights = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(out_dim, in_dim)
            if not np.all(np.isfinite(weights)):
                raise FormatError(f"layer {l} non-finite weights at byte {weights_off}")
            layers.append(RealLayer(weights, bias, _BYTE_TO_ACT[act_byte],
                                    _BYTE_TO_POLICY[pol_byte]))
        else:
            wpr = words_per_row(in_dim)
            raw = r.take(8 * out_dim * wpr, f"layer {l} packed weights")
            words = np.frombuffer(raw, dtype="<u8").astype(np.uint64).reshape(out_dim, wpr)
            packed = PackedMatrix(out_dim, in_dim, _ENC_TO_ALPHABET[enc], words)
            try:
                packed.validate()
            except FormatError as exc:
                raise FormatError(f"layer {l} {exc} at byte {weights_off}") from None
            layers.append(PackedLayer(packed, bias, _BYTE_TO_ACT[act_byte],
                                      _BYTE_TO_POLICY[pol_byte]))
    if r.off != len(buf) - 4:
        raise FormatError(f"{len(buf) - 4 - r.off} unexpected trailing bytes at byte {r.off}")

    if all(isinstance(layer, RealLayer) for layer in layers):
        specs = [LayerSpec(layer.in_dim, layer.out_dim, WeightMode.REAL,
                           layer.activation, layer.policy) for layer in layers]
        return Network(specs, [layer.weights for layer in layers],
                       [layer.bias for layer in layers])
    return PackedModel(layers)
