"""Binarization primitives and bit-packing codecs.

Two code alphabets are supported: SIGNED maps bit 1 to +1 and bit 0 to -1,
UNSIGNED maps bit 1 to 1 and bit 0 to 0. Packed layouts store one bit per
element, LSB-first within little-endian 64-bit words, rows padded to a whole
number of words with zero bits.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, DataError, FormatError

WORD_BITS = 64


class BinaryAlphabet(Enum):
    SIGNED = "signed"      # {-1, +1}
    UNSIGNED = "unsigned"  # {0, 1}

    @property
    def low(self):
        return -1.0 if self is BinaryAlphabet.SIGNED else 0.0

    @property
    def high(self):
        return 1.0


def sign_binarize(w, alphabet=BinaryAlphabet.SIGNED):
    """Map each element to the alphabet's high code if > 0, else the low code.

    Zero maps to the low code. Idempotent on already-binarized input.
    """
    w = np.asarray(w)
    out = np.where(w > 0, alphabet.high, alphabet.low)
    return out.astype(w.dtype if w.dtype.kind == "f" else np.float32)


def clip_weights(w):
    """Clamp elementwise into [-1, +1]."""
    w = np.asarray(w)
    return np.clip(w, -1.0, 1.0)


def grad_mask(h_pre, k):
    """1 where |h_pre| <= k, else 0. The boundary |h| == k keeps the gradient."""
    if k <= 0:
        raise ConfigError(f"mask threshold k must be > 0, got {k}")
    h_pre = np.asarray(h_pre)
    mask = np.abs(h_pre) <= k
    return mask.astype(h_pre.dtype if h_pre.dtype.kind == "f" else np.float32)


def semi_stochastic_round(w, rng, prob=None):
    """Snap each element to its sign with probability prob(|w|), default |w| itself.

    Elements must already lie in [-1, +1] (clip first). A snapped element
    becomes +1 or -1 matching its sign; others are left unchanged, so the
    sign of a nonzero element never flips and +/-1 are fixed points.
    """
    w = np.asarray(w)
    mags = np.abs(w)
    if mags.size and mags.max() > 1.0:
        bad = np.unravel_index(np.argmax(mags), w.shape)
        raise ValueError(f"semi_stochastic_round requires |w| <= 1, got {w[bad]} at {bad}")
    p = mags if prob is None else prob(mags)
    snap = rng.random(w.shape) < p
    signs = np.where(w > 0, 1.0, -1.0).astype(w.dtype)
    return np.where(snap, signs, w)


def words_per_row(cols):
    return (cols + WORD_BITS - 1) // WORD_BITS


@dataclass
class PackedMatrix:
    """Row-major 1-bit matrix: row i occupies words_per_row(cols) 64-bit words."""

    rows: int
    cols: int
    alphabet: BinaryAlphabet
    words: np.ndarray  # uint64, shape (rows, words_per_row(cols))

    def validate(self):
        wpr = words_per_row(self.cols)
        if self.words.shape != (self.rows, wpr):
            raise FormatError(
                f"packed words shape {self.words.shape} != ({self.rows}, {wpr})"
            )
        if self.words.dtype != np.uint64:
            raise FormatError(f"packed words must be uint64, got {self.words.dtype}")
        pad = self.cols % WORD_BITS
        if pad and self.rows:
            keep = np.uint64((1 << pad) - 1)
            if np.any(self.words[:, -1] & ~keep):
                raise FormatError("nonzero padding bits in packed matrix")

    @property
    def nbytes(self):
        return self.rows * words_per_row(self.cols) * 8


def _pack_bit_rows(bits):
    """bits: (rows, cols) of 0/1 -> (rows, words_per_row) uint64, LSB-first."""
    rows, cols = bits.shape
    wpr = words_per_row(cols)
    padded = np.zeros((rows, wpr * WORD_BITS), dtype=np.uint8)
    padded[:, :cols] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").reshape(rows, wpr).astype(np.uint64)


def _unpack_bit_rows(words, cols):
    """Inverse of _pack_bit_rows: (rows, wpr) uint64 -> (rows, cols) of 0/1."""
    rows = words.shape[0]
    raw = np.ascontiguousarray(words.astype("<u8")).view(np.uint8).reshape(rows, -1)
    bits = np.unpackbits(raw, axis=1, bitorder="little")
    return bits[:, :cols]


def pack_bits(b, alphabet=BinaryAlphabet.SIGNED):
    """Pack an already-binarized matrix; bit j of row i is 1 iff b[i,j] is the high code."""
    b = np.asarray(b)
    if b.ndim != 2:
        raise ConfigError(f"pack_bits expects a matrix, got ndim {b.ndim}")
    is_high = b == alphabet.high
    bad = ~(is_high | (b == alphabet.low))
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise DataError(
            f"non-code element {b[i, j]} at row {i}, col {j} for {alphabet.value} alphabet"
        )
    rows, cols = b.shape
    return PackedMatrix(rows, cols, alphabet, _pack_bit_rows(is_high.astype(np.uint8)))


def unpack_bits(p):
    """Expand a PackedMatrix back to its float code matrix. Exact inverse of pack_bits."""
    p.validate()
    bits = _unpack_bit_rows(p.words, p.cols)
    low, high = p.alphabet.low, p.alphabet.high
    return np.where(bits == 1, high, low).astype(np.float32)
