"""Element-wise 1-bit quantization and Gray-mapped QPSK."""

from __future__ import annotations

import numpy as np

__all__ = ["quantize_1bit", "qpsk_map", "qpsk_demap", "qpsk_indices", "QPSK_ALPHABET"]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)

# index = 2*b0 + b1; b0 drives the real part, b1 the imaginary part
QPSK_ALPHABET = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) * _INV_SQRT2


def _sign(x: np.ndarray) -> np.ndarray:
    # sign(0) := +1
    return np.where(x >= 0, 1.0, -1.0)


def quantize_1bit(y) -> np.ndarray:
    """Map the sign of every real and imaginary part to ``+-1/sqrt(2)``.

    Output entries have unit power.  Zero maps to ``+1/sqrt(2)``.
    """
    y = np.asarray(y)
    if np.isnan(y).any():
        raise ValueError("cannot quantize NaN input")
    y = y.astype(np.complex128, copy=False)
    return (_sign(y.real) + 1j * _sign(y.imag)) * _INV_SQRT2


def qpsk_map(bits) -> np.ndarray:
    """Gray-map bit pairs to unit-power QPSK symbols.

    ``bits`` has an even trailing dimension; ``00 -> (1+j)/sqrt(2)``.
    """
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape[-1] % 2:
        raise ValueError("number of bits must be even")
    pairs = bits.reshape(*bits.shape[:-1], -1, 2)
    if np.any((pairs != 0) & (pairs != 1)):
        raise ValueError("bits must be 0 or 1")
    return QPSK_ALPHABET[2 * pairs[..., 0] + pairs[..., 1]]


def qpsk_demap(symbols) -> np.ndarray:
    """Quadrant decision; inverse of :func:`qpsk_map`."""
    s = np.asarray(symbols)
    b0 = (s.real < 0).astype(np.int64)
    b1 = (s.imag < 0).astype(np.int64)
    return np.stack([b0, b1], axis=-1).reshape(*s.shape[:-1], -1) if s.ndim else np.array([b0, b1])


def qpsk_indices(symbols) -> np.ndarray:
    """Symbol index in :data:`QPSK_ALPHABET` by quadrant."""
    s = np.asarray(symbols)
    return 2 * (s.real < 0) + (s.imag < 0)
