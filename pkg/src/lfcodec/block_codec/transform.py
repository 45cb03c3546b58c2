"""Separable integer DCT-II and dead-zone scalar quantisation.

Coefficients are carried in fixed point: the forward transform returns the
orthonormal DCT scaled by ``2**COEF_FRAC``. Basis matrices are the
orthonormal DCT rounded to ``MATRIX_BITS`` fractional bits. Products are
formed in float64 but every intermediate is an integer below 2**53, so the
arithmetic is exact and independent of BLAS summation order; batched and
single-block calls agree bit for bit.

The quantiser step doubles every 6 QP and equals 1 at QP 4. Steps are
expressed in 8-bit sample units and scaled by ``2**(bit_depth - 8)``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

MATRIX_BITS = 12
COEF_FRAC = 6
QSTEP_BITS = 16
MAX_LEVEL = 1 << 20
_COEF_CLAMP = 1 << 23
DEADZONE = 1.0 / 3.0

# round(2**((qp - 4) / 6) * 2**16) for qp in 0..51
QSTEP_FIXED = tuple(int(round(2.0 ** ((qp - 4) / 6.0) * (1 << QSTEP_BITS))) for qp in range(52))


def qstep(qp):
    """Quantiser step size (8-bit sample units) for ``qp``."""
    return QSTEP_FIXED[qp] / float(1 << QSTEP_BITS)


@lru_cache(maxsize=None)
def dct_matrix(n):
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    m[0, :] = np.sqrt(1.0 / n)
    return m


@lru_cache(maxsize=None)
def int_matrix(n):
    m = np.rint(dct_matrix(n) * (1 << MATRIX_BITS))
    m.flags.writeable = False
    return m


def _round_shift(v, k):
    return (v + (1 << (k - 1))) >> k


def forward_transform(block):
    """Integer 2-D DCT of ``(..., h, w)`` residuals; returns int64 coefficients."""
    x = np.asarray(block, dtype=np.float64)
    th = int_matrix(x.shape[-2])
    tw = int_matrix(x.shape[-1])
    t = th @ x @ tw.T
    return _round_shift(t.astype(np.int64), 2 * MATRIX_BITS - COEF_FRAC)


def inverse_transform(coefs):
    c = np.clip(np.asarray(coefs, dtype=np.int64), -_COEF_CLAMP, _COEF_CLAMP)
    th = int_matrix(c.shape[-2])
    tw = int_matrix(c.shape[-1])
    t = _round_shift((th.T @ c.astype(np.float64)).astype(np.int64), MATRIX_BITS)
    t = (t.astype(np.float64) @ tw).astype(np.int64)
    return _round_shift(t, MATRIX_BITS + COEF_FRAC)


def _step_fixed(qp, bit_depth):
    return QSTEP_FIXED[qp] << (bit_depth - 8)


def quantize(coefs, qp, bit_depth=8):
    """``sign(c) * floor(|c| / step + 1/3)`` with the step in coefficient units."""
    c = np.asarray(coefs, dtype=np.int64)
    denom = _step_fixed(qp, bit_depth)
    scale = 1 << (QSTEP_BITS - COEF_FRAC)
    mag = (3 * np.abs(c) * scale + denom) // (3 * denom)
    return np.where(c < 0, -mag, mag).astype(np.int64)


def dequantize(levels, qp, bit_depth=8):
    lv = np.clip(np.asarray(levels, dtype=np.int64), -MAX_LEVEL, MAX_LEVEL)
    denom = _step_fixed(qp, bit_depth)
    k = QSTEP_BITS - COEF_FRAC
    mag = _round_shift(np.abs(lv) * denom, k)
    return np.where(lv < 0, -mag, mag)


def transform_quantize(residual, qp, bit_depth=8):
    """Residual block -> quantised levels."""
    return quantize(forward_transform(residual), qp, bit_depth)


def dequantize_inverse(levels, qp, bit_depth=8):
    """Quantised levels -> reconstructed residual block."""
    return inverse_transform(dequantize(levels, qp, bit_depth))


@lru_cache(maxsize=None)
def scan_order(h, w):
    """Flat indices of an ``h x w`` block in up-right diagonal order."""
    pos = sorted(((i + j, -i, i * w + j) for i in range(h) for j in range(w)))
    order = np.array([p[2] for p in pos], dtype=np.int64)
    order.flags.writeable = False
    return order


@lru_cache(maxsize=None)
def scan_diagonals(h, w):
    """Diagonal index (row + col) of every position in scan order."""
    order = scan_order(h, w)
    d = (order // w) + (order % w)
    d.flags.writeable = False
    return d
