"""Intra and inter sample prediction, shared verbatim by encoder and decoder."""

from __future__ import annotations

import numpy as np

from .common import IntraMode, PredKind, pu_rects
from .transform import dequantize_inverse

NUM_INTRA_MODES = len(IntraMode)


def _neighbours(plane, y, x, h, w, bit_depth):
    top = plane[y - 1, x : x + w].astype(np.int64) if y > 0 else None
    left = plane[y : y + h, x - 1].astype(np.int64) if x > 0 else None
    if top is None and left is None:
        mid = 1 << (bit_depth - 1)
        return np.full(w, mid, dtype=np.int64), np.full(h, mid, dtype=np.int64)
    if top is None:
        top = np.full(w, left[0], dtype=np.int64)
    elif left is None:
        left = np.full(h, top[0], dtype=np.int64)
    return top, left


def intra_predict_all(plane, y, x, h, w, bit_depth):
    """Predictions for every intra mode, shape ``(4, h, w)`` in IntraMode order.

    Only the row above and the column to the left are used; both are always
    reconstructed before the block in z-order.
    """
    top, left = _neighbours(plane, y, x, h, w, bit_depth)
    out = np.empty((NUM_INTRA_MODES, h, w), dtype=np.int64)
    out[IntraMode.DC] = (top.sum() + left.sum() + (w + h) // 2) // (w + h)
    i = np.arange(h, dtype=np.int64)[:, None]
    j = np.arange(w, dtype=np.int64)[None, :]
    horiz = (w - 1 - j) * left[:, None] + (j + 1) * top[-1]
    vert = (h - 1 - i) * top[None, :] + (i + 1) * left[-1]
    out[IntraMode.PLANAR] = (horiz * h + vert * w + h * w) // (2 * h * w)
    out[IntraMode.HORIZONTAL] = left[:, None]
    out[IntraMode.VERTICAL] = top[None, :]
    return out


def intra_predict(plane, y, x, h, w, mode, bit_depth):
    return intra_predict_all(plane, y, x, h, w, bit_depth)[int(mode)]


def fetch(plane, y, x, h, w):
    """``h x w`` block at ``(y, x)``; coordinates outside the plane are clamped."""
    ph, pw = plane.shape
    if y >= 0 and x >= 0 and y + h <= ph and x + w <= pw:
        return plane[y : y + h, x : x + w]
    ys = np.clip(np.arange(y, y + h), 0, ph - 1)
    xs = np.clip(np.arange(x, x + w), 0, pw - 1)
    return plane[np.ix_(ys, xs)]


def inter_predict(ref_planes, plane_idx, cu_y, cu_x, size, pu_mode, motion, shift, pad=0):
    """Motion-compensated prediction of one plane of a CU.

    ``ref_planes[slot]`` is the reference picture's plane list; ``shift`` is
    the (horizontal, vertical) chroma subsampling of the plane. Chroma reuses
    the luma vector scaled down with an arithmetic shift. ``pad`` is the
    width of an edge-replicated border already added around the reference
    planes; it gives the same samples as clamping, only faster.
    """
    sx, sy = shift
    out = np.empty((size >> sy, size >> sx), dtype=np.int64)
    for (py, px, ph, pw), mi in zip(pu_rects(pu_mode, size), motion):
        ref = ref_planes[mi.ref_slot][plane_idx]
        y0, x0 = ((cu_y + py) >> sy) + pad, ((cu_x + px) >> sx) + pad
        h, w = ph >> sy, pw >> sx
        out[py >> sy : (py >> sy) + h, px >> sx : (px >> sx) + w] = fetch(
            ref, y0 + (mi.dy >> sy), x0 + (mi.dx >> sx), h, w
        )
    return out


def predict_plane(cu, plane_idx, recon, ref_planes, shift, bit_depth):
    sx, sy = shift
    if cu.pred_kind == PredKind.INTRA:
        return intra_predict(
            recon[plane_idx], cu.y >> sy, cu.x >> sx, cu.size >> sy, cu.size >> sx,
            cu.intra_mode, bit_depth,
        )
    return inter_predict(ref_planes, plane_idx, cu.y, cu.x, cu.size, cu.pu_mode, cu.motion, shift)


def reconstruct_cu(cu, recon, ref_planes, shifts, qp, bit_depth):
    """Write the reconstruction of ``cu`` into the ``recon`` plane buffers."""
    maxval = (1 << bit_depth) - 1
    for k in range(3):
        sx, sy = shifts[k]
        pred = predict_plane(cu, k, recon, ref_planes, shifts[k], bit_depth)
        if cu.levels[k] is not None:
            pred = pred + dequantize_inverse(cu.levels[k], qp, bit_depth)
        y, x = cu.y >> sy, cu.x >> sx
        recon[k][y : y + pred.shape[0], x : x + pred.shape[1]] = np.clip(pred, 0, maxval)
