"""Full-search integer-pel motion estimation.

Cost of a candidate vector is ``SAD + lambda_motion * mv_bits`` with SAD
normalised to 8-bit sample units. Ties go to the smaller ``|dx| + |dy|``,
then the smaller ``dy``, then the smaller ``dx``; across reference slots the
lower slot wins. Candidate vectors are enumerated in exactly that order so
a first-minimum argmin realises the tie-break.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .prediction import fetch


def eg0_length(v):
    """Length in bins of the order-0 Exp-Golomb code of ``v >= 0``."""
    v = np.asarray(v, dtype=np.int64)
    return 2 * (np.frexp((v + 1).astype(np.float64))[1] - 1) + 1


def mv_component_bits(v):
    v = np.abs(np.asarray(v, dtype=np.int64))
    return np.where(v == 0, 1, 2 + eg0_length(np.maximum(v - 1, 0)))


@lru_cache(maxsize=None)
def displacement_order(search_range):
    """``(dys, dxs)`` arrays of every vector in the window, in tie-break order."""
    vecs = [
        (abs(dx) + abs(dy), dy, dx)
        for dy in range(-search_range, search_range + 1)
        for dx in range(-search_range, search_range + 1)
    ]
    vecs.sort()
    dys = np.array([v[1] for v in vecs], dtype=np.int64)
    dxs = np.array([v[2] for v in vecs], dtype=np.int64)
    dys.flags.writeable = False
    dxs.flags.writeable = False
    return dys, dxs


def motion_search(block, ref, pos, search_range, lam_motion, bit_depth=8):
    """Exhaustive search of ``block`` (top-left at ``pos``) in ``ref``.

    Returns ``((dx, dy), cost)``; the prediction is ``ref[y + dy, x + dx]``.
    """
    block = np.asarray(block, dtype=np.int64)
    h, w = block.shape
    y, x = pos
    norm = 1.0 / (1 << (bit_depth - 8))
    best = None
    dys, dxs = displacement_order(search_range)
    for dy, dx in zip(dys.tolist(), dxs.tolist()):
        sad = int(np.abs(block - fetch(ref, y + dy, x + dx, h, w)).sum())
        bits = int(mv_component_bits(dx) + mv_component_bits(dy))
        cost = sad * norm + lam_motion * bits
        if best is None or cost < best[0]:
            best = (cost, dx, dy)
    return (best[1], best[2]), best[0]


# every PU edge lies on this grid: CU sizes are multiples of 8 and AMP splits
# a 16x16 CU at quarter height/width
SAD_CELL = 4


def mv_bits(dx, dy):
    """Scalar :func:`mv_component_bits` of both components."""
    bits = 0
    for v in (dx, dy):
        v = abs(v)
        bits += 1 if v == 0 else 2 + 2 * (v.bit_length() - 1) + 1
    return bits


class CtuMotionSearch:
    """SAD tables for every vector of every reference over one CTU.

    SADs are summed over 4x4 cells and turned into an integral image per
    (reference, vector), so the SAD of any PU rectangle inside the CTU is an
    O(1) lookup shared by all PU shapes at all depths.
    """

    def __init__(self, cur_luma, ref_lumas, y0, x0, h, w, search_range, lam_motion, bit_depth):
        if h % SAD_CELL or w % SAD_CELL:
            raise ValueError(f"CTU region {h}x{w} is not a multiple of {SAD_CELL}")
        self.search_range = search_range
        self.dys, self.dxs = displacement_order(search_range)
        bits = mv_component_bits(self.dxs) + mv_component_bits(self.dys)
        self.bits_cost = lam_motion * bits.astype(np.float64)
        self.norm = 1.0 / (1 << (bit_depth - 8))
        cur = np.asarray(cur_luma[y0 : y0 + h, x0 : x0 + w])
        r = search_range
        n = len(self.dys)
        ch, cw = h // SAD_CELL, w // SAD_CELL
        self.tables = np.zeros((len(ref_lumas), n, ch + 1, cw + 1), dtype=np.int64)
        side = 2 * r + 1
        order = (self.dys + r) * side + (self.dxs + r)
        # int16 is exact: a 4x4 cell of 10-bit differences sums to < 2**14
        cur16 = cur.astype(np.int16)
        diff = np.empty((side, side, h, w), dtype=np.int16)
        for slot, ref in enumerate(ref_lumas):
            region = fetch(ref, y0 - r, x0 - r, h + 2 * r, w + 2 * r).astype(np.int16)
            np.subtract(sliding_window_view(region, (h, w)), cur16, out=diff)
            np.abs(diff, out=diff)
            q = diff.reshape(side * side, ch, SAD_CELL, w)
            rows = q[:, :, 0] + q[:, :, 1] + q[:, :, 2] + q[:, :, 3]
            q = rows.reshape(side * side, ch, cw, SAD_CELL)
            cells = (q[..., 0] + q[..., 1] + q[..., 2] + q[..., 3])[order]
            integ = self.tables[slot]
            np.cumsum(cells, axis=1, out=integ[:, 1:, 1:])
            np.cumsum(integ[:, 1:, 1:], axis=2, out=integ[:, 1:, 1:])
        self._cache = {}

    def search(self, py, px, ph, pw):
        """Best ``(ref_slot, dx, dy)`` for the rectangle (CTU-relative pixel coords)."""
        key = (py, px, ph, pw)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        t = self.tables
        a, b = py // SAD_CELL, px // SAD_CELL
        c, d = a + ph // SAD_CELL, b + pw // SAD_CELL
        sad = t[:, :, c, d] - t[:, :, a, d] - t[:, :, c, b] + t[:, :, a, b]
        cost = sad * self.norm + self.bits_cost
        k = int(np.argmin(cost))
        slot, v = divmod(k, len(self.dys))
        res = (slot, int(self.dxs[v]), int(self.dys[v]))
        self._cache[key] = res
        return res

    def search_many(self, rects):
        """:meth:`search` for a list of rectangles with one table lookup."""
        missing = [r for r in dict.fromkeys(rects) if r not in self._cache]
        if missing:
            rc = np.array(missing, dtype=np.int64) // SAD_CELL
            a, b = rc[:, 0], rc[:, 1]
            c, d = a + rc[:, 2], b + rc[:, 3]
            t = self.tables
            sad = t[:, :, c, d] - t[:, :, a, d] - t[:, :, c, b] + t[:, :, a, b]
            cost = sad * self.norm + self.bits_cost[None, :, None]
            n = len(self.dys)
            best = np.argmin(cost.reshape(-1, len(missing)), axis=0)
            for key, k in zip(missing, best.tolist()):
                slot, v = divmod(k, n)
                self._cache[key] = (slot, int(self.dxs[v]), int(self.dys[v]))
        return [self._cache[r] for r in rects]
