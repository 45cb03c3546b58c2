"""Fast CU depth decision from co-located CTUs of the reference views.

Every 8x8 cell of the current picture gets a depth range: the minimum and
maximum *adjusted* depth found at the same cell in the reference views'
depth maps, where a CU whose PU is not 2Nx2N counts one level deeper.
During the quadtree search a CU at depth d

* below the range searches only the 2Nx2N PU (intra, inter 2Nx2N), still
  allowed to split;
* inside the range searches every PU mode;
* at the top of the range is not split further.

A CU covering several cells uses the union of their ranges. CTUs that hang
over the right or bottom picture edge, and pictures without references,
search the full range.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .block_codec.common import (
    CELLS_PER_CTU,
    CTU_SIZE,
    MAX_DEPTH,
    MIN_CU,
    PU_LABELS,
    PuMode,
    inter_pu_modes,
)


def adjusted_depth(cu):
    """``d`` for a 2Nx2N CU, ``d + 1`` for any other PU shape."""
    return cu.depth + (0 if cu.pu_mode == PuMode.P2Nx2N else 1)


def range_from_cells(cells):
    """Depth range from co-located adjusted depths.

    ``cells`` is a sequence of equally shaped arrays (or scalars), one per
    co-located CTU. Returns ``(dmin, dmax)`` clamped to ``[0, MAX_DEPTH]``;
    an empty sequence gives the full range.
    """
    cells = [np.asarray(c) for c in cells]
    if not cells:
        return np.int16(0), np.int16(MAX_DEPTH)
    stack = np.stack(cells).astype(np.int16)
    dmin = np.clip(stack.min(axis=0), 0, MAX_DEPTH)
    dmax = np.clip(stack.max(axis=0), 0, MAX_DEPTH)
    return dmin, dmax


@dataclass(frozen=True)
class DepthPrediction:
    """Per-cell ``[dmin, dmax]`` over a whole picture."""

    dmin: np.ndarray
    dmax: np.ndarray
    restrict_pu_below_min: bool = True

    def __post_init__(self):
        if self.dmin.shape != self.dmax.shape:
            raise ValueError("dmin and dmax shapes differ")
        if np.any(self.dmin > self.dmax):
            raise ValueError("depth_min exceeds depth_max")
        self.dmin.flags.writeable = False
        self.dmax.flags.writeable = False

    @classmethod
    def full(cls, cell_shape):
        return cls(np.zeros(cell_shape, np.int16), np.full(cell_shape, MAX_DEPTH, np.int16))

    @property
    def shape(self):
        return self.dmin.shape

    def cu_range(self, y, x, size):
        """Union of the ranges of the cells a CU covers (pixel coordinates)."""
        r, c, n = y // MIN_CU, x // MIN_CU, max(size // MIN_CU, 1)
        lo = self.dmin[r : r + n, c : c + n]
        hi = self.dmax[r : r + n, c : c + n]
        return int(lo.min()), int(hi.max())

    def ctu(self, ctu_row, ctu_col):
        r0, c0 = ctu_row * CELLS_PER_CTU, ctu_col * CELLS_PER_CTU
        sl = (slice(r0, r0 + CELLS_PER_CTU), slice(c0, c0 + CELLS_PER_CTU))
        return self.dmin[sl], self.dmax[sl]

    def searched_depths(self, cell):
        """Depths at which a CU covering only ``cell`` is evaluated with all PU modes."""
        r, c = cell
        return list(range(int(self.dmin[r, c]), int(self.dmax[r, c]) + 1))

    def to_csv_rows(self):
        rows, cols = self.shape
        return [
            (r, c, int(self.dmin[r, c]), int(self.dmax[r, c]))
            for r in range(rows)
            for c in range(cols)
        ]


def predict(colocated, ctu_pos, fmt=None):
    """Depth range for the cells of one CTU.

    ``colocated`` are the reference views' DepthMaps (at most 4 are used).
    Returns ``(dmin, dmax)`` arrays for the CTU's cells. Partial CTUs on the
    right or bottom edge of ``fmt`` get the full range, as does an empty
    reference list.
    """
    ctu_row, ctu_col = ctu_pos
    colocated = list(colocated)[:4]
    shape = (CELLS_PER_CTU, CELLS_PER_CTU)
    partial = False
    if fmt is not None:
        shape = _ctu_cell_shape(fmt.coded, ctu_row, ctu_col)
        partial = fmt.coded.ctu_is_partial(ctu_row, ctu_col)
    if partial or not colocated:
        return np.zeros(shape, np.int16), np.full(shape, MAX_DEPTH, np.int16)
    return range_from_cells([m.ctu(ctu_row, ctu_col) for m in colocated])


def _ctu_cell_shape(fmt, ctu_row, ctu_col):
    rows, cols = fmt.cell_shape
    r0, c0 = ctu_row * CELLS_PER_CTU, ctu_col * CELLS_PER_CTU
    return min(CELLS_PER_CTU, rows - r0), min(CELLS_PER_CTU, cols - c0)


def predict_picture(colocated, fmt):
    """:func:`predict` applied to every CTU of a picture of format ``fmt``."""
    coded = fmt.coded
    cell_shape = coded.cell_shape
    colocated = list(colocated)[:4]
    for m in colocated:
        if m.shape != cell_shape:
            raise ValueError(f"depth map of shape {m.shape}, expected {cell_shape}")
    if not colocated:
        return DepthPrediction.full(cell_shape)
    dmin, dmax = range_from_cells([m.adjusted for m in colocated])
    dmin, dmax = np.array(dmin, np.int16), np.array(dmax, np.int16)
    # partial CTUs hang over the picture edge: no reliable neighbour, search everything
    full_rows = coded.height // CTU_SIZE
    full_cols = coded.width // CTU_SIZE
    dmin[full_rows * CELLS_PER_CTU :, :] = 0
    dmin[:, full_cols * CELLS_PER_CTU :] = 0
    dmax[full_rows * CELLS_PER_CTU :, :] = MAX_DEPTH
    dmax[:, full_cols * CELLS_PER_CTU :] = MAX_DEPTH
    return DepthPrediction(dmin, dmax)


def allowed_modes(pred, cell, depth):
    """PU modes searched at ``depth`` for a CU covering ``cell``.

    ``pred`` is either a :class:`DepthPrediction` (then ``cell`` is a
    ``(row, col)`` cell index) or a ``(dmin, dmax)`` pair such as
    :meth:`DepthPrediction.cu_range` returns (then ``cell`` is ignored).
    """
    if isinstance(pred, DepthPrediction):
        r, c = cell
        lo, hi = int(pred.dmin[r, c]), int(pred.dmax[r, c])
    else:
        lo, hi = pred
    if depth > hi:
        return frozenset()
    if depth < lo:
        return frozenset({PuMode.P2Nx2N})
    return frozenset(inter_pu_modes(depth))


def covers_choices(depth_map, pred):
    """True when every CU chosen in ``depth_map`` is reachable under ``pred``.

    A CU of depth d and PU p is reachable when d does not exceed the top of
    its range and, below the bottom of the range, p is 2Nx2N. If this holds
    for an unrestricted encode, the restricted search only removes losing
    candidates and so makes the same decisions.
    """
    rows, cols = depth_map.shape
    seen = np.zeros((rows, cols), dtype=bool)
    for r in range(rows):
        for c in range(cols):
            if seen[r, c]:
                continue
            d = int(depth_map.depth[r, c])
            n = 1 << (MAX_DEPTH - d)
            seen[r : r + n, c : c + n] = True
            lo, hi = pred.cu_range(r * MIN_CU, c * MIN_CU, n * MIN_CU)
            if d > hi:
                return False
            if d < lo and int(depth_map.pu_mode[r, c]) != PuMode.P2Nx2N:
                return False
    return True


def pu_histogram(maps):
    """Relative frequency of each PU mode over all CUs of ``maps``."""
    counts = Counter()
    for m in maps:
        counts.update(pu for _, pu in m.coding_units())
    total = sum(counts.values())
    if total == 0:
        raise ValueError("no coded CUs")
    return {PU_LABELS[p]: counts.get(p, 0) / total for p in PuMode}


def histogram_csv_rows(hist):
    return [(label, f"{freq:.6f}") for label, freq in hist.items()]
