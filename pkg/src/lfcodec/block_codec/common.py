"""Definitions shared by the block encoder and decoder."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import CorruptStream
from ..lightfield_io import CHROMA_SHIFT

CTU_SIZE = 64
MIN_CU = 8
MAX_DEPTH = 3
CELLS_PER_CTU = CTU_SIZE // MIN_CU

SEGMENT_HEADER = struct.Struct("<HBI")  # coding_index, qp, payload length


class PredKind(enum.IntEnum):
    INTRA = 0
    INTER = 1


class IntraMode(enum.IntEnum):
    DC = 0
    PLANAR = 1
    HORIZONTAL = 2
    VERTICAL = 3


class PuMode(enum.IntEnum):
    P2Nx2N = 0
    P2NxN = 1
    PNx2N = 2
    PNxN = 3
    P2NxnU = 4
    P2NxnD = 5
    PnLx2N = 6
    PnRx2N = 7


PU_LABELS = {
    PuMode.P2Nx2N: "2Nx2N",
    PuMode.P2NxN: "2NxN",
    PuMode.PNx2N: "Nx2N",
    PuMode.PNxN: "NxN",
    PuMode.P2NxnU: "2NxnU",
    PuMode.P2NxnD: "2NxnD",
    PuMode.PnLx2N: "nLx2N",
    PuMode.PnRx2N: "nRx2N",
}

AMP_MODES = (PuMode.P2NxnU, PuMode.P2NxnD, PuMode.PnLx2N, PuMode.PnRx2N)


def inter_pu_modes(depth):
    """PU modes an inter CU may use: NxN only at the deepest level, AMP above it."""
    if depth == MAX_DEPTH:
        return (PuMode.P2Nx2N, PuMode.P2NxN, PuMode.PNx2N, PuMode.PNxN)
    return (PuMode.P2Nx2N, PuMode.P2NxN, PuMode.PNx2N) + AMP_MODES


def pu_rects(mode, size):
    """``(y, x, h, w)`` of each PU of a ``size x size`` CU, relative to the CU."""
    s, h, q = size, size // 2, size // 4
    if mode == PuMode.P2Nx2N:
        return ((0, 0, s, s),)
    if mode == PuMode.P2NxN:
        return ((0, 0, h, s), (h, 0, h, s))
    if mode == PuMode.PNx2N:
        return ((0, 0, s, h), (0, h, s, h))
    if mode == PuMode.PNxN:
        return ((0, 0, h, h), (0, h, h, h), (h, 0, h, h), (h, h, h, h))
    if mode == PuMode.P2NxnU:
        return ((0, 0, q, s), (q, 0, s - q, s))
    if mode == PuMode.P2NxnD:
        return ((0, 0, s - q, s), (s - q, 0, q, s))
    if mode == PuMode.PnLx2N:
        return ((0, 0, s, q), (0, q, s, s - q))
    if mode == PuMode.PnRx2N:
        return ((0, 0, s, s - q), (0, s - q, s, q))
    raise ValueError(mode)


def lambda_for_qp(qp):
    return 0.85 * 2.0 ** ((qp - 12) / 3.0)


@dataclass(frozen=True)
class ViewFormat:
    width: int
    height: int
    bit_depth: int
    chroma_format: str

    @property
    def chroma_shift(self):
        return CHROMA_SHIFT[self.chroma_format]

    @property
    def plane_shapes(self):
        sx, sy = self.chroma_shift
        c = (self.height >> sy, self.width >> sx)
        return ((self.height, self.width), c, c)

    @property
    def coded(self):
        """The format actually coded: dimensions rounded up to whole 8x8 cells.

        Pictures are edge-extended to this size before coding and cropped
        back afterwards, like a conformance window.
        """
        return ViewFormat(
            -(-self.width // MIN_CU) * MIN_CU,
            -(-self.height // MIN_CU) * MIN_CU,
            self.bit_depth,
            self.chroma_format,
        )

    @property
    def ctu_rows(self):
        return -(-self.height // CTU_SIZE)

    @property
    def ctu_cols(self):
        return -(-self.width // CTU_SIZE)

    @property
    def cell_shape(self):
        return -(-self.height // MIN_CU), -(-self.width // MIN_CU)

    def ctu_is_partial(self, ctu_row, ctu_col):
        return (ctu_row + 1) * CTU_SIZE > self.height or (ctu_col + 1) * CTU_SIZE > self.width

    @classmethod
    def of_grid(cls, grid):
        return cls(grid.width, grid.height, grid.bit_depth, grid.chroma_format)


@dataclass(frozen=True)
class MotionInfo:
    ref_slot: int
    dx: int
    dy: int


@dataclass
class CodingUnit:
    """A leaf of the CTU quadtree as chosen by the encoder (or parsed)."""

    y: int
    x: int
    size: int
    depth: int
    pred_kind: PredKind
    intra_mode: IntraMode = IntraMode.DC
    pu_mode: PuMode = PuMode.P2Nx2N
    motion: tuple = ()
    levels: tuple = (None, None, None)  # per plane, None when the CBF is 0


@dataclass(frozen=True)
class DepthMap:
    """Per-8x8-cell record of the chosen CU depth and PU mode of one view."""

    depth: np.ndarray
    pu_mode: np.ndarray
    pred_kind: np.ndarray

    def __post_init__(self):
        for a in (self.depth, self.pu_mode, self.pred_kind):
            a.flags.writeable = False

    @property
    def adjusted(self):
        """CU depth plus one wherever the PU is not 2Nx2N (0..4)."""
        return self.depth.astype(np.int16) + (self.pu_mode != PuMode.P2Nx2N)

    @property
    def shape(self):
        return self.depth.shape

    def ctu(self, ctu_row, ctu_col):
        r0, c0 = ctu_row * CELLS_PER_CTU, ctu_col * CELLS_PER_CTU
        sl = (slice(r0, r0 + CELLS_PER_CTU), slice(c0, c0 + CELLS_PER_CTU))
        return self.adjusted[sl]

    def coding_units(self):
        """``[(depth, pu_mode), ...]`` with one entry per CU (read off the cells)."""
        out = []
        rows, cols = self.depth.shape
        seen = np.zeros((rows, cols), dtype=bool)
        for r in range(rows):
            for c in range(cols):
                if seen[r, c]:
                    continue
                d = int(self.depth[r, c])
                n = 1 << (MAX_DEPTH - d)
                seen[r : r + n, c : c + n] = True
                out.append((d, PuMode(int(self.pu_mode[r, c]))))
        return out

    def to_csv_rows(self):
        rows, cols = self.depth.shape
        adj = self.adjusted
        return [
            (r, c, int(self.depth[r, c]), PU_LABELS[PuMode(int(self.pu_mode[r, c]))],
             int(adj[r, c]))
            for r in range(rows)
            for c in range(cols)
        ]


class DepthMapBuilder:
    def __init__(self, fmt):
        shape = fmt.cell_shape
        self.depth = np.zeros(shape, dtype=np.int8)
        self.pu_mode = np.zeros(shape, dtype=np.int8)
        self.pred_kind = np.zeros(shape, dtype=np.int8)

    def record(self, cu):
        r, c, n = cu.y // MIN_CU, cu.x // MIN_CU, cu.size // MIN_CU
        self.depth[r : r + n, c : c + n] = cu.depth
        self.pu_mode[r : r + n, c : c + n] = int(cu.pu_mode)
        self.pred_kind[r : r + n, c : c + n] = int(cu.pred_kind)

    def build(self):
        return DepthMap(self.depth, self.pu_mode, self.pred_kind)


def extend_picture(planes, fmt):
    """Edge-extend planes to the coded size of ``fmt`` (no copy when already there)."""
    shapes = fmt.coded.plane_shapes
    out = []
    for p, (h, w) in zip(planes, shapes):
        p = np.asarray(p)
        if p.shape != (h, w):
            p = np.pad(p, ((0, h - p.shape[0]), (0, w - p.shape[1])), mode="edge")
        out.append(p)
    return tuple(out)


def crop_picture(planes, fmt):
    return tuple(p[:h, :w] for p, (h, w) in zip(planes, fmt.plane_shapes))


def pack_segment(coding_index, qp, payload):
    if not 0 <= coding_index <= 0xFFFF:
        raise ValueError(f"coding index {coding_index} does not fit in u16")
    return SEGMENT_HEADER.pack(coding_index, qp, len(payload)) + payload


def unpack_segment(data, offset=0):
    """Returns ``(coding_index, qp, payload, next_offset)``."""
    end = offset + SEGMENT_HEADER.size
    if len(data) < end:
        raise CorruptStream("truncated view segment header")
    coding_index, qp, length = SEGMENT_HEADER.unpack_from(data, offset)
    if qp > 51:
        raise CorruptStream(f"segment QP {qp} out of range")
    if len(data) < end + length:
        raise CorruptStream(
            f"view segment {coding_index} truncated: {len(data) - end} of {length} payload bytes"
        )
    return coding_index, qp, bytes(data[end : end + length]), end + length
