"""View decoder: parses a segment and rebuilds the encoder's reconstruction."""

from __future__ import annotations

import numpy as np

from ..errors import CorruptStream, RefMismatch
from ..lightfield_io import Picture
from .common import (
    CTU_SIZE,
    MAX_DEPTH,
    CodingUnit,
    DepthMapBuilder,
    IntraMode,
    PredKind,
    PuMode,
    crop_picture,
    extend_picture,
    pu_rects,
    unpack_segment,
)
from .encoder import check_format, check_planes
from .entropy import RangeDecoder
from .prediction import reconstruct_cu
from .syntax import SyntaxReader


class DecodedView:
    __slots__ = ("coding_index", "qp", "recon", "depth_map", "coding_units")

    def __init__(self, coding_index, qp, recon, depth_map, coding_units=()):
        self.coding_index = coding_index
        self.qp = qp
        self.recon = recon
        self.depth_map = depth_map
        self.coding_units = coding_units  # parsed CUs in bitstream order


class _ViewDecoder:
    def __init__(self, payload, refs, qp, fmt):
        self.fmt = fmt
        self.qp = qp
        self.bd = fmt.bit_depth
        sx, sy = fmt.chroma_shift
        self.shifts = ((0, 0), (sx, sy), (sx, sy))
        self.refs = [extend_picture(r.planes, fmt) for r in refs]
        self.recon = [np.zeros(s, dtype=np.int64) for s in fmt.plane_shapes]
        self.dec = RangeDecoder(payload)
        self.reader = SyntaxReader(self.dec)
        self.depth_map = DepthMapBuilder(fmt)
        self.cus = []

    def _read_cu(self, y, x, size, depth, inter):
        r = self.reader
        kind = r.pred_kind() if inter else PredKind.INTRA
        imode, pu_mode, motion = IntraMode.DC, PuMode.P2Nx2N, ()
        if kind == PredKind.INTRA:
            imode = r.intra_mode()
        else:
            pu_mode = r.pu_mode(depth)
            motion = tuple(r.motion() for _ in pu_rects(pu_mode, size))
            for mi in motion:
                if mi.ref_slot >= len(self.refs):
                    raise RefMismatch(
                        f"CU at ({y}, {x}) uses reference slot {mi.ref_slot} "
                        f"but only {len(self.refs)} references were supplied"
                    )
        cbf = [r.cbf(k, kind) for k in range(3)]
        levels = []
        for k in range(3):
            if cbf[k]:
                sx, sy = self.shifts[k]
                levels.append(r.coefficients(k, size >> sy, size >> sx))
            else:
                levels.append(None)
        return CodingUnit(y, x, size, depth, kind, imode, pu_mode, motion, tuple(levels))

    def _node(self, y, x, size, depth, inter):
        fmt = self.fmt
        if y >= fmt.height or x >= fmt.width:
            return
        crosses = y + size > fmt.height or x + size > fmt.width
        split = crosses
        if not crosses and depth < MAX_DEPTH:
            split = self.reader.split(depth)
        if crosses and depth == MAX_DEPTH:
            raise CorruptStream("CU at the deepest level crosses the picture edge")
        if not split:
            cu = self._read_cu(y, x, size, depth, inter)
            reconstruct_cu(cu, self.recon, self.refs, self.shifts, self.qp, self.bd)
            self.depth_map.record(cu)
            self.cus.append(cu)
            return
        half = size // 2
        for dy in (0, half):
            for dx in (0, half):
                self._node(y + dy, x + dx, half, depth + 1, inter)

    def decode(self, out_fmt):
        inter = self.reader.inter_enabled()
        if inter and not self.refs:
            raise RefMismatch("segment is inter coded but no references were supplied")
        fmt = self.fmt
        for cr in range(fmt.ctu_rows):
            for cc in range(fmt.ctu_cols):
                self._node(cr * CTU_SIZE, cc * CTU_SIZE, CTU_SIZE, 0, inter)
        self.dec.check_consumed()
        return Picture(crop_picture(self.recon, out_fmt)), self.depth_map.build(), self.cus


def decode_view(segment, refs, fmt):
    """Decode one view segment (header included) against ``refs``.

    Raises CorruptStream on malformed or truncated data and RefMismatch when
    the segment needs more references than were supplied.
    """
    check_format(fmt)
    for r in refs:
        check_planes(r.planes, fmt)
    coding_index, qp, payload, end = unpack_segment(segment)
    if end != len(segment):
        raise CorruptStream(f"{len(segment) - end} trailing bytes after the view segment")
    recon, depth_map, cus = _ViewDecoder(payload, refs, qp, fmt.coded).decode(fmt)
    return DecodedView(coding_index, qp, recon, depth_map, tuple(cus))
