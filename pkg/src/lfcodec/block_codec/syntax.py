"""CTU syntax: binarisation, context assignment and RDO rate estimates.

Per coding unit, in order:

    split_flag                    ctx by depth (absent at 8x8 or when the CU
                                  crosses the picture edge: implicit split)
    pred_kind                     only when the segment enables inter
    intra: intra_mode             2 bins
    inter: pu_mode                "is 2Nx2N", then direction / AMP bins
           per PU: ref_slot       2 bins
                   mv dx, dy      zero flag, bypass sign, EG0(|v| - 1)
    cbf[Y, Cb, Cr]                ctx by plane type and pred kind
    per coded plane: coefficients
        last position             EG0 of the scan index, prefix ctx-coded
        significance flags        up to (excluding) the last position
        per non-zero level        gt1, gt2, EG0 remainder (bypass), sign

The writer and reader below are mirror images; keep them in lockstep.
"""

from __future__ import annotations

import numpy as np

from ..errors import CorruptStream
from .common import AMP_MODES, MAX_DEPTH, IntraMode, MotionInfo, PredKind, PuMode
from .entropy import Contexts
from .motion import eg0_length, mv_bits
from .transform import MAX_LEVEL, scan_diagonals, scan_order

CTX_SPLIT = 0  # 3
CTX_PRED_KIND = 3
CTX_INTRA_MODE = 4  # 2
CTX_PU_2N = 6  # 4, by depth
CTX_PU_DIR = 10
CTX_PU_AMP = 11
CTX_PU_NXN = 12  # 2
CTX_REF_SLOT = 14  # 2
CTX_MV_ZERO = 16  # 2
CTX_MV_PREFIX = 18  # 8
CTX_CBF = 26  # 6 = plane type x pred kind
CTX_LAST = 32  # 2 x 12
CTX_SIG = 56  # 2 x 7
CTX_GT1 = 70  # 2 x 4
CTX_GT2 = 78  # 2
NUM_CONTEXTS = 80

_LAST_CTX_PER_TYPE = 12
_SIG_CLASSES = 7
_MV_PREFIX_CTX = 8
_MAX_EG_PREFIX = 24

# static bin-cost guesses for RDO (bits)
SPLIT_BITS = 1.0
PRED_KIND_BITS = 1.0
INTRA_MODE_BITS = 2.0
REF_SLOT_BITS = 1.5


def _sig_class(diag):
    if diag < 3:
        return diag
    if diag <= 4:
        return 3
    if diag <= 8:
        return 4
    if diag <= 16:
        return 5
    return 6


_SIG_CLASS_TABLE = np.array([_sig_class(d) for d in range(128)], dtype=np.int64)


def pu_mode_bits(mode, depth):
    if mode == PuMode.P2Nx2N:
        return 1.0
    if depth == MAX_DEPTH:
        return 2.5
    return 4.0 if mode in AMP_MODES else 3.0


def motion_bits(mi):
    return REF_SLOT_BITS + mv_bits(mi.dx, mi.dy)


def estimate_coef_bits(levels_scan):
    """Estimated bits to code each row of ``(K, n)`` levels in scan order, CBF included."""
    lv = np.abs(levels_scan)
    nz = lv != 0
    nnz = nz.sum(axis=1)
    n = lv.shape[1]
    last = n - 1 - np.argmax(nz[:, ::-1], axis=1)
    level_bits = np.where(
        lv == 0, 0.0,
        2.4 + np.where(lv == 1, 0.4, np.where(lv == 2, 1.8, 2.6 + eg0_length(np.maximum(lv - 3, 0)))),
    ).sum(axis=1)
    coded = 0.9 * eg0_length(last) + 0.5 * (last + 1 - nnz) + level_bits
    return 1.0 + np.where(nnz > 0, coded, 0.0)


class SyntaxWriter:
    def __init__(self, enc):
        self.enc = enc
        self.ctx = Contexts(NUM_CONTEXTS)

    def _eg0(self, v, ctx_base, ctx_count):
        enc, ctx = self.enc, self.ctx
        n = int(v + 1).bit_length() - 1
        for i in range(n):
            enc.encode(ctx, ctx_base + min(i, ctx_count - 1), 1)
        enc.encode(ctx, ctx_base + min(n, ctx_count - 1), 0)
        enc.encode_bits(v + 1 - (1 << n), n)

    def _eg0_bypass(self, v):
        n = int(v + 1).bit_length() - 1
        for _ in range(n):
            self.enc.encode_bypass(1)
        self.enc.encode_bypass(0)
        self.enc.encode_bits(v + 1 - (1 << n), n)

    def inter_enabled(self, flag):
        self.enc.encode_bypass(int(flag))

    def split(self, depth, flag):
        self.enc.encode(self.ctx, CTX_SPLIT + depth, int(flag))

    def pred_kind(self, kind):
        self.enc.encode(self.ctx, CTX_PRED_KIND, int(kind))

    def intra_mode(self, mode):
        m = int(mode)
        self.enc.encode(self.ctx, CTX_INTRA_MODE, m >> 1)
        self.enc.encode(self.ctx, CTX_INTRA_MODE + 1, m & 1)

    def pu_mode(self, mode, depth):
        enc, ctx = self.enc, self.ctx
        enc.encode(ctx, CTX_PU_2N + depth, int(mode != PuMode.P2Nx2N))
        if mode == PuMode.P2Nx2N:
            return
        if depth == MAX_DEPTH:
            enc.encode(ctx, CTX_PU_NXN, int(mode != PuMode.P2NxN))
            if mode != PuMode.P2NxN:
                enc.encode(ctx, CTX_PU_NXN + 1, int(mode == PuMode.PNxN))
            return
        vertical = mode in (PuMode.PNx2N, PuMode.PnLx2N, PuMode.PnRx2N)
        enc.encode(ctx, CTX_PU_DIR, int(vertical))
        amp = mode in AMP_MODES
        enc.encode(ctx, CTX_PU_AMP, int(amp))
        if amp:
            enc.encode_bypass(int(mode in (PuMode.P2NxnD, PuMode.PnRx2N)))

    def motion(self, mi):
        enc, ctx = self.enc, self.ctx
        enc.encode(ctx, CTX_REF_SLOT, mi.ref_slot >> 1)
        enc.encode(ctx, CTX_REF_SLOT + 1, mi.ref_slot & 1)
        for comp, v in ((0, mi.dx), (1, mi.dy)):
            enc.encode(ctx, CTX_MV_ZERO + comp, int(v != 0))
            if v:
                enc.encode_bypass(int(v < 0))
                self._eg0(abs(v) - 1, CTX_MV_PREFIX, _MV_PREFIX_CTX)

    def cbf(self, plane, kind, flag):
        self.enc.encode(self.ctx, CTX_CBF + 2 * min(plane, 1) + int(kind), int(flag))

    def coefficients(self, plane, levels):
        enc, ctx = self.enc, self.ctx
        t = min(plane, 1)
        h, w = levels.shape
        scan = levels.ravel()[scan_order(h, w)].tolist()
        diags = scan_diagonals(h, w)
        last = max(i for i, v in enumerate(scan) if v)
        self._eg0(last, CTX_LAST + t * _LAST_CTX_PER_TYPE, _LAST_CTX_PER_TYPE)
        sig_base = CTX_SIG + t * _SIG_CLASSES
        classes = _SIG_CLASS_TABLE[np.minimum(diags[: last + 1], 127)].tolist()
        for i in range(last):
            enc.encode(ctx, sig_base + classes[i], int(scan[i] != 0))
        gt1_base = CTX_GT1 + t * 4
        for i in range(last + 1):
            v = scan[i]
            if not v:
                continue
            a = abs(v)
            enc.encode(ctx, gt1_base + min(classes[i], 3), int(a > 1))
            if a > 1:
                enc.encode(ctx, CTX_GT2 + t, int(a > 2))
                if a > 2:
                    self._eg0_bypass(a - 3)
            enc.encode_bypass(int(v < 0))


class SyntaxReader:
    def __init__(self, dec):
        self.dec = dec
        self.ctx = Contexts(NUM_CONTEXTS)

    def _eg0(self, ctx_base, ctx_count):
        dec, ctx = self.dec, self.ctx
        n = 0
        while dec.decode(ctx, ctx_base + min(n, ctx_count - 1)):
            n += 1
            if n > _MAX_EG_PREFIX:
                raise CorruptStream("Exp-Golomb prefix too long")
        return (1 << n) - 1 + dec.decode_bits(n)

    def _eg0_bypass(self):
        n = 0
        while self.dec.decode_bypass():
            n += 1
            if n > _MAX_EG_PREFIX:
                raise CorruptStream("Exp-Golomb prefix too long")
        return (1 << n) - 1 + self.dec.decode_bits(n)

    def inter_enabled(self):
        return bool(self.dec.decode_bypass())

    def split(self, depth):
        return bool(self.dec.decode(self.ctx, CTX_SPLIT + depth))

    def pred_kind(self):
        return PredKind(self.dec.decode(self.ctx, CTX_PRED_KIND))

    def intra_mode(self):
        hi = self.dec.decode(self.ctx, CTX_INTRA_MODE)
        lo = self.dec.decode(self.ctx, CTX_INTRA_MODE + 1)
        return IntraMode((hi << 1) | lo)

    def pu_mode(self, depth):
        dec, ctx = self.dec, self.ctx
        if not dec.decode(ctx, CTX_PU_2N + depth):
            return PuMode.P2Nx2N
        if depth == MAX_DEPTH:
            if not dec.decode(ctx, CTX_PU_NXN):
                return PuMode.P2NxN
            return PuMode.PNxN if dec.decode(ctx, CTX_PU_NXN + 1) else PuMode.PNx2N
        vertical = dec.decode(ctx, CTX_PU_DIR)
        amp = dec.decode(ctx, CTX_PU_AMP)
        if not amp:
            return PuMode.PNx2N if vertical else PuMode.P2NxN
        second = dec.decode_bypass()
        if vertical:
            return PuMode.PnRx2N if second else PuMode.PnLx2N
        return PuMode.P2NxnD if second else PuMode.P2NxnU

    def motion(self):
        dec, ctx = self.dec, self.ctx
        slot = (dec.decode(ctx, CTX_REF_SLOT) << 1) | dec.decode(ctx, CTX_REF_SLOT + 1)
        comps = []
        for comp in (0, 1):
            v = 0
            if dec.decode(ctx, CTX_MV_ZERO + comp):
                neg = dec.decode_bypass()
                v = self._eg0(CTX_MV_PREFIX, _MV_PREFIX_CTX) + 1
                if neg:
                    v = -v
            comps.append(v)
        return MotionInfo(slot, comps[0], comps[1])

    def cbf(self, plane, kind):
        return bool(self.dec.decode(self.ctx, CTX_CBF + 2 * min(plane, 1) + int(kind)))

    def coefficients(self, plane, h, w):
        dec, ctx = self.dec, self.ctx
        t = min(plane, 1)
        n = h * w
        last = self._eg0(CTX_LAST + t * _LAST_CTX_PER_TYPE, _LAST_CTX_PER_TYPE)
        if last >= n:
            raise CorruptStream(f"last coefficient index {last} outside a {h}x{w} block")
        diags = scan_diagonals(h, w)
        classes = _SIG_CLASS_TABLE[np.minimum(diags[: last + 1], 127)].tolist()
        sig_base = CTX_SIG + t * _SIG_CLASSES
        sig = [dec.decode(ctx, sig_base + classes[i]) for i in range(last)]
        sig.append(1)
        gt1_base = CTX_GT1 + t * 4
        scan = [0] * n
        for i in range(last + 1):
            if not sig[i]:
                continue
            a = 1
            if dec.decode(ctx, gt1_base + min(classes[i], 3)):
                a = 2
                if dec.decode(ctx, CTX_GT2 + t):
                    a = 3 + self._eg0_bypass()
                    if a > MAX_LEVEL:
                        raise CorruptStream("coefficient level out of range")
            scan[i] = -a if dec.decode_bypass() else a
        levels = np.zeros(n, dtype=np.int64)
        levels[scan_order(h, w)] = scan
        return levels.reshape(h, w)
