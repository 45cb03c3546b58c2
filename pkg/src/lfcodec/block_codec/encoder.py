"""Rate-distortion optimised view encoder.

Each CTU is searched depth-first. At every CU the leaf is evaluated first:
all intra modes and every allowed inter PU mode are transformed and
quantised as one batch, with distortion estimated in the coefficient domain
and rate from static bin-cost estimates. The winning leaf is reconstructed
with the same routine the decoder uses, then the split is tried on top of it
and the cheaper of the two is kept. Syntax for the CTU is written only after
its quadtree is final.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigError, DimensionMismatch
from ..lightfield_io import Picture
from .common import (
    CTU_SIZE,
    MAX_DEPTH,
    CodingUnit,
    DepthMap,
    DepthMapBuilder,
    IntraMode,
    MotionInfo,
    PredKind,
    PuMode,
    ViewFormat,
    crop_picture,
    extend_picture,
    inter_pu_modes,
    lambda_for_qp,
    pack_segment,
    pu_rects,
)
from .entropy import RangeEncoder
from .motion import CtuMotionSearch
from .prediction import inter_predict, intra_predict_all, reconstruct_cu
from .syntax import (
    INTRA_MODE_BITS,
    PRED_KIND_BITS,
    SPLIT_BITS,
    SyntaxWriter,
    estimate_coef_bits,
    motion_bits,
    pu_mode_bits,
)
from .transform import COEF_FRAC, dequantize, forward_transform, quantize, scan_order

MAX_REFS = 4
CHROMA_WEIGHT = 0.25
_COEF_SCALE = float(1 << (2 * COEF_FRAC))


@dataclass
class RdoConfig:
    qp: int
    lam: Optional[float] = None
    search_range: int = 8
    # anything with ``cu_range(y, x, size) -> (lo, hi)``; None searches all depths
    depth_prediction: object = None
    # diagnostic: leaves only at this depth (boundary splits still apply)
    force_depth: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.qp <= 51:
            raise ConfigError(f"qp {self.qp} outside 0..51")
        if self.lam is None:
            self.lam = lambda_for_qp(self.qp)
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if self.search_range < 0:
            raise ConfigError("search range must be >= 0")

    @property
    def lam_motion(self):
        return float(np.sqrt(self.lam))


@dataclass
class EncodedView:
    segment: bytes
    recon: Picture
    depth_map: DepthMap
    cost: float

    @property
    def bits(self):
        return 8 * len(self.segment)


def check_format(fmt):
    sx, sy = fmt.chroma_shift
    if fmt.width % (1 << sx) or fmt.height % (1 << sy) or fmt.width < 1 or fmt.height < 1:
        raise DimensionMismatch(
            f"{fmt.width}x{fmt.height} views cannot carry {fmt.chroma_format} chroma exactly"
        )


def check_planes(planes, fmt):
    for p, shape in zip(planes, fmt.plane_shapes):
        if np.shape(p) != shape:
            raise DimensionMismatch(f"plane of shape {np.shape(p)}, expected {shape}")


class _ViewEncoder:
    def __init__(self, view, refs, cfg, fmt):
        self.fmt = fmt
        self.cfg = cfg
        self.bd = fmt.bit_depth
        self.norm = 1.0 / float(1 << (2 * (self.bd - 8)))
        sx, sy = fmt.chroma_shift
        self.shifts = ((0, 0), (sx, sy), (sx, sy))
        self.weights = (1.0, CHROMA_WEIGHT, CHROMA_WEIGHT)
        self.orig = [np.asarray(p, dtype=np.int64) for p in extend_picture(view.planes, fmt)]
        self.recon = [np.zeros(s, dtype=np.int64) for s in fmt.plane_shapes]
        self.refs = [extend_picture(r.planes, fmt) for r in refs]
        # candidate prediction reads from padded copies: slicing, no clamping
        self.pad = cfg.search_range + 1
        self.refs_padded = [
            tuple(np.pad(np.asarray(p, dtype=np.int64), self.pad, mode="edge") for p in r)
            for r in self.refs
        ]
        self.inter = bool(self.refs)
        self.lam = cfg.lam
        self.pred = cfg.depth_prediction
        self.search = None
        self.ctu_origin = (0, 0)

    # -- leaf evaluation -------------------------------------------------

    def _candidates(self, y, x, size, depth, all_modes):
        """Per-plane prediction stacks plus ``(kind, intra_mode, pu_mode, motion, bits)``."""
        stacks = [[], [], []]
        infos = []
        for k in range(3):
            sx, sy = self.shifts[k]
            stacks[k].append(
                intra_predict_all(self.recon[k], y >> sy, x >> sx, size >> sy, size >> sx, self.bd)
            )
        kind_bits = PRED_KIND_BITS if self.inter else 0.0
        for m in IntraMode:
            infos.append((PredKind.INTRA, m, PuMode.P2Nx2N, (), kind_bits + INTRA_MODE_BITS))
        if self.inter:
            cy, cx = y - self.ctu_origin[0], x - self.ctu_origin[1]
            modes = inter_pu_modes(depth) if all_modes else (PuMode.P2Nx2N,)
            rects = [pu_rects(mode, size) for mode in modes]
            found = iter(self.search.search_many(
                [(cy + py, cx + px, ph, pw) for rs in rects for py, px, ph, pw in rs]
            ))
            for mode, rs in zip(modes, rects):
                motion = tuple(MotionInfo(*next(found)) for _ in rs)
                bits = kind_bits + pu_mode_bits(mode, depth) + sum(motion_bits(mi) for mi in motion)
                for k in range(3):
                    stacks[k].append(
                        inter_predict(self.refs_padded, k, y, x, size, mode, motion,
                                      self.shifts[k], self.pad)[None]
                    )
                infos.append((PredKind.INTER, IntraMode.DC, mode, motion, bits))
        return [np.concatenate(s) for s in stacks], infos

    def _evaluate_leaf(self, y, x, size, depth, all_modes, split_bits):
        preds, infos = self._candidates(y, x, size, depth, all_modes)
        n = len(infos)
        total = np.array([info[4] + split_bits for info in infos]) * self.lam
        qp = self.cfg.qp
        levels_all, flats, d_coded, d_zero = [], [], [], []
        for k in range(3):
            sx, sy = self.shifts[k]
            h, w = size >> sy, size >> sx
            yy, xx = y >> sy, x >> sx
            res = self.orig[k][yy : yy + h, xx : xx + w][None] - preds[k]
            coefs = forward_transform(res)
            levels = quantize(coefs, qp, self.bd)
            err = coefs - dequantize(levels, qp, self.bd)
            scale = self.weights[k] * self.norm / _COEF_SCALE
            d_coded.append((err * err).sum(axis=(1, 2)) * scale)
            d_zero.append((coefs * coefs).sum(axis=(1, 2)) * scale)
            levels_all.append(levels)
            flats.append(levels.reshape(n, -1)[:, scan_order(h, w)])
        # one rate estimate for all planes; trailing zero padding costs nothing
        width = flats[0].shape[1]
        padded = np.zeros((3 * n, width), dtype=np.int64)
        for k, f in enumerate(flats):
            padded[k * n : (k + 1) * n, : f.shape[1]] = f
        coef_bits = estimate_coef_bits(padded).reshape(3, n)
        any_nz = padded.any(axis=1).reshape(3, n)
        coded_all, bits_all = [], []
        for k in range(3):
            j_coded = d_coded[k] + self.lam * coef_bits[k]
            j_zero = d_zero[k] + self.lam * 1.0
            coded = (j_coded < j_zero) & any_nz[k]
            total += np.where(coded, j_coded, j_zero)
            coded_all.append(coded)
            bits_all.append(np.where(coded, coef_bits[k], 1.0))
        best = int(np.argmin(total))
        kind, imode, pu_mode, motion, _ = infos[best]
        cu = CodingUnit(
            y, x, size, depth, kind, imode, pu_mode, motion,
            tuple(levels_all[k][best] if coded_all[k][best] else None for k in range(3)),
        )
        reconstruct_cu(cu, self.recon, self.refs, self.shifts, qp, self.bd)
        # keep the estimated rate but measure the true distortion
        true_d = 0.0
        for k in range(3):
            sx, sy = self.shifts[k]
            h, w = size >> sy, size >> sx
            yy, xx = y >> sy, x >> sx
            diff = self.orig[k][yy : yy + h, xx : xx + w] - self.recon[k][yy : yy + h, xx : xx + w]
            true_d += self.weights[k] * self.norm * float((diff * diff).sum())
        rate_bits = infos[best][4] + split_bits + sum(float(b[best]) for b in bits_all)
        return cu, true_d + self.lam * rate_bits

    # -- quadtree ----------------------------------------------------------

    def _save(self, y, x, size):
        out = []
        for k in range(3):
            sx, sy = self.shifts[k]
            out.append(self.recon[k][y >> sy : (y + size) >> sy, x >> sx : (x + size) >> sx].copy())
        return out

    def _restore(self, y, x, size, saved):
        for k in range(3):
            sx, sy = self.shifts[k]
            self.recon[k][y >> sy : (y + size) >> sy, x >> sx : (x + size) >> sx] = saved[k]

    def _children(self, y, x, size, depth):
        half = size // 2
        cost, cus = 0.0, []
        for dy in (0, half):
            for dx in (0, half):
                cy, cx = y + dy, x + dx
                if cy >= self.fmt.height or cx >= self.fmt.width:
                    continue
                c, l = self._code_cu(cy, cx, half, depth + 1)
                cost += c
                cus.extend(l)
        return cost, cus

    def _code_cu(self, y, x, size, depth):
        """Returns ``(rd_cost, [CodingUnit, ...] in z-order)``."""
        fmt = self.fmt
        if y + size > fmt.height or x + size > fmt.width:
            return self._children(y, x, size, depth)
        can_split = depth < MAX_DEPTH
        can_leaf = True
        all_modes = True
        if self.cfg.force_depth is not None:
            can_leaf = depth >= self.cfg.force_depth or not can_split
            can_split = can_split and depth < self.cfg.force_depth
        elif self.pred is not None:
            lo, hi = self.pred.cu_range(y, x, size)
            if depth > hi:
                # deeper than any co-located CU: fall back to a 2Nx2N leaf
                can_split, all_modes = False, False
            else:
                can_split = can_split and depth < hi
                all_modes = depth >= lo
        split_bits = SPLIT_BITS if depth < MAX_DEPTH else 0.0
        leaf = None
        if can_leaf:
            cu, cost = self._evaluate_leaf(y, x, size, depth, all_modes, split_bits)
            leaf = (cost, [cu])
            if not can_split:
                return leaf
        saved = self._save(y, x, size) if leaf is not None else None
        s_cost, s_cus = self._children(y, x, size, depth)
        s_cost += self.lam * split_bits
        if leaf is not None and leaf[0] <= s_cost:
            self._restore(y, x, size, saved)
            return leaf
        return s_cost, s_cus

    # -- syntax ------------------------------------------------------------

    def _write_node(self, w, cus, pos, y, x, size, depth):
        fmt = self.fmt
        if y >= fmt.height or x >= fmt.width:
            return pos
        crosses = y + size > fmt.height or x + size > fmt.width
        if not crosses:
            cu = cus[pos]
            is_leaf = cu.size == size
            if depth < MAX_DEPTH:
                w.split(depth, not is_leaf)
            if is_leaf:
                write_cu(w, cu, self.inter)
                return pos + 1
        half = size // 2
        for dy in (0, half):
            for dx in (0, half):
                pos = self._write_node(w, cus, pos, y + dy, x + dx, half, depth + 1)
        return pos

    def encode(self, coding_index, out_fmt):
        fmt = self.fmt
        enc = RangeEncoder()
        writer = SyntaxWriter(enc)
        writer.inter_enabled(self.inter)
        depth_map = DepthMapBuilder(fmt)
        total = 0.0
        ref_lumas = [r[0] for r in self.refs]
        for cr in range(fmt.ctu_rows):
            for cc in range(fmt.ctu_cols):
                y0, x0 = cr * CTU_SIZE, cc * CTU_SIZE
                self.ctu_origin = (y0, x0)
                if self.inter:
                    h = min(CTU_SIZE, fmt.height - y0)
                    w = min(CTU_SIZE, fmt.width - x0)
                    self.search = CtuMotionSearch(
                        self.orig[0], ref_lumas, y0, x0, h, w,
                        self.cfg.search_range, self.cfg.lam_motion, self.bd,
                    )
                cost, cus = self._code_cu(y0, x0, CTU_SIZE, 0)
                total += cost
                used = self._write_node(writer, cus, 0, y0, x0, CTU_SIZE, 0)
                assert used == len(cus)
                for cu in cus:
                    depth_map.record(cu)
        payload = enc.finish()
        recon = Picture(crop_picture(self.recon, out_fmt))
        segment = pack_segment(coding_index, self.cfg.qp, payload)
        return EncodedView(segment, recon, depth_map.build(), total)


def write_cu(w, cu, inter_enabled):
    if inter_enabled:
        w.pred_kind(cu.pred_kind)
    if cu.pred_kind == PredKind.INTRA:
        w.intra_mode(cu.intra_mode)
    else:
        w.pu_mode(cu.pu_mode, cu.depth)
        for mi in cu.motion:
            w.motion(mi)
    for k in range(3):
        w.cbf(k, cu.pred_kind, cu.levels[k] is not None)
    for k in range(3):
        if cu.levels[k] is not None:
            w.coefficients(k, cu.levels[k])


def encode_view(view, refs, cfg, fmt=None, coding_index=0):
    """Encode one view against already reconstructed ``refs`` (at most 4).

    Returns an :class:`EncodedView` holding the segment bytes (header
    included), the reconstruction the decoder will reproduce, and the
    per-cell depth map of the chosen partitioning.
    """
    if fmt is None:
        fmt = ViewFormat(view.width, view.height, 8, "444")
    check_format(fmt)
    check_planes(view.planes, fmt)
    for r in refs:
        check_planes(r.planes, fmt)
    if len(refs) > MAX_REFS:
        raise ConfigError(f"at most {MAX_REFS} references, got {len(refs)}")
    return _ViewEncoder(view, refs, cfg, fmt.coded).encode(coding_index, fmt)
