"""Light-field encode/decode orchestration and the ``.lflf`` container.

The intra anchor (coding index 0, the central view for the proposed scan)
is coded once; every pseudo-sequence of the plan is then coded against its
reconstruction. Sequences share nothing else, so they can be encoded in
separate processes and decoded on their own.

Container layout, all integers little-endian::

    offset  size  field
    0       4     magic b"LFLF"
    4       1     version (1)
    5       2     grid rows
    7       2     grid cols
    9       2     view width
    11      2     view height
    13      1     bit depth
    14      1     chroma format   0 = 4:4:4, 1 = 4:2:2, 2 = 4:2:0
    15      1     scan kind       index into SCAN_KINDS
    16      1     reference kind  index into REF_KINDS
    17      1     base QP
    18      1     central QP offset (signed)
    19      1     max references
    20      1     motion search range
    21      1     flags           bit 0: fast depth decision used
    22      1     substream count S
    23      14*S  per substream: offset u32, length u32, crc32 u32, view count u16
    ..      4     crc32 of every header byte before this field

Substream 0 holds the anchor's view segment, substream k >= 1 the segments
of the k-th pseudo-sequence in coding order. Offsets count from the start
of the container. A view segment is ``coding_index u16, qp u8, length u32``
followed by the range-coded payload.
"""

from __future__ import annotations

import multiprocessing
import os
import statistics
import struct
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

from .block_codec.common import ViewFormat, unpack_segment
from .block_codec.decoder import decode_view
from .block_codec.encoder import RdoConfig, encode_view
from .depth_predictor import predict_picture
from .errors import ConfigError, CorruptStream, DataError, VersionMismatch
from .lightfield_io import CHROMA_FORMATS, ViewGrid
from .reference_graph import DEFAULT_MAX_REFS, REF_KINDS, build_graph
from .scan_planner import SCAN_KINDS, plan_scan

MAGIC = b"LFLF"
VERSION = 1
_PREFIX = struct.Struct("<4sB")
_FIELDS = struct.Struct("<HHHHBBBBBbBBBB")
_SUBSTREAM = struct.Struct("<IIIH")
_CRC = struct.Struct("<I")
DEFAULT_CENTRAL_OFFSET = -4
DEFAULT_SEARCH_RANGE = 8
NUM_WORKERS = 4


def clamp_qp(qp):
    return max(0, min(51, int(qp)))


@dataclass
class EncodeJob:
    grid: ViewGrid
    plan: object
    graph: object
    base_qp: int = 32
    central_qp_offset: int = DEFAULT_CENTRAL_OFFSET
    fast_depth: bool = False
    parallel: bool = False
    target_bpp: Optional[float] = None
    search_range: int = DEFAULT_SEARCH_RANGE

    def __post_init__(self):
        if (self.plan.rows, self.plan.cols) != (self.grid.rows, self.grid.cols):
            raise ConfigError(
                f"plan is {self.plan.rows}x{self.plan.cols} but the grid is "
                f"{self.grid.rows}x{self.grid.cols}"
            )
        if len(self.graph) != len(self.plan):
            raise ConfigError("reference graph does not match the plan")
        if not 0 <= self.base_qp <= 51:
            raise ConfigError(f"base QP {self.base_qp} outside 0..51")
        if self.target_bpp is not None and not self.target_bpp > 0:
            raise ConfigError("target bpp must be positive")
        if self.grid.color_space != "ycbcr":
            raise ConfigError("encode expects a YCbCr grid")
        _check_independent(self.plan, self.graph)

    @classmethod
    def create(cls, grid, scan="proposed", refs="proposed", max_refs=DEFAULT_MAX_REFS, **kw):
        plan = plan_scan(scan, grid.rows, grid.cols)
        return cls(grid, plan, build_graph(refs, plan, max_refs), **kw)

    @property
    def central_qp(self):
        return clamp_qp(self.base_qp + self.central_qp_offset)

    @property
    def fmt(self):
        return ViewFormat.of_grid(self.grid)

    def qp_for(self, coding_index):
        return self.central_qp if coding_index == 0 else self.base_qp


def _check_independent(plan, graph):
    for _, idxs in plan.sequences():
        allowed = {0}
        for i in idxs:
            bad = [j for j in graph.refs[i] if j not in allowed]
            if bad:
                raise ConfigError(
                    f"view {i} references {bad} outside its pseudo-sequence; "
                    "sequences must be independently decodable"
                )
            allowed.add(i)


@dataclass(frozen=True)
class ContainerHeader:
    rows: int
    cols: int
    width: int
    height: int
    bit_depth: int
    chroma_format: str
    scan: str
    refs: str
    base_qp: int
    central_qp_offset: int
    max_refs: int
    search_range: int
    fast_depth: bool
    substreams: tuple = ()  # ((offset, length, crc32, view_count), ...)

    @property
    def fmt(self):
        return ViewFormat(self.width, self.height, self.bit_depth, self.chroma_format)

    def size(self):
        return _PREFIX.size + _FIELDS.size + _SUBSTREAM.size * len(self.substreams) + _CRC.size

    def pack(self):
        body = _PREFIX.pack(MAGIC, VERSION) + _FIELDS.pack(
            self.rows, self.cols, self.width, self.height, self.bit_depth,
            CHROMA_FORMATS.index(self.chroma_format), SCAN_KINDS.index(self.scan),
            REF_KINDS.index(self.refs), self.base_qp, self.central_qp_offset,
            self.max_refs, self.search_range, int(self.fast_depth), len(self.substreams),
        )
        body += b"".join(_SUBSTREAM.pack(*s) for s in self.substreams)
        return body + _CRC.pack(zlib.crc32(body))

    @classmethod
    def unpack(cls, data):
        data = bytes(data)
        if len(data) < _PREFIX.size:
            raise VersionMismatch("container too short to hold a header")
        magic, version = _PREFIX.unpack_from(data, 0)
        if magic != MAGIC:
            raise CorruptStream(f"bad magic {magic!r}")
        if version != VERSION:
            raise VersionMismatch(f"container version {version}, this build reads {VERSION}")
        pos = _PREFIX.size
        if len(data) < pos + _FIELDS.size:
            raise CorruptStream("truncated container header")
        f = _FIELDS.unpack_from(data, pos)
        pos += _FIELDS.size
        count = f[13]
        end = pos + count * _SUBSTREAM.size
        if len(data) < end + _CRC.size:
            raise CorruptStream("truncated container header")
        (crc,) = _CRC.unpack_from(data, end)
        if crc != zlib.crc32(data[:end]):
            raise CorruptStream("container header checksum mismatch")
        subs = tuple(_SUBSTREAM.unpack_from(data, pos + k * _SUBSTREAM.size) for k in range(count))
        try:
            return cls(
                f[0], f[1], f[2], f[3], f[4], CHROMA_FORMATS[f[5]], SCAN_KINDS[f[6]],
                REF_KINDS[f[7]], f[8], f[9], f[10], f[11], bool(f[12] & 1), subs,
            )
        except IndexError as exc:
            raise CorruptStream(f"invalid enumeration in container header: {exc}") from exc


@dataclass
class ViewRecord:
    coding_index: int
    segment: bytes
    recon: object
    depth_map: object


@dataclass
class EncodeResult:
    data: bytes
    job: EncodeJob
    views: dict = field(repr=False)  # coding_index -> ViewRecord

    @property
    def bits(self):
        return 8 * len(self.data)

    @property
    def bpp(self):
        g = self.job.grid
        return self.bits / (g.num_views * g.width * g.height)

    def recon_grid(self):
        return _assemble(self.job.grid, self.job.plan, {i: v.recon for i, v in self.views.items()})

    def depth_maps(self):
        return [self.views[i].depth_map for i in sorted(self.views)]


def _assemble(grid, plan, recons):
    by_pos = {plan.entries[i].grid_pos: p for i, p in recons.items()}
    views = [by_pos[(r, c)] for r in range(grid.rows) for c in range(grid.cols)]
    return grid.with_views(views)


def _encode_one(view, coding_index, ref_ids, records, fmt, qp, search_range, fast_depth):
    refs = [records[j].recon for j in ref_ids]
    pred = None
    if fast_depth and ref_ids:
        pred = predict_picture([records[j].depth_map for j in ref_ids], fmt)
    cfg = RdoConfig(qp=qp, search_range=search_range, depth_prediction=pred)
    ev = encode_view(view, refs, cfg, fmt, coding_index)
    return ViewRecord(coding_index, ev.segment, ev.recon, ev.depth_map)


def _encode_sequence(task):
    """Worker: code one pseudo-sequence against the shared anchor record."""
    anchor, items, fmt, qp, search_range, fast_depth = task
    records = {0: anchor}
    out = []
    for coding_index, view, ref_ids in items:
        rec = _encode_one(view, coding_index, ref_ids, records, fmt, qp, search_range, fast_depth)
        records[coding_index] = rec
        out.append(rec)
    return out


def _pool():
    methods = multiprocessing.get_all_start_methods()
    ctx = multiprocessing.get_context("fork" if "fork" in methods else None)
    return ProcessPoolExecutor(max_workers=NUM_WORKERS, mp_context=ctx)


def encode_lightfield(job):
    """Encode every view of ``job.grid``; returns an :class:`EncodeResult`.

    Serial and parallel runs produce identical bytes: each sequence's output
    depends only on the anchor reconstruction, and results are joined in
    sequence order whatever the completion order.
    """
    grid, plan, graph, fmt = job.grid, job.plan, job.graph, job.fmt
    view_at = {e.coding_index: grid.view(*e.grid_pos) for e in plan.entries}
    anchor = _encode_one(view_at[0], 0, (), {}, fmt, job.central_qp, job.search_range, False)
    tasks = []
    for _, idxs in plan.sequences():
        items = [(i, view_at[i], graph.refs[i]) for i in idxs]
        tasks.append((anchor, items, fmt, job.base_qp, job.search_range, job.fast_depth))
    if job.parallel and len(tasks) > 1:
        with _pool() as pool:
            results = list(pool.map(_encode_sequence, tasks))
    else:
        results = [_encode_sequence(t) for t in tasks]
    records = {0: anchor}
    streams = [anchor.segment]
    counts = [1]
    for seq in results:
        streams.append(b"".join(r.segment for r in seq))
        counts.append(len(seq))
        for r in seq:
            records[r.coding_index] = r
    data = build_container(job, streams, counts)
    return EncodeResult(data, job, records)


def build_container(job, streams, counts):
    g = job.grid
    header = ContainerHeader(
        g.rows, g.cols, g.width, g.height, g.bit_depth, g.chroma_format, job.plan.kind,
        job.graph.kind, job.base_qp, job.central_qp_offset, job.graph.max_refs,
        job.search_range, job.fast_depth, tuple((0, 0, 0, 0) for _ in streams),
    )
    pos = header.size()
    subs = []
    for s, n in zip(streams, counts):
        subs.append((pos, len(s), zlib.crc32(s), n))
        pos += len(s)
    header = replace(header, substreams=tuple(subs))
    return header.pack() + b"".join(streams)


# -- decoding --------------------------------------------------------------


@dataclass
class ContainerLayout:
    header: ContainerHeader
    plan: object
    graph: object
    sequences: list  # [[coding_index, ...], ...] one per substream after the anchor


def read_container(data):
    header = ContainerHeader.unpack(data)
    plan = plan_scan(header.scan, header.rows, header.cols)
    graph = build_graph(header.refs, plan, header.max_refs)
    seqs = [idxs for _, idxs in plan.sequences()]
    if len(header.substreams) != 1 + len(seqs):
        raise CorruptStream(
            f"container has {len(header.substreams)} substreams, plan needs {1 + len(seqs)}"
        )
    for k, (_, _, _, n) in enumerate(header.substreams):
        expected = 1 if k == 0 else len(seqs[k - 1])
        if n != expected:
            raise CorruptStream(f"substream {k} lists {n} views, plan has {expected}")
    return ContainerLayout(header, plan, graph, seqs)


def _substream(data, header, k):
    offset, length, crc, _ = header.substreams[k]
    if offset + length > len(data):
        raise CorruptStream(f"substream {k} extends past the end of the container", k)
    blob = bytes(data[offset : offset + length])
    if zlib.crc32(blob) != crc:
        raise CorruptStream(f"substream {k} checksum mismatch", k)
    return blob


def _decode_stream(blob, k, indices, graph, fmt, recons, limit=None):
    """Decode the segments of substream ``k`` into ``recons``; returns the count decoded."""
    pos = 0
    done = 0
    for i in indices:
        try:
            ci, _, _, end = unpack_segment(blob, pos)
        except CorruptStream as exc:
            raise CorruptStream(str(exc), k) from exc
        if ci != i:
            raise CorruptStream(f"substream {k}: found view {ci} where {i} was expected", k)
        try:
            dv = decode_view(blob[pos:end], [recons[j] for j in graph.refs[i]], fmt)
        except CorruptStream as exc:
            raise CorruptStream(f"substream {k}, view {i}: {exc}", k) from exc
        recons[i] = dv.recon
        pos = end
        done += 1
        if limit is not None and i == limit:
            return done
    if pos != len(blob):
        raise CorruptStream(f"substream {k} has {len(blob) - pos} trailing bytes", k)
    return done


@dataclass
class PartialDecode:
    """Views recovered from a possibly damaged container."""

    recons: dict  # coding_index -> Picture
    failed: dict  # substream index -> error message
    layout: ContainerLayout

    def view(self, pos):
        return self.recons.get(self.layout.plan.index_of(pos))


def decode_lightfield_partial(data):
    """Decode everything that survives; a damaged sequence loses only its own views.

    Raises if the header or the anchor substream is unusable, since every
    view depends on them.
    """
    layout = read_container(data)
    h = layout.header
    fmt = h.fmt
    recons = {}
    _decode_stream(_substream(data, h, 0), 0, [0], layout.graph, fmt, recons)
    failed = {}
    for k, idxs in enumerate(layout.sequences, start=1):
        local = {0: recons[0]}
        try:
            _decode_stream(_substream(data, h, k), k, idxs, layout.graph, fmt, local)
        except DataError as exc:
            failed[k] = str(exc)
            continue
        recons.update(local)
    return PartialDecode(recons, failed, layout)


def decode_lightfield(data):
    """Decode a whole container to a :class:`ViewGrid`; any damage raises."""
    part = decode_lightfield_partial(data)
    if part.failed:
        k, msg = next(iter(part.failed.items()))
        raise CorruptStream(msg, k)
    return _grid_from_recons(part.layout, part.recons)


def _grid_from_recons(layout, recons):
    h = layout.header
    by_pos = {layout.plan.entries[i].grid_pos: p for i, p in recons.items()}
    views = [by_pos[(r, c)] for r in range(h.rows) for c in range(h.cols)]
    return ViewGrid(h.rows, h.cols, h.width, h.height, h.bit_depth, h.chroma_format, views)


def decode_single_view(data, pos):
    """Decode the view at grid ``pos``; returns ``(picture, views_decoded)``.

    Only the anchor and the owning sequence up to ``pos`` are decoded.
    """
    layout = read_container(data)
    h = layout.header
    r, c = pos
    if not (0 <= r < h.rows and 0 <= c < h.cols):
        raise ConfigError(f"position {pos} outside the {h.rows}x{h.cols} grid")
    target = layout.plan.index_of((r, c))
    recons = {}
    count = _decode_stream(_substream(data, h, 0), 0, [0], layout.graph, h.fmt, recons)
    if target != 0:
        k, idxs = next((k, s) for k, s in enumerate(layout.sequences, start=1) if target in s)
        count += _decode_stream(
            _substream(data, h, k), k, idxs, layout.graph, h.fmt, recons, limit=target
        )
    return recons[target], count


# -- rate targeting and timing ----------------------------------------------


@dataclass
class RateTargetResult:
    result: EncodeResult
    qp: int
    bpp: float
    target_bpp: float
    probes: list  # [(qp, bpp), ...] in probe order
    saturated: bool  # target above the QP 0 rate
    unreachable: bool  # even QP 51 exceeds the tolerance


def rate_target_encode(job, target_bpp=None, tolerance=1.1, encode=encode_lightfield):
    """Bisect the base QP so the achieved bpp is closest to the target.

    Only QPs whose bpp is at most ``tolerance * target`` are eligible. The
    rate falls with QP, so the smallest eligible QP is found by bisection
    over [0, 51] (at most 6 probes); among the probed eligible QPs the one
    nearest the target wins.
    """
    target = job.target_bpp if target_bpp is None else target_bpp
    if target is None or not target > 0:
        raise ConfigError("a positive target bpp is required")
    limit = tolerance * target
    cache = {}
    probes = []

    def probe(qp):
        if qp not in cache:
            cache[qp] = encode(replace(job, base_qp=qp, target_bpp=target))
            probes.append((qp, cache[qp].bpp))
        return cache[qp]

    lo, hi = 0, 52  # 52: nothing eligible
    while lo < hi:
        mid = (lo + hi) // 2
        if probe(mid).bpp <= limit:
            hi = mid
        else:
            lo = mid + 1
    if lo == 52:
        res = probe(51)
        return RateTargetResult(res, 51, res.bpp, target, probes, False, True)
    eligible = [(abs(r.bpp - target), qp) for qp, r in cache.items() if r.bpp <= limit]
    _, qp = min(eligible)
    res = cache[qp]
    return RateTargetResult(res, qp, res.bpp, target, probes, qp == 0 and res.bpp < target, False)


def delta_t(anchor, variant):
    """Time reduction in percent of the anchor time."""
    return 100.0 * (anchor - variant) / anchor


def _timed(job):
    t0 = time.perf_counter()
    res = encode_lightfield(job)
    return time.perf_counter() - t0, res.data


def time_report(job, runs=3):
    """Median wall-clock encode times of the three configurations.

    Anchor: serial, full depth search. Variants: serial with the fast depth
    decision, and parallel with it. The configurations take turns within
    each run so slow drifts in machine speed hit all three alike. Also
    reports whether the serial and parallel fast-depth containers are
    byte-identical.
    """
    configs = [
        replace(job, fast_depth=False, parallel=False),
        replace(job, fast_depth=True, parallel=False),
        replace(job, fast_depth=True, parallel=True),
    ]
    times = [[], [], []]
    data = [None, None, None]
    for _ in range(runs):
        for k, cfg in enumerate(configs):
            t, data[k] = _timed(cfg)
            times[k].append(t)
    t_full, t_fast, t_par = (statistics.median(t) for t in times)
    data_s, data_p = data[1], data[2]
    return {
        "t_serial_full": t_full,
        "t_serial_fastdepth": t_fast,
        "t_parallel_fastdepth": t_par,
        "delta_t_s": delta_t(t_full, t_fast),
        "delta_t_p": delta_t(t_full, t_par),
        "identical": data_s == data_p,
        "cpu_count": os.cpu_count() or 1,
    }
