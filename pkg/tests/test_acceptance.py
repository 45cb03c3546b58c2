"""Acceptance criteria, one test per criterion.

Each test records the numbers behind its verdict; the terminal summary
prints one PASS/FAIL/SKIP line per criterion.
"""

import os

import numpy as np
import pytest

from lfcodec.block_codec.common import ViewFormat
from lfcodec.block_codec.decoder import decode_view
from lfcodec.block_codec.encoder import RdoConfig, encode_view
from lfcodec.depth_predictor import DepthPrediction, allowed_modes, covers_choices, predict
from lfcodec.depth_predictor import predict_picture
from lfcodec.block_codec.common import DepthMap, PuMode
from lfcodec.metrics import RateDistortionCurve, bd_metrics, bd_psnr, bd_rate, grid_quality
from lfcodec.metrics import RdPoint, similarity_map
from lfcodec.pipeline import (
    EncodeJob,
    decode_lightfield,
    decode_single_view,
    encode_lightfield,
    time_report,
)
from lfcodec.reference_graph import build_low_delay, build_proposed
from lfcodec.scan_planner import Quadrant, mean_reference_distance, plan_proposed, plan_scan
from lfcodec.synthetic import make_lightfield, synthetic_suite

from conftest import shifted, textured_view

QPS = (22, 27, 32, 37)
PAIRS = {
    "proposed": ("proposed", "proposed"),
    "serpentine": ("serpentine", "lowdelay"),
    "raster": ("raster", "lowdelay"),
    "spiral": ("spiral", "lowdelay"),
    "zigzag": ("zigzag", "lowdelay"),
}
# every scan codes its first view at the same QP as the rest, so no order
# gets a quality bonus from where its intra view sits
CENTRAL_OFFSET = 0


def _cores():
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _curve(grid, pair, fast_depth=False):
    points = []
    for qp in QPS:
        job = EncodeJob.create(grid, *pair, base_qp=qp, central_qp_offset=CENTRAL_OFFSET,
                               fast_depth=fast_depth)
        res = encode_lightfield(job)
        p, s = grid_quality(grid, res.recon_grid())
        points.append(RdPoint(res.bpp, p, s))
    return RateDistortionCurve(tuple(points))


@pytest.fixture(scope="module")
def suite():
    return synthetic_suite(3)


@pytest.fixture(scope="module")
def curves(suite):
    """Full-search RD curves of every scan on every synthetic light field (lazy)."""
    cache = {}

    def get(k, label, fast_depth=False):
        key = (k, label, fast_depth)
        if key not in cache:
            cache[key] = _curve(suite[k], PAIRS[label], fast_depth)
        return cache[key]

    return get


# -- 1 --------------------------------------------------------------------------------


@pytest.mark.criterion(1)
def test_criterion_1_codec_round_trip(measured):
    rng = np.random.default_rng(20240501)
    cases = [(626, 434, 10, "422", False), (626, 434, 10, "422", True),
             (65, 64, 8, "444", False), (64, 65, 8, "444", True), (130, 72, 8, "420", False)]
    while len(cases) < 50:
        chroma = str(rng.choice(["444", "422", "420"]))
        w = int(rng.integers(4, 100)) * 2
        h = int(rng.integers(4, 100)) * 2
        cases.append((w, h, int(rng.choice([8, 10])), chroma, bool(rng.integers(0, 2))))
    identical = 0
    for w, h, bd, chroma, inter in cases:
        fmt = ViewFormat(w, h, bd, chroma)
        view = textured_view(rng, w, h, bd, chroma)
        qp = int(rng.integers(12, 45))
        refs = []
        if inter:
            base = encode_view(shifted(view, 2, -4), [], RdoConfig(qp), fmt).recon
            refs = [base, encode_view(shifted(view, -2, 2), [base], RdoConfig(qp), fmt).recon]
        enc = encode_view(view, refs, RdoConfig(qp, search_range=4), fmt)
        dec = decode_view(enc.segment, refs, fmt)
        identical += dec.recon.equals(enc.recon)
    measured.update(views=len(cases), identical=identical)
    assert identical == len(cases)


# -- 2 --------------------------------------------------------------------------------


@pytest.mark.criterion(2)
def test_criterion_2_scan_geometry(measured):
    p = plan_proposed(13, 13)
    seqs = p.sequences()
    corners = {(0, 0), (0, 12), (12, 0), (12, 12)}
    lasts = {p.entries[idxs[-1]].grid_pos for _, idxs in seqs}
    serp = plan_scan("serpentine", 13, 13)
    d_prop = mean_reference_distance(p, build_proposed(p))
    d_serp = mean_reference_distance(serp, build_low_delay(serp))
    measured.update(entries=len(p), mrd_proposed=f"{d_prop:.4f}", mrd_serpentine=f"{d_serp:.4f}")
    assert len(p) == 1 + 4 * 42
    assert p.entries[0].grid_pos == (6, 6) and p.entries[0].quadrant == Quadrant.CENTER
    assert [len(idxs) for _, idxs in seqs] == [42] * 4
    assert lasts == corners
    assert d_prop < d_serp


# -- 3 --------------------------------------------------------------------------------


@pytest.mark.criterion(3)
def test_criterion_3_low_delay_example(measured):
    g = build_low_delay(plan_scan("serpentine", 5, 5))
    measured.update(refs15=sorted(g.refs[15]))
    assert set(g.refs[15]) == {14, 12, 8, 4} and len(g.refs[15]) == 4


# -- 4 --------------------------------------------------------------------------------


def _uniform_map(depth):
    d = np.full((8, 8), depth, np.int8)
    return DepthMap(d, np.zeros((8, 8), np.int8), np.zeros((8, 8), np.int8))


@pytest.mark.criterion(4)
def test_criterion_4_depth_predictor(measured, suite):
    lo, hi = predict([_uniform_map(d) for d in (1, 2, 3, 3)], (0, 0))
    ex1 = DepthPrediction(np.asarray(lo), np.asarray(hi))
    lo, hi = predict([_uniform_map(1)] * 4, (0, 0))
    ex2 = DepthPrediction(np.asarray(lo), np.asarray(hi))
    assert np.all(ex1.dmin == 1) and np.all(ex1.dmax == 3)
    assert ex1.searched_depths((0, 0)) == [1, 2, 3]
    assert allowed_modes(ex1, (0, 0), 0) == {PuMode.P2Nx2N}  # depth 0: no full PU search
    assert np.all(ex2.dmin == 1) and np.all(ex2.dmax == 1)
    assert ex2.searched_depths((0, 0)) == [1]
    assert all(not allowed_modes(ex2, (0, 0), d) for d in (2, 3))

    # oracle equivalence: views whose unrestricted choices lie inside the predicted
    # ranges must produce the same segment when the restriction is switched on
    grid = suite[0]
    job = EncodeJob.create(grid, base_qp=37, central_qp_offset=CENTRAL_OFFSET)
    res = encode_lightfield(job)
    fmt = job.fmt
    checked = identical = 0
    for i in range(1, len(job.plan)):
        if checked == 20:
            break
        refs = job.graph.refs[i]
        pred = predict_picture([res.views[j].depth_map for j in refs], fmt)
        if not covers_choices(res.views[i].depth_map, pred):
            continue
        view = grid.view(*job.plan.entries[i].grid_pos)
        cfg = RdoConfig(job.base_qp, search_range=job.search_range, depth_prediction=pred)
        ev = encode_view(view, [res.views[j].recon for j in refs], cfg, fmt, i)
        checked += 1
        identical += ev.segment == res.views[i].segment
    measured.update(views_checked=checked, identical=identical)
    assert checked == 20 and identical == 20


# -- 5 --------------------------------------------------------------------------------


@pytest.mark.criterion(5)
def test_criterion_5_fast_depth_quality_cost(measured, suite, curves):
    rates, psnrs = [], []
    for k in range(len(suite)):
        full = curves(k, "proposed")
        fast = curves(k, "proposed", fast_depth=True)
        rates.append(bd_rate(fast, full))
        psnrs.append(bd_psnr(fast, full))
    measured.update(bd_rate_pct=[round(r, 3) for r in rates],
                    bd_psnr_db=[round(p, 4) for p in psnrs])
    assert len(suite) >= 3 and len(QPS) == 4
    assert all(r <= 3.0 for r in rates)
    assert all(p >= -0.1 for p in psnrs)


# -- 6 --------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def timing(suite):
    job = EncodeJob.create(suite[0], base_qp=32, central_qp_offset=CENTRAL_OFFSET)
    return time_report(job, runs=3)


@pytest.mark.criterion("6a")
def test_criterion_6a_serial_speedup_and_identity(measured, timing):
    measured.update(delta_t_s=f"{timing['delta_t_s']:.1f}%",
                    t_full=f"{timing['t_serial_full']:.2f}s",
                    t_fast=f"{timing['t_serial_fastdepth']:.2f}s",
                    identical=timing["identical"])
    assert timing["identical"]
    assert timing["delta_t_s"] >= 15.0


@pytest.mark.criterion("6b")
def test_criterion_6b_parallel_speedup(measured, timing):
    measured.update(delta_t_p=f"{timing['delta_t_p']:.1f}%", cores=_cores())
    if _cores() < 4:
        pytest.skip(f"needs >= 4 cores, this machine has {_cores()}")
    assert timing["delta_t_p"] >= 50.0


# -- 7 --------------------------------------------------------------------------------


@pytest.mark.criterion(7)
def test_criterion_7_scan_order_gain(measured, suite, curves):
    order = ["proposed", "serpentine", "raster", "spiral", "zigzag"]
    per_lf_rank_ok = []
    vs_anchor = {a: [] for a in order[1:]}
    for k in range(len(suite)):
        zig = curves(k, "zigzag")
        bd_vs_zig = {s: bd_rate(curves(k, s), zig) for s in order[:-1]}
        bd_vs_zig["zigzag"] = 0.0
        per_lf_rank_ok.append(all(bd_vs_zig[a] < bd_vs_zig[b] for a, b in zip(order, order[1:])))
        for a in vs_anchor:
            vs_anchor[a].append(bd_rate(curves(k, "proposed"), curves(k, a)))
        measured[f"lf{k}_bd_vs_zigzag"] = {s: round(v, 2) for s, v in bd_vs_zig.items()}
    means = {a: float(np.mean(v)) for a, v in vs_anchor.items()}
    measured.update(proposed_vs_anchor_mean={a: round(v, 2) for a, v in means.items()},
                    ranking_holds=per_lf_rank_ok)
    assert all(v < 0 for v in means.values())
    assert sum(per_lf_rank_ok) >= 2


# -- 8 --------------------------------------------------------------------------------


@pytest.mark.criterion(8)
def test_criterion_8_bd_oracle(measured):
    rates = [0.75, 0.1, 0.02, 0.005]
    psnrs = [41.3, 35.0, 31.2, 28.4]
    a = RateDistortionCurve.from_pairs(rates, psnrs)
    same = bd_metrics(a, a)
    shift = bd_psnr(RateDistortionCurve.from_pairs(rates, [p + 1 for p in psnrs]), a)
    half = bd_rate(RateDistortionCurve.from_pairs([r / 2 for r in rates], psnrs), a)
    measured.update(identical=same, psnr_shift=shift, half_rate=half)
    assert abs(same["bd_rate_pct"]) <= 1e-6 and abs(same["bd_psnr_db"]) <= 1e-6
    assert abs(shift - 1.0) <= 1e-3
    assert abs(half + 50.0) <= 0.1


# -- 9 --------------------------------------------------------------------------------


@pytest.mark.criterion(9)
def test_criterion_9_random_access(measured):
    grid = make_lightfield(rows=13, cols=13, width=16, height=16, seed=9)
    res = encode_lightfield(EncodeJob.create(grid, base_qp=32, search_range=2))
    full = decode_lightfield(res.data)
    counts, identical = [], 0
    for r in range(13):
        for c in range(13):
            pic, n = decode_single_view(res.data, (r, c))
            counts.append(n)
            identical += pic.equals(full.view(r, c))
    measured.update(max_views_decoded=max(counts), identical=identical)
    assert max(counts) <= 43 and identical == 169


# -- 10 -------------------------------------------------------------------------------


@pytest.mark.criterion(10)
def test_criterion_10_similarity_map(measured):
    # centre-similar field: one scene, noise growing with the distance from the
    # centre, no parallax and no vignetting
    grid = make_lightfield(seed=10, background_disparity=0.0, foreground_disparity=0.0,
                           vignetting=0.0, noise=6.0)
    smap = similarity_map(grid)
    arg = tuple(int(v) for v in np.unravel_index(np.argmax(smap), smap.shape))
    measured.update(argmax=arg, centre=grid.center, peak_db=f"{smap.max():.2f}")
    assert arg == grid.center
