import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lfcodec.block_codec.common import (
    SEGMENT_HEADER,
    IntraMode,
    PredKind,
    PuMode,
    ViewFormat,
    inter_pu_modes,
    lambda_for_qp,
    pu_rects,
)
from lfcodec.block_codec.decoder import decode_view
from lfcodec.block_codec.encoder import RdoConfig, encode_view
from lfcodec.block_codec.motion import CtuMotionSearch, motion_search
from lfcodec.errors import ConfigError, CorruptStream, DataError, DimensionMismatch, RefMismatch
from lfcodec.lightfield_io import Picture

from conftest import shifted, textured_view


def _round_trip(view, refs, cfg, fmt):
    enc = encode_view(view, refs, cfg, fmt)
    dec = decode_view(enc.segment, refs, fmt)
    assert dec.recon.equals(enc.recon)
    assert np.array_equal(dec.depth_map.depth, enc.depth_map.depth)
    assert np.array_equal(dec.depth_map.pu_mode, enc.depth_map.pu_mode)
    return enc, dec


# -- PU geometry and constants ---------------------------------------------------------


def test_pu_rects_tile_the_cu():
    for mode in PuMode:
        for size in (8, 16, 32, 64):
            if mode == PuMode.PNxN and size != 8:
                continue
            cover = np.zeros((size, size), int)
            for y, x, h, w in pu_rects(mode, size):
                cover[y : y + h, x : x + w] += 1
            assert np.all(cover == 1)


def test_mode_sets_by_depth():
    assert PuMode.PNxN in inter_pu_modes(3)
    assert PuMode.P2NxnU not in inter_pu_modes(3)
    assert PuMode.PNxN not in inter_pu_modes(0)
    assert len(inter_pu_modes(0)) == 7


def test_lambda_formula():
    assert lambda_for_qp(12) == pytest.approx(0.85)
    assert lambda_for_qp(27) == pytest.approx(0.85 * 2 ** 5)
    assert RdoConfig(27).lam_motion == pytest.approx((0.85 * 32) ** 0.5)


def test_rdo_config_validation():
    with pytest.raises(ConfigError):
        RdoConfig(52)
    with pytest.raises(ConfigError):
        RdoConfig(22, lam=0.0)
    with pytest.raises(ConfigError):
        RdoConfig(22, search_range=-1)


# -- motion search ---------------------------------------------------------------------


def test_global_shift_is_found_exactly(rng):
    ref = textured_view(rng, 64, 64).y
    cur = np.roll(ref, (2, -3), axis=(0, 1))  # cur[y, x] = ref[y - 2, x + 3]
    block = cur[24:40, 24:40]
    (dx, dy), cost = motion_search(block, ref, (24, 24), 8, 4.0)
    assert (dx, dy) == (3, -2)
    # SAD is zero, only the vector bits remain
    assert cost == pytest.approx(4.0 * 10)


def test_range_zero_gives_zero_vector(rng):
    ref = textured_view(rng, 32, 32).y
    (dx, dy), _ = motion_search(ref[8:16, 8:16] + 5, ref, (8, 8), 0, 1.0)
    assert (dx, dy) == (0, 0)


def test_equal_cost_tie_break_is_stable():
    # rows alternate between two patterns: moving one row up or down gives
    # the same perfect match, staying put does not
    row_a = np.arange(16) * 7 % 50
    row_b = 200 - row_a
    ref = np.array([row_a if r % 2 == 0 else row_b for r in range(32)])
    block = ref[9:17, 4:12]  # starts on a "b" row
    results = {motion_search(block, ref, (8, 4), 2, 1.0)[0] for _ in range(3)}
    # both vectors are perfect matches with equal vector bits; the order is
    # smaller |dx|+|dy|, then smaller dy, then smaller dx
    assert results == {(0, -1)}


@given(st.integers(0, 2**32 - 1), st.sampled_from([0, 2, 5]), st.sampled_from([1, 2]))
def test_ctu_search_matches_plain_search(seed, search_range, nrefs):
    rng = np.random.default_rng(seed)
    cur = textured_view(rng, 48, 48).y
    refs = [np.roll(cur, (int(rng.integers(-3, 4)), int(rng.integers(-3, 4))), (0, 1))
            + rng.integers(-2, 3, cur.shape) for _ in range(nrefs)]
    lam = 3.0
    s = CtuMotionSearch(cur, refs, 8, 8, 32, 32, search_range, lam, 8)
    for _ in range(4):
        h, w = (int(v) * 4 for v in rng.integers(1, 5, 2))
        py, px = int(rng.integers(0, (32 - h) // 4 + 1)) * 4, int(rng.integers(0, (32 - w) // 4 + 1)) * 4
        slot, dx, dy = s.search(py, px, h, w)
        block = cur[8 + py : 8 + py + h, 8 + px : 8 + px + w]
        best = min(
            (motion_search(block, r, (8 + py, 8 + px), search_range, lam)[1], k)
            for k, r in enumerate(refs)
        )
        mv, cost = motion_search(block, refs[slot], (8 + py, 8 + px), search_range, lam)
        assert cost == pytest.approx(best[0])
        if slot == best[1]:
            assert mv == (dx, dy)
    assert s.search_many([(0, 0, 8, 8), (8, 8, 16, 8)]) == [s.search(0, 0, 8, 8),
                                                            s.search(8, 8, 16, 8)]


# -- encoder / decoder -------------------------------------------------------------------


def test_constant_gray_is_depth0_dc():
    y = np.full((64, 64), 100)
    c = np.full((64, 64), 128)
    pic = Picture((y, c, c))
    fmt = ViewFormat(64, 64, 8, "444")
    for qp in (10, 32, 51):
        enc, dec = _round_trip(pic, [], RdoConfig(qp), fmt)
        assert [(cu.depth, cu.pred_kind, cu.intra_mode) for cu in dec.coding_units] == [
            (0, PredKind.INTRA, IntraMode.DC)
        ]
        assert len(enc.segment) - SEGMENT_HEADER.size <= 16


def test_identical_reference_costs_under_two_percent(rng):
    view = textured_view(rng, 128, 128)
    fmt = ViewFormat(128, 128, 8, "444")
    intra = encode_view(view, [], RdoConfig(32), fmt)
    ref = intra.recon
    inter, dec = _round_trip(ref, [ref], RdoConfig(32), fmt)
    assert len(inter.segment) <= 0.02 * len(intra.segment)
    assert inter.recon.equals(ref)
    for cu in dec.coding_units:
        assert cu.pred_kind == PredKind.INTER and cu.pu_mode == PuMode.P2Nx2N
        assert [(m.dx, m.dy) for m in cu.motion] == [(0, 0)]
        assert cu.levels == (None, None, None)


def test_checkerboard_splits_to_depth3_and_beats_forced_depths():
    yy, xx = np.mgrid[0:64, 0:64]
    y = np.where((yy // 8 + xx // 8) % 2, 200, 50)
    c = np.full((64, 64), 128)
    pic = Picture((y, c, c))
    fmt = ViewFormat(64, 64, 8, "444")
    for qp in (22, 37):
        enc, _ = _round_trip(pic, [], RdoConfig(qp), fmt)
        assert np.all(enc.depth_map.depth == 3)
        # exhaustive alternative: every uniform partition depth
        forced = [encode_view(pic, [], RdoConfig(qp, force_depth=d), fmt).cost for d in range(4)]
        assert enc.cost <= min(forced) + 1e-6
        assert forced[3] == pytest.approx(enc.cost)


@given(
    st.integers(1, 10).map(lambda v: 8 * v),
    st.integers(1, 10).map(lambda v: 8 * v),
    st.sampled_from(["444", "422", "420"]),
    st.sampled_from([8, 10]),
    st.integers(0, 51),
    st.integers(0, 2**32 - 1),
)
def test_intra_round_trip(w, h, chroma, bd, qp, seed):
    rng = np.random.default_rng(seed)
    view = textured_view(rng, w, h, bd, chroma)
    _round_trip(view, [], RdoConfig(qp), ViewFormat(w, h, bd, chroma))


@given(
    st.integers(2, 40).map(lambda v: 2 * v),
    st.integers(2, 40).map(lambda v: 2 * v),
    st.sampled_from(["444", "422"]),
    st.integers(1, 4),
    st.integers(15, 45),
    st.integers(0, 2**32 - 1),
)
def test_inter_round_trip_odd_sizes(w, h, chroma, nrefs, qp, seed):
    # sizes that are not multiples of 8 exercise the conformance padding
    rng = np.random.default_rng(seed)
    fmt = ViewFormat(w, h, 8, chroma)
    base = textured_view(rng, w, h, 8, chroma)
    refs = [encode_view(shifted(base, k, -k), [], RdoConfig(qp), fmt).recon
            for k in range(nrefs)]
    _round_trip(base, refs, RdoConfig(qp, search_range=4), fmt)


def test_bits_non_increasing_in_qp(rng):
    for k in range(3):
        view = textured_view(rng, 64, 48, smooth=1.0 + k)
        fmt = ViewFormat(64, 48, 8, "444")
        sizes = [len(encode_view(view, [], RdoConfig(qp), fmt).segment) for qp in (10, 22, 34, 46)]
        assert sizes == sorted(sizes, reverse=True)


def test_intra_encode_never_reads_refs(rng):
    view = textured_view(rng, 32, 32)
    fmt = ViewFormat(32, 32, 8, "444")
    a = encode_view(view, [], RdoConfig(30), fmt)
    b = encode_view(view, [], RdoConfig(30), fmt)
    assert a.segment == b.segment


def test_truncated_segment_is_corrupt(rng):
    view = textured_view(rng, 48, 40)
    fmt = ViewFormat(48, 40, 8, "444")
    seg = encode_view(view, [], RdoConfig(27), fmt).segment
    for cut in (0, 3, SEGMENT_HEADER.size, len(seg) // 2, len(seg) - 1):
        with pytest.raises(CorruptStream):
            decode_view(seg[:cut], [], fmt)
    with pytest.raises(CorruptStream):
        decode_view(seg + b"\x00", [], fmt)


@given(st.integers(0, 2**32 - 1))
def test_damaged_payload_never_crashes(seed):
    rng = np.random.default_rng(seed)
    fmt = ViewFormat(32, 32, 8, "444")
    view = textured_view(rng, 32, 32)
    seg = bytearray(encode_view(view, [], RdoConfig(30), fmt).segment)
    pos = int(rng.integers(SEGMENT_HEADER.size, len(seg)))
    seg[pos] ^= int(rng.integers(1, 256))
    try:
        decode_view(bytes(seg), [], fmt)
    except DataError:
        pass


def test_missing_reference_slot_is_ref_mismatch(rng):
    fmt = ViewFormat(64, 64, 8, "444")
    view = textured_view(rng, 64, 64)
    noise = Picture(tuple(rng.integers(0, 256, p.shape) for p in view.planes))
    enc = encode_view(view, [noise, view], RdoConfig(30), fmt)
    dec = decode_view(enc.segment, [noise, view], fmt)
    assert any(m.ref_slot == 1 for cu in dec.coding_units for m in cu.motion)
    with pytest.raises(RefMismatch):
        decode_view(enc.segment, [noise], fmt)
    with pytest.raises(RefMismatch):
        decode_view(enc.segment, [], fmt)


def test_format_errors(rng):
    view = textured_view(rng, 32, 32)
    with pytest.raises(DimensionMismatch):
        encode_view(view, [], RdoConfig(30), ViewFormat(32, 24, 8, "444"))
    odd = textured_view(rng, 31, 32)
    with pytest.raises(DimensionMismatch):
        encode_view(odd, [], RdoConfig(30), ViewFormat(31, 32, 8, "422"))
    with pytest.raises(ConfigError):
        encode_view(view, [view] * 5, RdoConfig(30), ViewFormat(32, 32, 8, "444"))


def test_626x434_round_trip():
    rng = np.random.default_rng(5)
    fmt = ViewFormat(626, 434, 10, "422")
    view = textured_view(rng, 626, 434, 10, "422")
    enc, dec = _round_trip(view, [], RdoConfig(37), fmt)
    assert enc.recon.width == 626 and enc.recon.height == 434
    # 10 x 7 CTUs, the last column and row partial
    assert enc.depth_map.shape == (55, 79)
