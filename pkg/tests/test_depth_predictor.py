from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lfcodec.block_codec.common import MAX_DEPTH, DepthMap, PuMode, ViewFormat, inter_pu_modes
from lfcodec.block_codec.encoder import RdoConfig, encode_view
from lfcodec.depth_predictor import (
    DepthPrediction,
    adjusted_depth,
    allowed_modes,
    covers_choices,
    histogram_csv_rows,
    predict,
    predict_picture,
    pu_histogram,
)
from lfcodec.lightfield_io import Picture


def _map(depth, pu=None, shape=(8, 8)):
    d = np.broadcast_to(np.asarray(depth, np.int8), shape).copy()
    p = np.zeros(shape, np.int8) if pu is None else np.broadcast_to(np.asarray(pu, np.int8), shape).copy()
    return DepthMap(d, p, np.zeros(shape, np.int8))


def test_adjusted_depth_formula():
    assert adjusted_depth(SimpleNamespace(depth=2, pu_mode=PuMode.P2Nx2N)) == 2
    assert adjusted_depth(SimpleNamespace(depth=2, pu_mode=PuMode.PNx2N)) == 3
    assert adjusted_depth(SimpleNamespace(depth=3, pu_mode=PuMode.PNxN)) == 4


def test_worked_example_one_two_three_three():
    maps = [_map(1), _map(2), _map(3), _map(3)]
    lo, hi = predict(maps, (0, 0))
    assert np.all(lo == 1) and np.all(hi == 3)
    pred = DepthPrediction(np.asarray(lo), np.asarray(hi))
    assert pred.searched_depths((0, 0)) == [1, 2, 3]
    assert allowed_modes(pred, (0, 0), 0) == {PuMode.P2Nx2N}


def test_worked_example_all_ones():
    lo, hi = predict([_map(1)] * 4, (0, 0))
    pred = DepthPrediction(np.asarray(lo), np.asarray(hi))
    assert pred.searched_depths((3, 3)) == [1]
    assert allowed_modes(pred, (0, 0), 2) == frozenset()
    assert allowed_modes(pred, (0, 0), 3) == frozenset()
    assert allowed_modes(pred, (0, 0), 1) == frozenset(inter_pu_modes(1))


def test_no_colocated_maps_is_full_range():
    lo, hi = predict([], (0, 0))
    assert np.all(lo == 0) and np.all(hi == 3)
    for d in range(4):
        assert allowed_modes((0, 3), None, d) == frozenset(inter_pu_modes(d))


def test_non_2nx2n_pu_counts_one_deeper_and_clamps():
    # depth 1 with Nx2N counts as 2; depth 3 with NxN would be 4, clamped
    lo, hi = predict([_map(1, PuMode.PNx2N), _map(3, PuMode.PNxN)], (0, 0))
    assert np.all(lo == 2) and np.all(hi == 3)


def test_only_four_maps_are_used():
    lo, _ = predict([_map(2)] * 4 + [_map(0)], (0, 0))
    assert np.all(lo == 2)


def test_partial_ctus_get_full_range():
    fmt = ViewFormat(80, 72, 8, "444")  # 2 x 2 CTUs, right and bottom partial
    cells = fmt.coded.cell_shape
    m = _map(2, shape=cells)
    pred = predict_picture([m], fmt)
    assert np.all(pred.dmin[:8, :8] == 2) and np.all(pred.dmax[:8, :8] == 2)
    assert np.all(pred.dmin[8:, :] == 0) and np.all(pred.dmax[8:, :] == 3)
    assert np.all(pred.dmin[:, 8:] == 0) and np.all(pred.dmax[:, 8:] == 3)
    lo, hi = predict([m], (1, 1), fmt)
    assert np.all(lo == 0) and np.all(hi == 3)
    assert predict_picture([], fmt).dmax.max() == 3


def test_prediction_rejects_inverted_range():
    with pytest.raises(ValueError):
        DepthPrediction(np.array([[2]]), np.array([[1]]))


cell_depths = st.lists(st.integers(0, 3), min_size=64, max_size=64)
cell_pus = st.lists(st.sampled_from(list(PuMode)), min_size=64, max_size=64)


@given(st.lists(st.tuples(cell_depths, cell_pus), min_size=0, max_size=4))
def test_predicted_range_is_ordered_and_clamped(maps):
    dms = [_map(np.reshape(d, (8, 8)), np.reshape([int(p) for p in pu], (8, 8))) for d, pu in maps]
    lo, hi = predict(dms, (0, 0))
    lo, hi = np.broadcast_to(lo, (8, 8)), np.broadcast_to(hi, (8, 8))
    assert np.all(lo <= hi) and lo.min() >= 0 and hi.max() <= MAX_DEPTH
    if dms:
        adj = np.stack([np.minimum(m.adjusted, 3) for m in dms])
        assert np.array_equal(lo, adj.min(0)) and np.array_equal(hi, adj.max(0))


@given(
    st.lists(st.integers(0, 3), min_size=64, max_size=64),
    st.lists(st.integers(0, 3), min_size=64, max_size=64),
    st.sampled_from([8, 16, 32, 64]),
    st.data(),
)
def test_multi_cell_cu_uses_union(a, b, size, data):
    lo = np.minimum(np.reshape(a, (8, 8)), np.reshape(b, (8, 8))).astype(np.int16)
    hi = np.maximum(np.reshape(a, (8, 8)), np.reshape(b, (8, 8))).astype(np.int16)
    pred = DepthPrediction(lo, hi)
    n = size // 8
    r = data.draw(st.integers(0, 8 // n - 1)) * n
    c = data.draw(st.integers(0, 8 // n - 1)) * n
    got = pred.cu_range(r * 8, c * 8, size)
    assert got == (lo[r : r + n, c : c + n].min(), hi[r : r + n, c : c + n].max())


def test_covers_choices():
    pred = DepthPrediction(np.full((8, 8), 1, np.int16), np.full((8, 8), 2, np.int16))
    assert covers_choices(_map(1), pred)
    assert covers_choices(_map(2, PuMode.P2NxN), pred)
    assert not covers_choices(_map(3), pred)
    assert covers_choices(_map(0), pred)  # depth 0 with 2Nx2N is still searched
    assert not covers_choices(_map(0, PuMode.PNx2N), pred)


def test_pu_histogram_flat_and_normalised(rng):
    flat = Picture((np.full((64, 64), 90), np.full((64, 64), 128), np.full((64, 64), 128)))
    fmt = ViewFormat(64, 64, 8, "444")
    m = encode_view(flat, [], RdoConfig(30), fmt).depth_map
    hist = pu_histogram([m, m])
    assert hist["2Nx2N"] == 1.0
    mixed = [_map(1, PuMode.P2NxN), _map(np.arange(64).reshape(8, 8) % 4, PuMode.P2Nx2N)]
    hist = pu_histogram(mixed)
    assert sum(hist.values()) == pytest.approx(1.0, abs=1e-9)
    assert len(histogram_csv_rows(hist)) == len(PuMode)
    with pytest.raises(ValueError):
        pu_histogram([])
