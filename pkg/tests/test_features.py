import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from colorshed.errors import ConfigError, InputError
from colorshed.features import (
    DEFAULT_COLORS,
    BinGrid,
    HsvHistogram,
    HueRange,
    extract_features,
    hue_fraction,
    load_colors,
    parse_colors,
    sat_bin,
    val_bin,
)

GRID = BinGrid(32, 32)
RED = DEFAULT_COLORS["red"]
BLUE = DEFAULT_COLORS["blue"]


@pytest.mark.parametrize("s,expected", [(0, 0), (255, 7), (64, 2)])
def test_sat_bin_examples(s, expected):
    assert sat_bin(s, GRID) == expected


@pytest.mark.parametrize("v,expected", [(0, 0), (31, 0), (200, 6)])
def test_val_bin_examples(v, expected):
    assert val_bin(v, GRID) == expected


@pytest.mark.parametrize("x", [-1, 256, 1000])
def test_bin_out_of_range(x):
    with pytest.raises(InputError):
        sat_bin(x, GRID)
    with pytest.raises(InputError):
        val_bin(x, GRID)


@given(st.integers(0, 255), st.sampled_from([1, 2, 4, 8, 16, 32, 64, 128, 256]))
def test_bin_partition(s, size):
    g = BinGrid(size, size)
    matches = [i for i in range(g.n_sat_bins) if i * size <= s < (i + 1) * size]
    assert matches == [sat_bin(s, g)] == [val_bin(s, g)]


def test_grid_must_divide():
    assert BinGrid(32, 32).shape == (8, 8)
    with pytest.raises(ConfigError):
        BinGrid(30, 32)


def test_hue_range_validation():
    assert 5 in RED and 175 in RED and 10 not in RED and 169 not in RED
    for bad in [(), ((10, 5),), ((0, 181),), ((0, 10), (5, 20))]:
        with pytest.raises(InputError):
            HueRange(bad)


def test_hue_fraction_examples():
    h = HsvHistogram.from_pixels([(5, 100, 100), (5, 100, 100), (110, 10, 10), (60, 0, 0)])
    assert hue_fraction(h, RED) == 0.5
    assert hue_fraction(HsvHistogram.from_pixels([]), RED) == 0.0
    assert hue_fraction(HsvHistogram.from_pixels([(1, 0, 0), (175, 3, 3)]), RED) == 1.0


def test_extract_two_red_two_blue():
    px = [(5, 250, 250), (172, 250, 250), (110, 20, 20), (115, 30, 30)]
    f = extract_features(HsvHistogram.from_pixels(px), {"red": RED, "blue": BLUE}, GRID)
    red = f["red"]
    expected = np.zeros((8, 8))
    expected[7, 7] = 1.0
    assert np.array_equal(red.pf, expected)
    assert red.hue_fraction == 0.5
    assert red.hue_pixel_count == 2
    assert f["blue"].pf[0, 0] == 1.0
    assert f.total_fg_pixels == 4


def test_extract_no_red_and_single_pixel():
    f = extract_features(HsvHistogram.from_pixels([(110, 200, 200)]), {"red": RED}, GRID)
    assert not f["red"].pf.any() and f["red"].hue_fraction == 0.0
    f = extract_features(HsvHistogram.from_pixels([(0, 0, 0)]), {"red": RED}, GRID)
    assert f["red"].pf[0, 0] == 1.0 and f["red"].pf.sum() == 1.0


def test_grid_finer_than_histogram_rejected():
    h = HsvHistogram.from_pixels([(5, 100, 100)]).coarsen((1, 32, 32))
    with pytest.raises(ConfigError):
        extract_features(h, {"red": RED}, BinGrid(16, 16))


def test_hue_step_misaligned_rejected():
    h = HsvHistogram([(0, 0, 0)], [1], quant=(4, 32, 32))
    with pytest.raises(ConfigError):
        hue_fraction(h, RED)  # 170 % 4 != 0


pixels = st.lists(st.tuples(st.integers(0, 179), st.integers(0, 255), st.integers(0, 255)),
                  max_size=300)


@settings(max_examples=150, deadline=None)
@given(pixels)
def test_pf_normalized_and_in_range(px):
    f = extract_features(HsvHistogram.from_pixels(px), DEFAULT_COLORS, GRID)
    for cf in f.per_color.values():
        assert (cf.pf >= 0).all() and (cf.pf <= 1).all()
        if cf.hue_pixel_count:
            assert abs(cf.pf.sum() - 1.0) < 1e-9
        else:
            assert not cf.pf.any()


@settings(max_examples=150, deadline=None)
@given(pixels, st.sampled_from([(32, 32), (16, 64), (64, 8)]))
def test_coarsening_soundness(px, sv):
    grid = BinGrid(*sv)
    fine = HsvHistogram.from_pixels(px)
    coarse = fine.coarsen((1, sv[0], sv[1]))
    a = extract_features(fine, DEFAULT_COLORS, grid)
    b = extract_features(coarse, DEFAULT_COLORS, grid)
    for c in DEFAULT_COLORS:
        assert np.array_equal(a[c].pf, b[c].pf)
        assert a[c].hue_fraction == b[c].hue_fraction


@settings(max_examples=100, deadline=None)
@given(pixels)
def test_pixel_list_matches_brute_force(px):
    f = extract_features(HsvHistogram.from_pixels(px), {"red": RED}, GRID)
    reds = [(s, v) for h, s, v in px if h in RED]
    expected = np.zeros((8, 8))
    for s, v in reds:
        expected[s // 32, v // 32] += 1
    if reds:
        expected /= len(reds)
    assert np.allclose(f["red"].pf, expected, atol=1e-12)
    assert f["red"].hue_fraction == (len(reds) / len(px) if px else 0.0)


def test_histogram_merge_and_json_roundtrip():
    h = HsvHistogram([(3, 1, 1), (3, 1, 1), (0, 7, 7)], [2, 3, 1])
    assert h.total == 6 and len(h.counts) == 2
    back = HsvHistogram.from_json(json.loads(json.dumps(h.to_json())))
    assert back == h


@pytest.mark.parametrize("kw", [
    dict(cells=[(0, 0, 0)], counts=[-1]),
    dict(cells=[(180, 0, 0)], counts=[1]),
    dict(cells=[(0, 8, 0)], counts=[1]),
    dict(cells=[(0, 0, 0)], counts=[1], total=5),
    dict(cells=[(0, 0, 0)], counts=[1], quant=(7, 32, 32)),
])
def test_histogram_validation(kw):
    with pytest.raises(InputError):
        HsvHistogram(**kw)


def test_colors_file(tmp_path):
    p = tmp_path / "colors.json"
    p.write_text(json.dumps({"red": [[0, 10], [170, 180]], "green": [[40, 80]]}))
    colors = load_colors(p)
    assert colors["red"] == RED and 50 in colors["green"]
    with pytest.raises(InputError):
        parse_colors({"x": [[5]]})
    with pytest.raises(InputError):
        parse_colors({})
