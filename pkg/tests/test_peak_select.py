import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trade.errors import NoCandidates
from trade.peak_select import (
    PeakCandidate,
    ScoreMap,
    argmax_peak,
    center_window,
    find_peaks,
    guided_peak,
    select_peak,
    softmax_normalize,
)


def bumps(shape, centers, amps, sigma=2.0):
    ii, jj = np.mgrid[: shape[0], : shape[1]]
    out = np.zeros(shape)
    for (ci, cj), a in zip(centers, amps):
        out = np.maximum(out, a * np.exp(-((ii - ci) ** 2 + (jj - cj) ** 2) / (2 * sigma**2)))
    return out


def cand(px, score):
    return PeakCandidate((0, 0), np.asarray(px, dtype=float), score)


def test_center_window_fits():
    assert np.allclose(center_window((256, 256), (0, 0), (512, 512), (100, 100)), (256, 256))


def test_center_window_clamped():
    assert np.allclose(center_window((5, 256), (0, 0), (512, 512), (100, 100)), (50, 256))


def test_center_window_fallback():
    assert np.allclose(center_window(None, (200, 300), (512, 512), (100, 100)), (200, 300))


def test_softmax_uniform():
    p = softmax_normalize(np.zeros((4, 5)))
    assert np.allclose(p, 1 / 20)


def test_softmax_two_cells():
    assert np.allclose(softmax_normalize(np.array([[0.0, np.log(3.0)]])), [[0.25, 0.75]])


@settings(max_examples=60)
@given(arrays(float, (6, 7), elements=st.integers(-20000, 20000).map(lambda k: k / 1000)), st.floats(-100, 100))
def test_softmax_properties(s, c):
    p = softmax_normalize(s)
    assert abs(p.sum() - 1) < 1e-9
    assert s.flat[np.argmax(p)] == s.max()
    assert np.abs(softmax_normalize(s + c) - p).max() < 1e-12


def test_find_peaks_single_bump():
    s = bumps((30, 30), [(12, 17)], [5.0])
    c = find_peaks(softmax_normalize(s * 10))
    assert len(c) == 1 and c[0].cell == (12, 17)


def test_find_peaks_fraction():
    # raw scores chosen so the softmax probabilities come out as 1.0 and 0.95 (resp. 0.5) of the maximum
    base = np.full((30, 30), -50.0)
    two = base.copy()
    two[5, 5], two[20, 20] = 0.0, np.log(0.95)
    assert len(find_peaks(softmax_normalize(two), fraction=0.8)) == 2
    one = base.copy()
    one[5, 5], one[20, 20] = 0.0, np.log(0.5)
    assert len(find_peaks(softmax_normalize(one), fraction=0.8)) == 1


def test_find_peaks_nms_plateau():
    s = np.zeros((10, 10))
    s[4, 4] = s[4, 5] = 1.0
    assert len(find_peaks(softmax_normalize(s * 10), nms_radius=2)) == 1


def test_find_peaks_sorted_and_bounded():
    s = bumps((40, 40), [(5, 5), (30, 30), (5, 30)], [1.0, 0.98, 0.97], sigma=1.5) * 20
    p = softmax_normalize(s)
    c = find_peaks(p)
    assert [x.score for x in c] == sorted((x.score for x in c), reverse=True)
    assert all(x.score <= p.max() for x in c)


def test_select_anti_switch():
    true = cand((105, 100), 0.85)
    decoy = cand((140, 100), 0.98)
    assert select_peak([decoy, true], (100, 100)) is true


def test_select_single_and_tie():
    a = cand((10, 0), 0.9)
    assert select_peak([a], (0, 0)) is a
    b = cand((0, 10), 0.8)
    assert select_peak([b, a], (0, 0)) is a


def test_select_empty():
    with pytest.raises(NoCandidates):
        select_peak([], (0, 0))


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.01, 1)), min_size=1, max_size=8))
def test_select_invariant_to_monotone_rescaling(items):
    cs = [cand((x, y), s) for x, y, s in items]
    scaled = [PeakCandidate(c.cell, c.pixel, float(np.sqrt(c.score) * 3)) for c in cs]
    a = select_peak(cs, (0, 0))
    b = select_peak(scaled, (0, 0))
    assert [c is a for c in cs] == [c is b for c in scaled]


def test_guided_picks_near_weaker_peak():
    s = bumps((64, 64), [(32, 34), (32, 50)], [0.85, 0.98], sigma=2.0)
    sm = ScoreMap(s * 10, (128.0, 128.0), stride=2.0)
    assert argmax_peak(sm).cell == (32, 50)
    g = guided_peak(sm, fraction=0.0001)
    assert g.cell == (32, 34)


def test_guided_min_score():
    sm = ScoreMap(np.full((5, 5), 0.1), (10, 10))
    with pytest.raises(NoCandidates):
        guided_peak(sm, min_score=0.5)


def test_cell_to_pixel_centre():
    sm = ScoreMap(np.zeros((5, 7)), (100.0, 50.0), stride=4.0)
    assert np.allclose(sm.cell_to_pixel(2, 3), (100, 50))
    assert np.allclose(sm.cell_to_pixel(0, 0), (88, 42))


def test_subcell_refinement():
    s = bumps((21, 21), [(10.3, 9.6)], [1.0], sigma=2.0)
    sm = ScoreMap(s, (0.0, 0.0))
    prob = softmax_normalize(s * 30)
    fine = find_peaks(prob, sm, subcell=True)[0].pixel
    coarse = find_peaks(prob, sm)[0].pixel
    truth = np.array([9.6 - 10, 10.3 - 10])
    assert np.all(np.abs(fine - truth) < np.abs(coarse - truth))


def test_scoremap_validation():
    with pytest.raises(ValueError):
        ScoreMap(np.array([[np.nan]]), (0, 0))
