import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from tau_ppg.metrics import (bland_altman, f1_at, hr_mae, hrv_features, hrv_freq, hrv_time,
                             nn_intervals, pearson)

peak_lists = st.lists(st.integers(0, 500), max_size=25, unique=True).map(sorted)


# -- matching ----------------------------------------------------------------------

def test_f1_examples():
    assert f1_at([5, 50], [5, 50], 5)[2] == 1.0
    assert f1_at([], [10, 20], 5)[:3] == (0.0, 0.0, 0.0)
    assert f1_at([], [], 5)[2] == 0.0
    p, r, f, m = f1_at([104, 290], [100, 200], 5)
    assert (m.tp, m.fp, m.fn) == (1, 1, 1)
    assert p == r == f == 0.5


def test_f1_is_one_to_one():
    # two predictions near one truth: only one can claim it
    _, _, _, m = f1_at([98, 101], [100], 5)
    assert m.tp == 1 and m.fp == 1
    assert m.pairs.tolist() == [[1, 0]]


@given(peak_lists, peak_lists, st.integers(0, 15))
def test_f1_symmetric(pred, truth, r):
    p1, r1, f1, _ = f1_at(pred, truth, r)
    p2, r2, f2, _ = f1_at(truth, pred, r)
    assert (p1, r1) == (r2, p2)
    assert f1 == pytest.approx(f2, abs=1e-12)


@given(peak_lists, peak_lists, st.integers(0, 15), st.integers(0, 10))
def test_f1_monotone_in_radius(pred, truth, r, extra):
    assert f1_at(pred, truth, r + extra)[2] >= f1_at(pred, truth, r)[2] - 1e-12


def test_f1_errors():
    with pytest.raises(ValueError):
        f1_at([3, 2], [1], 5)
    with pytest.raises(ValueError):
        f1_at([1], [1], -1)


# -- heart rate -----------------------------------------------------------------------

def test_hr_mae_examples():
    assert hr_mae([(60, 60), (75, 75)]) == 0
    assert hr_mae([(62, 60), (58, 60)]) == 2
    assert hr_mae([(70.5, 68)]) == 2.5
    with pytest.raises(ValueError):
        hr_mae([])


def test_nn_intervals():
    np.testing.assert_allclose(nn_intervals([0, 80, 161], 100), [800, 810])


# -- HRV --------------------------------------------------------------------------------

def test_hrv_time_examples():
    assert hrv_time([800] * 10) == (800, 0, 0, 0)
    mean_nn, sdnn, rmssd, sdsd = hrv_time([800, 810, 790])
    assert mean_nn == 800
    assert sdnn == pytest.approx(math.sqrt(200 / 3), abs=1e-9)
    assert rmssd == pytest.approx(15.8113883008419, abs=1e-9)
    assert sdsd == pytest.approx(15.0, abs=1e-9)
    with pytest.raises(ValueError):
        hrv_time([800, 810])


@given(st.lists(st.floats(300, 2000), min_size=3, max_size=40), st.randoms())
def test_hrv_time_order(nn, rnd):
    shuffled = list(nn)
    rnd.shuffle(shuffled)
    a, b = hrv_time(nn), hrv_time(shuffled)
    assert a[0] == pytest.approx(b[0], rel=1e-12)
    assert a[1] == pytest.approx(b[1], rel=1e-9, abs=1e-9)


def test_rmssd_depends_on_order():
    assert hrv_time([800, 900, 800, 900])[2] != hrv_time([800, 800, 900, 900])[2]


def _modulated_nn(f_mod, seconds=300, base=800.0, depth=40.0):
    nn, t = [], 0.0
    while t < seconds:
        v = base + depth * math.sin(2 * math.pi * f_mod * t)
        nn.append(v)
        t += v / 1000.0
    return np.array(nn)


def test_hrv_freq_modulation():
    lf, hf, ratio = hrv_freq(_modulated_nn(0.1))
    assert ratio > 5
    lf, hf, ratio = hrv_freq(_modulated_nn(0.25))
    assert ratio < 0.5


def test_hrv_freq_constant_and_short():
    lf, hf, _ = hrv_freq(np.full(100, 800.0))
    assert lf < 1e-9 and hf < 1e-9
    with pytest.raises(ValueError):
        hrv_freq(np.full(20, 800.0))


def test_hrv_features_short_record_skips_frequency():
    f = hrv_features([800, 810, 790, 805])
    assert f.lf is None and f.rmssd == pytest.approx(hrv_time([800, 810, 790, 805])[2])
    g = hrv_features(_modulated_nn(0.1))
    assert g.lf_hf > 5


# -- agreement ---------------------------------------------------------------------

def test_pearson_examples():
    a = np.array([1.0, 2, 3, 4])
    assert pearson(a, a)[0] == 1.0
    assert pearson(a, -a)[0] == -1.0
    r, p = pearson(a, [1, 2, 3, 5])
    assert r == pytest.approx(6.5 / math.sqrt(5 * 8.75), abs=1e-9)
    assert round(r, 4) == 0.9827
    ref = stats.pearsonr(a, [1, 2, 3, 5])
    assert p == pytest.approx(ref[1], abs=1e-9)
    with pytest.raises(ValueError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2])


def test_bland_altman_examples():
    assert bland_altman([1, 2, 3], [1, 2, 3]) == (0, 0, 0)
    m, lo, hi = bland_altman([1, -1], [0, 0])
    assert m == 0 and lo == pytest.approx(-1.96, abs=1e-9) and hi == pytest.approx(1.96, abs=1e-9)
    assert bland_altman([5, 7, 9], [3, 5, 7]) == (2, 2, 2)
