import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sle_lab import stats as S


def test_exact_power_law():
    pts = [S.ScalePoint(s, 10**9, int(round(10**9 * s**0.5))) for s in (0.01, 0.04, 0.16, 0.64)]
    fit = S.fit_power_law(pts)
    assert fit.slope == pytest.approx(0.5, abs=1e-6)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-9)
    assert fit.stderr_slope >= 0


def test_synthetic_binomial_fit():
    rng = np.random.default_rng(1)
    n = 10**5
    scales = [2.0**-k for k in range(1, 7)]
    pts = [S.ScalePoint(s, n, int(rng.binomial(n, 0.3 * s**0.25))) for s in scales]
    fit = S.fit_power_law(pts)
    assert abs(fit.slope - 0.25) < 2 * fit.stderr_slope + 1e-12
    assert 0 <= fit.r_squared <= 1


def test_single_scale_rejected():
    with pytest.raises(ValueError):
        S.fit_power_law([S.ScalePoint(0.1, 10, 3)])


def test_zero_success_scale_warns():
    pts = [S.ScalePoint(s, 100, k) for s, k in ((0.1, 0), (0.2, 10), (0.4, 20), (0.8, 40))]
    with pytest.warns(UserWarning, match="zero successes"):
        fit = S.fit_power_law(pts)
    assert fit.n_scales == 3


def test_scale_point_validation():
    with pytest.raises(ValueError):
        S.ScalePoint(0.0, 10, 1)
    with pytest.raises(ValueError):
        S.ScalePoint(0.1, 10, 11)


def test_log_linear_mode():
    t = np.array([1.0, 2.0, 3.0, 4.0])
    pts = [S.ScalePoint(x, 10**9, int(10**9 * 0.8 * math.exp(-0.7 * x))) for x in t]
    fit = S.fit_power_law(pts, mode=S.LOG_LINEAR)
    assert fit.slope == pytest.approx(-0.7, abs=1e-4)
    assert fit.mode == "log-linear"


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 100.0))
def test_fit_is_scale_equivariant(c):
    rng = np.random.default_rng(3)
    scales = [0.05, 0.1, 0.2, 0.4]
    ks = [int(rng.binomial(1000, 0.5 * s**0.3)) for s in scales]
    a = S.fit_power_law([S.ScalePoint(s, 1000, k) for s, k in zip(scales, ks)])
    b = S.fit_power_law([S.ScalePoint(c * s, 1000, k) for s, k in zip(scales, ks)])
    assert b.slope == pytest.approx(a.slope, rel=1e-9, abs=1e-12)
    assert b.intercept == pytest.approx(a.intercept - a.slope * math.log(c), abs=1e-9)


def test_intervals_shrink_like_root_n():
    w1 = np.subtract(*S.wilson_interval(3000, 10000)[::-1])
    w2 = np.subtract(*S.wilson_interval(12000, 40000)[::-1])
    assert w1 / w2 == pytest.approx(2.0, rel=0.02)
    rng = np.random.default_rng(5)
    scales = [0.05, 0.1, 0.2, 0.4]
    se = []
    for n in (10**4, 4 * 10**4):
        fit = S.fit_power_law([S.ScalePoint(s, n, int(rng.binomial(n, 0.5 * s**0.3)))
                               for s in scales])
        se.append(fit.stderr_slope)
    assert se[0] / se[1] == pytest.approx(2.0, rel=0.1)


def test_fit_json_record():
    pts = [S.ScalePoint(s, 100, 50) for s in (0.1, 0.2, 0.4)]
    rec = json.loads(S.fit_power_law(pts).to_json())
    assert set(rec) == {"slope", "stderr", "r2", "mode", "n_scales"}


def test_asymp_check_constants():
    pts = [S.ScalePoint(s, 10**8, int(10**8 * 0.5 * s**0.25)) for s in (0.01, 0.1, 0.5)]
    fit = S.fit_power_law(pts)
    assert S.asymp_check(fit, 0.25, 0.01)
    assert not S.asymp_check(fit, 0.5, 0.01)


def test_fit_mean_decay():
    t = [1.0, 2.0, 4.0]
    pts = [S.MeanPoint(x, 2.0 * math.exp(-0.5 * x), 1e-6, 100) for x in t]
    assert S.fit_mean_decay(pts).slope == pytest.approx(-0.5, abs=1e-6)


# --- box counting ------------------------------------------------------------

SCALES = [2.0**-k for k in range(3, 8)]


def test_box_dimension_segment():
    rng = np.random.default_rng(0)
    pts = rng.uniform(size=10**4) * (1 + 0.5j)
    fit = S.box_counting_dimension(pts, SCALES)
    assert abs(fit.slope - 1.0) < 0.05


def test_box_dimension_square():
    rng = np.random.default_rng(0)
    pts = rng.uniform(size=(10**4, 2))
    fit = S.box_counting_dimension(pts, [2.0**-k for k in range(2, 6)])
    assert abs(fit.slope - 2.0) < 0.05


def _cantor(level):
    left = np.array([0.0])
    for k in range(level):
        left = np.concatenate([left, left + 2 * 3.0 ** -(k + 1)])
    return left + 0.5 * 3.0**-level


def test_box_dimension_cantor():
    pts = _cantor(8)
    fit = S.box_counting_dimension(pts, [3.0**-k for k in range(1, 7)], offsets=8)
    assert abs(fit.slope - math.log(2) / math.log(3)) < 0.03


def test_box_dimension_rigid_motion():
    rng = np.random.default_rng(2)
    pts = rng.uniform(size=10**4) * (1 + 0.5j)
    a = S.box_counting_dimension(pts, SCALES).slope
    moved = pts * np.exp(0.7j) + (0.3 - 2.1j)
    b = S.box_counting_dimension(moved, SCALES).slope
    assert abs(a - b) < 0.05


def test_box_dimension_rejections():
    with pytest.raises(ValueError):
        S.box_counting_dimension(np.zeros(20, complex), SCALES)
    with pytest.raises(ValueError):
        S.box_counting_dimension(np.arange(5.0), SCALES)
    with pytest.raises(ValueError):
        S.box_counting_dimension(np.arange(50.0), [0.1, 0.15, 0.2])


def test_fit_log_counts_pooled():
    scales = [0.1, 0.05, 0.025]
    logs = np.log([[10.0, 20.0, 40.0], [10.0, 20.0, 40.0]])
    fit = S.fit_log_counts(scales, logs)
    assert fit.slope == pytest.approx(1.0, abs=1e-9)


# --- harness -----------------------------------------------------------------

def test_two_point_independent_case():
    eps, s = 0.05, 0.25
    p = eps**s

    def oracle(d, seed):
        rng = np.random.default_rng(seed)
        return rng.random() < p, rng.random() < p

    table = S.two_point_correlation(oracle, eps, [0.2, 0.4, 0.8], 20000, 1, s=s)
    for row in table.rows:
        se = math.sqrt(p * p * (1 - p * p) / row.trials)
        assert abs(row.p_hat - p * p) < 3 * se
    # implied constant p^2 d^s / eps^{2s} = d^s: flat up to the d^s factor
    assert table.bounded


def test_two_point_flags_growth():
    def oracle(d, seed):
        return True, True

    table = S.two_point_correlation(oracle, 0.01, [0.02, 0.2, 2.0, 20.0], 10, 0, s=0.5)
    assert not table.bounded


def test_two_point_rejects_close_pairs():
    with pytest.raises(ValueError):
        S.two_point_correlation(lambda d, s: (True, True), 0.1, [0.15], 1, 0, s=0.25)


def test_condition_two_union_of_balls():
    eps = 0.1

    def membership(seed):
        return seed % 2 == 0 or None

    def area(state, rng):
        # C_eps contains the disk of diameter eps at a member point
        return math.pi / 4 + rng.uniform(0, 0.1)

    rep = S.condition_two_check(membership, area, eps, 200, 3)
    assert not rep.empty
    assert np.all(rep.ratios >= math.pi / 4)
    assert rep.mass_above == 1.0


def test_condition_two_empty_flagged():
    with pytest.warns(UserWarning):
        rep = S.condition_two_check(lambda s: None, lambda st, r: 1.0, 0.1, 20, 0)
    assert rep.empty and math.isnan(rep.mass_above)


def test_window_box_counts():
    # a horizontal segment of length 1 inside the window meets 1/s boxes
    z = np.linspace(0, 1, 10001)[:-1] + 0.3j
    c = S.window_box_counts(z, [0.5, 0.25, 0.125], (0.0, 0.0, 1.0, 1.0))
    assert c.tolist() == [2, 4, 8]
    # points outside the window are ignored
    c2 = S.window_box_counts(np.concatenate([z, z + 5]), [0.5], (0.0, 0.0, 1.0, 1.0))
    assert c2.tolist() == [2]
