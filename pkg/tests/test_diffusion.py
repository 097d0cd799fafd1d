import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sle_lab.diffusion import (
    COT_HALF, WRIGHT_FISHER, Absorbed, Alive, DiffusionSpec, absorption_times,
    bessel_exponent, bessel_survival, bessel_survival_exact, beta_exponent_from_moment,
    cut_sde_paths, cut_sde_survival, derivative_moment, eigen_data, flow_interval_moment,
    flow_samples, generator_residual, log_derivatives, sde_trial, survival_curve,
    survival_from_times,
)
from sle_lab.loewner import radial_boundary_survival, sample_radial_driving
from sle_lab.stats import MeanPoint, ScalePoint, fit_mean_decay, fit_power_law

COT = DiffusionSpec.cot_half()


# --- eigen data and generator certificates ------------------------------------------

@pytest.mark.parametrize("b,q,lam", [(0.0, 1 / 3, 1 / 4), (1 / 3, 2 / 3, 2 / 3)])
def test_eigen_data_anchor_values(b, q, lam):
    e = eigen_data(b)
    assert e.q == pytest.approx(q, abs=1e-14)
    assert e.lam == pytest.approx(lam, abs=1e-14)


@pytest.mark.parametrize("b,q,lam", [(0.0, 1 / 3, 1 / 4), (1 / 3, 2 / 3, 2 / 3)])
def test_generator_residual_certificates(b, q, lam):
    assert generator_residual(COT_HALF, math.sqrt(6), b, q, lam) < 1e-8


def test_generator_residual_negative_control():
    assert generator_residual(COT_HALF, math.sqrt(6), 0.0, 1 / 3, 0.3) > 1e-2


def test_printed_sign_fails_anchor():
    # with the opposite sign on the b f' h term, (1/3, 2/3, 2/3) is not an eigen-pair
    assert generator_residual(COT_HALF, math.sqrt(6), -1 / 3, 2 / 3, 2 / 3) > 1e-2


def test_wright_fisher_ground_state():
    k = 6.0
    assert generator_residual(WRIGHT_FISHER, 1.0, 0.0, (k - 4) / k, (k - 4) / 2, kappa=k) < 1e-8


def test_residual_grid_on_boundary_rejected():
    with pytest.raises(ValueError):
        generator_residual(COT_HALF, math.sqrt(6), 0, 1 / 3, 0.25, grid=[0.0, 1.0])
    with pytest.raises(ValueError):
        generator_residual("bessel", 1.0, 0, 1, 1)


@given(b=st.floats(0.0, 5.0), s2=st.floats(1.0, 10.0))
@settings(max_examples=50, deadline=None)
def test_eigen_data_solves_generator(b, s2):
    e = eigen_data(b, math.sqrt(s2))
    if s2 == 6.0:
        assert 3 * e.q**2 - e.q - 2 * b == pytest.approx(0, abs=1e-9)
    assert generator_residual(COT_HALF, math.sqrt(s2), b, e.q, e.lam) < 1e-8 * max(1, b)


# --- single paths ----------------------------------------------------------------------

def test_boundary_start_absorbed_immediately():
    assert sde_trial(COT, 0.0, 1.0, 1e-3, 1) == Absorbed(0.0)
    assert sde_trial(COT, 2 * math.pi, 1.0, 1e-3, 1) == Absorbed(0.0)


def test_sde_trial_deterministic():
    a = sde_trial(COT, 2.0, 1.0, 1e-3, 42)
    b = sde_trial(COT, 2.0, 1.0, 1e-3, 42)
    assert a == b
    assert isinstance(a, (Absorbed, Alive))


def test_absorption_is_terminal():
    taus = absorption_times(COT, 1.0, 2.0, 300, 5)
    # prefixes of the same noise: survival is monotone in the horizon
    short = absorption_times(COT, 1.0, 1.0, 300, 5)
    assert np.all((short < np.inf) <= (taus < np.inf))
    np.testing.assert_array_equal(short[short < np.inf], taus[short < np.inf])


def test_survival_at_time_zero_is_one():
    c = survival_curve(COT, 1.0, [0.0], 100, 1)
    assert c.alive == [100]
    assert c.to_csv().splitlines()[0] == "t,alive,n,ci_lo,ci_hi"


def test_survival_curve_needs_enough_trials():
    with pytest.raises(ValueError):
        survival_curve(COT, 1.0, [1.0], 50, 1)


def test_survival_rate_quarter():
    c = survival_curve(COT, math.pi, [2, 3, 4, 5, 6, 7, 8], 20_000, 11, step=2e-3)
    fit = fit_power_law(c.points(), "log-linear")
    assert abs(fit.slope + 0.25) < 0.02


def test_step_halving_agreement():
    ts = [1.0, 2.0]
    a = survival_curve(COT, math.pi, ts, 4000, 3, step=2e-3)
    b = survival_curve(COT, math.pi, ts, 4000, 4, step=1e-3)
    for pa, pb in zip(a.p, b.p):
        se = math.sqrt(pa * (1 - pa) / 4000 + pb * (1 - pb) / 4000)
        assert abs(pa - pb) < 1.96 * se * 1.5


def test_survival_profile_in_start_point():
    x0s = np.linspace(0.4, 2 * math.pi - 0.4, 9)
    surv = np.array([survival_curve(COT, x, [4.0], 3000, 20 + i, step=2e-3).p[0]
                     for i, x in enumerate(x0s)])
    assert np.argmax(surv) in (3, 4, 5)
    slope = np.polyfit(np.log(np.sin(x0s / 2)), np.log(surv), 1)[0]
    assert abs(slope - 1 / 3) < 0.05


def test_radial_boundary_angle_matches_sde():
    ts = [0.5, 1.0, 2.0]
    n = 2000
    taus = np.array([radial_boundary_survival(sample_radial_driving(6.0, 1e-4, 2.0, s))
                     for s in range(n)])
    a = survival_from_times(taus, ts)
    b = survival_curve(COT, math.pi, ts, n, 77)
    for (lo_a, hi_a), (lo_b, hi_b) in zip(a.intervals(), b.intervals()):
        assert lo_a <= hi_b and lo_b <= hi_a


# --- flows and moments ---------------------------------------------------------------

def test_flow_bound_and_order():
    hs = [0.5, 1.0, 2.0]
    rows = flow_samples(COT, hs, 64, 40, 3)
    for h, row in zip(hs, rows):
        for s in row:
            assert 0 <= s.length <= 2 * math.pi * math.exp(-0.5 * h) + 1e-9
            if s.length == 0:
                assert not s.origin_survives


def test_flow_grid_too_small():
    with pytest.raises(ValueError):
        flow_samples(COT, [1.0], 16, 1, 0)


def test_derivative_weights_bounded():
    L = log_derivatives(COT, math.pi, [0.5, 1.0, 2.0], 200, 9)
    for t, row in zip([0.5, 1.0, 2.0], L):
        alive = row[~np.isnan(row)]
        assert np.all(np.exp(alive) <= math.exp(-t / 2) * (1 + 1e-9))


def test_moment_small_b_matches_survival():
    hs = [1.0, 2.0, 3.0]
    m = derivative_moment(COT, math.pi, 1e-9, hs, 4000, 2, step=2e-3)
    c = survival_curve(COT, math.pi, hs, 4000, 2, step=2e-3)
    # same seed stream label differs, so compare statistically
    for mi, p in zip(m, c.p):
        assert abs(mi.mean - p) < 3 * math.sqrt(2 * p * (1 - p) / 4000)


def test_flow_and_derivative_moments_decay():
    hs = [2.0, 3.0, 4.0, 5.0]
    fm = flow_interval_moment(COT, 1 / 3, hs, 64, 300, 8, step=2e-3)
    dm = derivative_moment(COT, math.pi, 1 / 3, hs, 5000, 8, step=2e-3)
    f1 = fit_mean_decay([MeanPoint(r.horizon, r.mean, r.stderr, r.n) for r in fm])
    f2 = fit_mean_decay([MeanPoint(r.horizon, r.mean, r.stderr, r.n) for r in dm])
    assert abs(f1.slope + 2 / 3) < 3 * f1.stderr_slope + 0.05
    assert abs(f2.slope + 2 / 3) < 3 * f2.stderr_slope + 0.05


# --- Bessel -----------------------------------------------------------------------

def test_bessel_rejects_nonpositive_start():
    with pytest.raises(ValueError):
        bessel_survival(6.0, 0.0, [1.0], 10, 0)


def test_bessel_small_start_dies():
    c = bessel_survival(6.0, 1e-4, [1.0], 500, 0)
    assert c.p[0] < 0.1


def test_bessel_oracle_limits():
    assert bessel_survival_exact(6.0, 1.0, 1e-6) == pytest.approx(1.0, abs=1e-6)
    assert bessel_survival_exact(6.0, 1.0, 1e15) < 1e-2
    assert bessel_exponent(8.0) == 0.25


@pytest.mark.parametrize("kappa", [6.0, 8.0])
def test_bessel_matches_closed_form(kappa):
    ts = [0.5, 2.0, 8.0]
    n = 20_000
    c = bessel_survival(kappa, 1.0, ts, n, 13)
    for t, p in zip(ts, c.p):
        ex = bessel_survival_exact(kappa, 1.0, t)
        assert abs(p - ex) < 3.5 * math.sqrt(ex * (1 - ex) / n)


# --- cut-time SDE ----------------------------------------------------------------------

def test_cut_sde_boundary_start_absorbed():
    S, T, _ = cut_sde_paths(6.0, np.array([0.0, 1.0]), 1.0, np.array([1, 2], np.uint64))
    assert np.all(S == 0) and np.all(T == 0)


def test_cut_sde_regime_flag():
    with pytest.warns(UserWarning):
        r = cut_sde_survival(9.0, [0.5, 1.0], 50, 0)
    assert "outside" in r.regime_note


def test_cut_sde_rate_one():
    r = cut_sde_survival(6.0, [1, 2, 3, 4], 10_000, 5, with_time_change=True)
    assert abs(fit_power_law(r.s_curve.points(), "log-linear").slope + 1) < 0.08
    assert abs(fit_power_law(r.t_curve.points()).slope + 0.5) < 0.1
    alive = np.isfinite(r.abs_t) | np.isinf(r.abs_s)
    assert np.all(alive)


def test_beta_exponent_from_moment():
    rng = np.random.default_rng(0)
    for a in (0.0, 1 / 3, 2.0):
        z = rng.beta(a + 1, a + 1, 200_000)
        assert beta_exponent_from_moment(z) == pytest.approx(a, abs=0.03)
