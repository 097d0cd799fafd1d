import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sle_lab import percolation as P
from sle_lab._rng import trial_seeds
from sle_lab.stats import ScalePoint, fit_power_law


# --- independent oracles ---------------------------------------------------

def _closed_paths(field, inner, outer):
    """All simple closed-site paths from ``inner`` to ``outer`` (vertex sets)."""
    closed = {s for s in inner | outer | _all_sites(field.region)
              if field.state(*s) == P.CLOSED}
    out = set()

    def walk(v, seen):
        if v in outer:
            out.add(frozenset(seen))
            return
        for dq, dr in P.DIRECTIONS:
            w = (v[0] + dq, v[1] + dr)
            if w in closed and w not in seen:
                walk(w, seen | {w})

    for s in inner:
        if s in closed:
            walk(s, {s})
    return out


def _all_sites(region):
    q, r = region.coords(region.sites())
    return set(zip(q.tolist(), r.tolist()))


def _max_disjoint(paths):
    # keep minimal vertex sets, then exhaustive search for a disjoint family
    paths = sorted(set(paths), key=len)
    minimal = [p for p in paths if not any(o < p for o in paths)]

    def best(i, used):
        if i == len(minimal):
            return 0
        res = best(i + 1, used)
        if not (minimal[i] & used):
            res = max(res, 1 + best(i + 1, used | minimal[i]))
        return res

    return best(0, frozenset())


def _left_right(n, m):
    return ({(0, r) for r in range(m)}, {(n - 1, r) for r in range(m)})


# --- lazy colouring ---------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**62), st.integers(-3, 3), st.integers(-3, 3))
def test_lazy_colouring_is_idempotent(key, q, r):
    region = P.annulus_region(0.25, 1 / 16)
    f = P.SiteField(region, key)
    if not region.mask[int(region.index(q, r))] & P.IN_REGION:
        q, r = 4, 0
    first = f.state(q, r)
    assert first in (P.OPEN, P.CLOSED)
    assert all(f.state(q, r) == first for _ in range(3))
    g = P.SiteField(region, key).precolor()
    assert g.peek(q, r) == first


def test_open_probability_is_one_half():
    region = P.annulus_region(0.25, 1 / 64)
    f = P.SiteField(region, 11).precolor()
    c = f.colors[region.sites()]
    n = c.size
    assert abs(c.mean() - 0.5) < 3 * 0.5 / math.sqrt(n)


def test_field_csv_roundtrip():
    region = P.rhombus_region(3)
    f = P.SiteField(region, 5)
    f.state(0, 0)
    f.state(2, 1)
    text = f.to_csv()
    assert text.splitlines()[0] == "q,r,state"
    assert "unvisited" in text
    g = P.SiteField.from_csv(text, region)
    assert np.array_equal(g.colors, f.colors)


# --- exploration -------------------------------------------------------------

def _edges_ok(path, field):
    seen = set()
    for (lq, lr), (rq, rr) in zip(path.left, path.right):
        if field.peek(lq, lr) != P.CLOSED or field.peek(rq, rr) != P.OPEN:
            return False
        e = (lq, lr, rq, rr)
        if e in seen:
            return False
        seen.add(e)
        if (rq - lq, rr - lr) not in P.DIRECTIONS:
            return False
    return True


def test_exploration_self_avoiding_and_side_consistent():
    stop = P.StopRule(max_radius=1.0)
    for seed in range(100):
        path, field = P.explore_half_plane(1 / 32, stop, seed)
        assert path.status == "radius"
        assert _edges_ok(path, field)
        assert len(np.unique(np.round(path.points, 9))) == len(path.points)
        assert path.points[0] == 0
        assert np.all(path.points.imag >= 0)


def test_lazy_and_precoloured_exploration_agree():
    stop = P.StopRule(max_radius=2.0)
    for seed in range(5):
        lazy, f = P.explore_half_plane(1 / 64, stop, seed)
        full = P._half_plane_field(1 / 64, 2.0, seed).precolor()
        pre, _ = P.explore_half_plane(1 / 64, stop, seed, field=full)
        assert np.array_equal(lazy.left, pre.left)
        assert np.array_equal(lazy.right, pre.right)
        # only sites next to the path were coloured lazily
        assert f.visited() < full.visited()


def test_ball_stop_and_step_cap_are_distinct():
    path, _ = P.explore_half_plane(1 / 32, P.StopRule(max_steps=10), 3)
    assert path.status == "step_cap" and path.steps == 10
    hit, _ = P.explore_half_plane(
        1 / 32, P.StopRule(ball_center=0.2j, ball_radius=0.3), 3)
    assert hit.status == "ball" and hit.hit
    with pytest.raises(RuntimeError):
        P.disk_hit_trial([0.1], 1 / 32, 3, max_steps=10)


def test_exploration_rejects_coarse_mesh():
    with pytest.raises(ValueError):
        P.explore_half_plane(0.2)


def test_exploration_chunked_recording_matches():
    stop = P.StopRule(max_radius=2.0)
    whole, _ = P.explore_half_plane(1 / 128, stop, 2)
    pieces, _ = P.explore_half_plane(1 / 128, stop, 2, chunk=97)
    assert whole.steps + 1 == len(whole.points) > 97 * 5
    assert np.array_equal(whole.points, pieces.points)


def test_disk_hit_exponent():
    eps = [2.0**-k for k in range(2, 6)]
    n = 600
    hits = np.zeros(len(eps))
    for seed in trial_seeds(3, "disk-hit", 0, n):
        hits += P.disk_hit_trial(eps, 1 / 256, int(seed), max_radius=4.0)
    fit = fit_power_law([ScalePoint(e, n, int(h)) for e, h in zip(eps, hits)])
    assert abs(fit.slope - 0.25) < 0.08, (fit.slope, hits / n)


# --- annulus arms -------------------------------------------------------------

def test_annulus_preconditions():
    with pytest.raises(ValueError):
        P.annulus_two_arm_trial(0.25, 0.1, 0)
    with pytest.raises(ValueError):
        P.annulus_two_arm_trial(1.2, 0.01, 0)
    with pytest.raises(ValueError):
        P.annulus_region(0.995, 0.01)


def test_degenerate_annulus_is_crossed():
    # width 1.5 mesh: inner and outer shells overlap, one site crosses
    two, _ = P.arm_events(0.97, 0.02, trial_seeds(1, "thin", 0, 400), three=False)
    assert two.mean() >= 0.9


def test_three_arm_implies_two_arm():
    two, three = P.arm_events(0.125, 1 / 64, trial_seeds(1, "imp", 0, 300))
    assert np.all(two | ~three)
    assert three.sum() < two.sum()


def test_single_trials_match_batch():
    keys = trial_seeds(2, "single", 0, 20)
    two, three = P.arm_events(0.25, 1 / 32, keys)
    for k, a, b in zip(keys, two, three):
        assert P.annulus_two_arm_trial(0.25, 1 / 32, int(k)) == a
        assert P.annulus_three_arm_trial(0.25, 1 / 32, int(k)) == b


FIXTURE_24 = dict(epsilon=0.16, delta=0.26, outer=0.75,
                  offset=complex(0.5, math.sqrt(3) / 6) * 0.26)
FIXTURE_20 = dict(epsilon=0.42, delta=0.21, outer=0.7)


def test_fixture_sizes():
    assert P.annulus_region(**FIXTURE_24).n_sites == 24
    assert P.annulus_region(**FIXTURE_20).n_sites == 20


@pytest.mark.parametrize("fixture,which", [(FIXTURE_24, 0), (FIXTURE_20, 1)])
def test_enumeration_matches_monte_carlo(fixture, which):
    region = P.annulus_region(**fixture)
    exact = P.enumerate_arm_probabilities(region)[which]
    n = 10**6
    res = P.region_arm_events(region, trial_seeds(4, "enum", which, n))[which]
    se = math.sqrt(exact * (1 - exact) / n)
    assert 0 < exact < 1
    assert abs(res.mean() - exact) < 3 * se, (res.mean(), exact, se)


def test_enumeration_matches_brute_force_paths():
    # small annulus: compare per-configuration flows against path search
    region = P.annulus_region(**FIXTURE_20)
    inner = {tuple(map(int, region.coords(i))) for i in region.sites(P.SRC_A)}
    outer = {tuple(map(int, region.coords(i))) for i in region.sites(P.DST_A)}
    for key in range(200):
        f = P.SiteField(region, key).precolor()
        expect = _max_disjoint(_closed_paths(f, inner, outer))
        assert P.disjoint_closed_arms(f, inner, outer) == expect


def test_arm_batch_csv():
    rows = [P.ArmBatch(0.5, 1 / 512, 100, 97)]
    assert P.arm_batches_to_csv(rows).splitlines() == [
        "epsilon,delta,trials,successes", "0.5,0.001953125,100,97"]


# --- disjoint closed arms ------------------------------------------------------

def test_all_open_has_no_closed_arms():
    region = P.rhombus_region(4)
    f = P.SiteField(region, 0, colors=np.full(region.mask.size, P.OPEN, np.int8))
    assert P.disjoint_closed_arms(f, *_left_right(4, 4)) == 0


def test_two_corridors():
    region = P.rhombus_region(4, 3)
    f = P.SiteField(region)
    for q in range(4):
        f.set_state(q, 0, P.CLOSED)
        f.set_state(q, 1, P.OPEN)
        f.set_state(q, 2, P.CLOSED)
    inner, outer = _left_right(4, 3)
    assert _max_disjoint(_closed_paths(f, inner, outer)) == 2
    assert P.disjoint_closed_arms(f, inner, outer) == 2
    assert P.disjoint_closed_arms(f, inner, outer, limit=1) == 1


def test_disjoint_arms_empty_boundary_rejected():
    f = P.SiteField(P.rhombus_region(3), 0)
    with pytest.raises(ValueError):
        P.disjoint_closed_arms(f, [], [(2, 0)])


def test_disjoint_arms_against_path_search():
    inner, outer = _left_right(4, 4)
    region = P.rhombus_region(4)
    for key in range(1000):
        f = P.SiteField(region, key).precolor()
        assert P.disjoint_closed_arms(f, inner, outer) == \
            _max_disjoint(_closed_paths(f, inner, outer))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**16 - 1), st.integers(0, 15))
def test_arm_count_monotone_under_closing(bits, flip):
    region = P.rhombus_region(4)
    f = P.SiteField(region)
    for j in range(16):
        f.set_state(j % 4, j // 4, (bits >> j) & 1)
    inner, outer = _left_right(4, 4)
    before = P.disjoint_closed_arms(f, inner, outer)
    f.set_state(flip % 4, flip // 4, P.CLOSED)
    assert P.disjoint_closed_arms(f, inner, outer) >= before


# --- duality -------------------------------------------------------------------

def test_rhombus_duality():
    n = 10**5
    a, b = P.rhombus_crossings(8, trial_seeds(5, "hex", 0, n))
    # exactly one of the two crossings occurs in every configuration
    assert np.all(a ^ b)
    total = a.mean() + b.mean()
    assert abs(total - 1) < 3 * math.sqrt(2 * 0.25 / n)
    assert abs(a.mean() - 0.5) < 3 * math.sqrt(0.25 / n)


# --- two balls -----------------------------------------------------------------

def test_two_ball_regions_disjoint_and_independent():
    z, z2 = 0.4 + 1.2j, -0.2 + 1.4j
    d = abs(z - z2)
    eps, delta = 0.08, 1 / 32
    P.two_ball_event_trial(z, z2, eps, delta, 0, box=2.5, check_disjoint=True)
    n = 10**5
    ev = P.two_ball_events(z, z2, eps, delta, trial_seeds(6, "balls", 0, n), box=2.5)
    pa, pb, pc = ev.mean(axis=0)
    joint = np.all(ev, axis=1).mean()
    prod = pa * pb * pc
    se = math.sqrt(prod * (1 - prod) / n)
    assert 0.05 < prod < 0.95
    assert abs(joint - prod) < 3 * se
    assert d > 2 * eps


def test_two_ball_ceiling_and_rejections():
    z, z2 = 0.3 + 1.5j, -0.3 + 1.5j
    delta = 1 / 32
    # largest admissible epsilon: annuli two meshes wide, balls tangent at the midpoint
    res = P.two_ball_event_trial(z, z2, 0.3 - 2 * delta, delta, 1, box=3.0,
                                 check_disjoint=True)
    assert len(res) == 3
    with pytest.raises(ValueError):
        P.two_ball_event_trial(z, z2, 0.3, delta, 1)
    with pytest.raises(ValueError):
        P.two_ball_event_trial(0.5j, 1.9j, 0.1, delta, 1)


def _two_ball_fits():
    z, z2 = 0.5 + 2j, -0.5 + 2j
    delta = 1 / 128
    eps = [2.0**-k for k in range(3, 6)]
    n = 1500
    joint, marg = [], []
    for i, e in enumerate(eps):
        ev = P.two_ball_events(z, z2, e, delta, trial_seeds(8, "two-ball", i, n), box=4.0)
        joint.append(ScalePoint(e, n, int(np.all(ev, axis=1).sum())))
        marg.append([ScalePoint(e, n, int(ev[:, j].sum())) for j in range(3)])
    return fit_power_law(joint), [fit_power_law([m[j] for m in marg]) for j in range(3)]


@pytest.fixture(scope="module")
def two_ball_fits():
    return _two_ball_fits()


def test_two_ball_joint_exponent_is_sum_of_marginals(two_ball_fits):
    joint, marg = two_ball_fits
    # event (iii) does not involve epsilon; (i) and (ii) carry it
    assert abs(marg[2].slope) < 3 * marg[2].stderr_slope + 0.02
    expected = marg[0].slope + marg[1].slope + marg[2].slope
    se = math.sqrt(joint.stderr_slope**2 + sum(m.stderr_slope**2 for m in marg))
    assert abs(joint.slope - expected) < 3 * se


@pytest.mark.xfail(strict=True, reason=(
    "finite annulus ratios: at |z-z'|/eps <= 32 each two-arm factor has local "
    "slope ~0.13, so the joint eps-slope is ~0.27, not the asymptotic 1/2"))
def test_two_ball_product_shape(two_ball_fits):
    joint, _ = two_ball_fits
    assert abs(joint.slope - 0.5) < 0.1, joint.slope
