"""Geometric event detectors on simulated SLE paths.

* Disconnection of a ball in the unit disk (chordal SLE_6 from 1 to -1).
  By locality, chordal SLE_6 toward -1 and radial SLE_6 toward the centre of
  the ball agree until -1 is cut off from that centre, so the default engine
  is radial: after a disk automorphism fixing 1 makes the ball centred, the
  trial succeeds iff the boundary angle of the image of -1 survives until the
  radial trace enters the ball.  Koebe's quarter theorem confines that entry
  time to ``[log(1/(4 rho)), log(1/rho)]``, so every trial resolves.  A
  half-plane variant (Moebius identification ``z -> i(1-z)/(1+z)``) is kept
  for cross-checks; it has to censor at a finite capacity horizon.
* Escape: i is not swallowed when the chordal trace first reaches radius R.
* Approximate left-boundary times and cut times, through the frontier
  processes of the shifted flow (and, for cut times, a geometric check on the
  polyline as well).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .loewner import (
    SLIT_ETA, DrivingPath, RadialDrivingPath, TracePolyline, _radial_boundary_run,
    _radial_inverse_step, _radial_pieces, _step_point, _trace_point,
    forward_flow_many, sample_driving, sample_radial_driving,
)

FULL_INTERVAL_NOTE = "kappa <= 4: the trace is simple, every time is a boundary time"
FULL_CUT_NOTE = "kappa <= 4: the trace is simple and avoids the real line, every time is a cut time"


def distance_tolerance(dt: float) -> float:
    """Geometric tolerance 5*sqrt(dt) used by touching tests."""
    return 5.0 * math.sqrt(dt)


@dataclass(frozen=True)
class TrialOutcome:
    kappa: float
    scale: float
    dt: float
    seed: int
    success: bool
    stopping_time: float
    censored: bool = False


def trials_to_csv(outcomes) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "scale", "success", "stopping_time"])
    for o in outcomes:
        w.writerow([o.seed, repr(float(o.scale)), int(o.success), repr(float(o.stopping_time))])
    return buf.getvalue()


@dataclass
class TimeSetSample:
    epsilon: float
    a: float
    grid: np.ndarray
    member: np.ndarray
    kind: str
    notes: list = field(default_factory=list)

    @property
    def fraction(self) -> float:
        return float(np.mean(self.member)) if len(self.member) else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "member"])
        for t, m in zip(self.grid, self.member):
            w.writerow([repr(float(t)), int(m)])
        return buf.getvalue()


# --- geometry helpers ---------------------------------------------------------

@njit(cache=True, inline="always")
def _seg_dist(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    L2 = dx * dx + dy * dy
    s = 0.0
    if L2 > 0.0:
        s = ((px - ax) * dx + (py - ay) * dy) / L2
        s = min(1.0, max(0.0, s))
    ex = ax + s * dx - px
    ey = ay + s * dy - py
    return math.sqrt(ex * ex + ey * ey)


def polyline_distance(z: complex, points) -> float:
    """Euclidean distance from ``z`` to the polyline through ``points``."""
    p = np.asarray(points, dtype=complex)
    if len(p) == 1:
        return float(abs(p[0] - z))
    a, b = p[:-1], p[1:]
    d = b - a
    L2 = np.abs(d) ** 2
    s = np.where(L2 > 0, ((z - a) * d.conjugate()).real / np.where(L2 > 0, L2, 1), 0.0)
    s = np.clip(s, 0.0, 1.0)
    return float(np.min(np.abs(a + s * d - z)))


def disk_to_half_plane(z):
    """Moebius identification of the unit disk with H sending 1 -> 0, -1 -> inf, 0 -> i."""
    z = np.asarray(z, dtype=complex)
    return 1j * (1 - z) / (1 + z)


def recentred_ball(center: complex, r: float, target: complex = -1) -> tuple[float, float]:
    """Disk automorphism fixing 1 that centres ``B(center, r)``.

    Returns ``(rho, y0)``: the radius of the centred image ball and the angle
    (in (0, 2 pi)) of the image of the boundary point ``target``.
    """
    c = complex(center)
    m = abs(c)
    if m == 0:
        a = 0j
        rho = r
    else:
        x1, x2 = m - r, m + r
        s, p = x1 + x2, 1 + x1 * x2
        # hyperbolic midpoint of [x1, x2], in the cancellation-free form
        aa = s / (p + math.sqrt(max(p * p - s * s, 0.0)))
        rho = (x2 - aa) / (1 - aa * x2)
        a = aa * c / m
    phi1 = (1 - a) / (1 - a.conjugate())
    target = complex(target)
    img = (target - a) / (1 - a.conjugate() * target) / phi1
    y0 = math.atan2(img.imag, img.real) % (2 * math.pi)
    return float(rho), float(y0)


def _check_disk_geometry(radii, center, eta):
    c = abs(complex(center))
    for r in radii:
        if not (0 < r < 1):
            raise ValueError("radius must lie in (0, 1)")
        if r >= 1 - c:
            raise ValueError("ball must lie inside the unit disk")
    if eta is not None:
        if c >= 1 - 2 * eta:
            raise ValueError("center too close to the boundary: need |center| < 1 - 2 eta")
        if max(radii) >= eta:
            raise ValueError("radius must be below eta")


# --- radial disconnection -----------------------------------------------------

@njit(cache=True, fastmath=True)
def _radial_tip(th, hs, p):
    beta = complex(math.cos(th[p]), math.sin(th[p]))
    g = beta * _radial_inverse_step(1.0 + 0j, hs[p])
    for q in range(p - 1, 0, -1):
        beta = complex(math.cos(th[q]), math.sin(th[q]))
        g = beta * _radial_inverse_step(g / beta, hs[q])
    return g


@njit(cache=True, fastmath=True)
def _radial_ball_hits(th, hs, ends, rhos, k_lo, k_hi):
    """First step k in [k_lo, k_hi] whose trace segment meets B(0, rho), per rho."""
    n = rhos.shape[0]
    hit = -np.ones(n, dtype=np.int64)
    if k_hi < k_lo:
        return hit
    prev = _radial_tip(th, hs, ends[k_lo - 1]) if k_lo > 1 else 1.0 + 0j
    left = n
    for k in range(k_lo, k_hi + 1):
        cur = _radial_tip(th, hs, ends[k])
        d = _seg_dist(0.0, 0.0, prev.real, prev.imag, cur.real, cur.imag)
        for i in range(n):
            if hit[i] < 0 and d <= rhos[i]:
                hit[i] = k
                left -= 1
        if left == 0:
            break
        prev = cur
    return hit


def _radial_disconnection(radii, center, dt, seed, refine, target=-1):
    pairs = [recentred_ball(center, r, target) for r in radii]
    rhos = np.array([p[0] for p in pairs])
    y0 = pairs[0][1]
    horizon = math.log(1 / rhos.min()) + 0.25
    # one Brownian path: the boundary angle of -1 runs on the fine grid (its
    # survival converges slowly in the step), the trace on every refine-th value
    fine = sample_radial_driving(6.0, dt / refine, horizon, seed)
    thf, hsf, endsf = _radial_pieces(fine, fine.n_steps)
    _, p_sw = _radial_boundary_run(y0, thf, hsf, 1, int(endsf[-1]))
    path = RadialDrivingPath(6.0, dt, fine.angles[::refine].copy())
    th, hs, ends = _radial_pieces(path, path.n_steps)
    if p_sw < 0:
        k_sw = -1
    else:
        t_sw = np.searchsorted(endsf, p_sw, side="left") * fine.dt
        k_sw = int(math.ceil(t_sw / dt - 1e-9))
    k_lo = max(1, int(math.log(1 / (4 * rhos.max())) / dt))
    k_hi = path.n_steps if k_sw < 0 else k_sw - 1
    hits = _radial_ball_hits(th, hs, ends, rhos, k_lo, k_hi)
    out = []
    for r, h in zip(radii, hits):
        if h >= 0:
            out.append(TrialOutcome(6.0, r, dt, seed, True, h * dt))
        elif k_sw >= 0:
            out.append(TrialOutcome(6.0, r, dt, seed, False, k_sw * dt))
        else:  # not reached: only possible through discretization at the horizon
            out.append(TrialOutcome(6.0, r, dt, seed, False, path.horizon, censored=True))
    return out


# --- chordal ball hitting -------------------------------------------------------

@njit(cache=True)
def _ball_hits(W, dt, ax, ay, cx, cy, rad, k_end, eta, margin):
    """Chordal trace entering discs, anchored at interior points.

    Target m succeeds at the first step whose trace segment meets
    ``B(c_m, rad_m)`` provided the anchor ``a_m`` is still unswallowed.
    Trace points are only evaluated once some anchor's conformal radius
    ``2 Im g / |g'|`` allows the hull within reach (Koebe quarter bound).
    Returns (hit_step, swallow_step), -1 for "not by k_end".
    """
    n = ax.shape[0]
    gr = ax.copy()
    gi = ay.copy()
    side = np.zeros(n)
    dr = np.ones(n)
    di = np.zeros(n)
    sw = -np.ones(n, dtype=np.int64)
    hit = -np.ones(n, dtype=np.int64)
    reach = np.empty(n)
    for m in range(n):
        reach[m] = math.sqrt((ax[m] - cx[m]) ** 2 + (ay[m] - cy[m]) ** 2) + rad[m] + margin
    s4 = 4.0 * dt
    sq = math.sqrt(dt)
    pk = -1
    px = 0.0
    py = 0.0
    left = n
    for k in range(1, k_end + 1):
        U = W[k]
        need = False
        for m in range(n):
            if sw[m] >= 0 or hit[m] >= 0:
                continue
            dead, gr[m], gi[m], side[m], dr[m], di[m] = _step_point(
                gr[m], gi[m], side[m], dr[m], di[m], U, s4, sq, eta, True)
            if dead:
                sw[m] = k
                left -= 1
                continue
            crad = 2.0 * gi[m] / math.sqrt(dr[m] * dr[m] + di[m] * di[m])
            if crad <= 4.0 * reach[m]:
                need = True
        if need:
            if pk != k - 1:
                px, py = _trace_point(W, dt, k - 1)
            qx, qy = _trace_point(W, dt, k)
            for m in range(n):
                if sw[m] < 0 and hit[m] < 0:
                    if _seg_dist(cx[m], cy[m], px, py, qx, qy) <= rad[m]:
                        hit[m] = k
                        left -= 1
            px, py, pk = qx, qy, k
        if left == 0:
            break
    return hit, sw


def ball_hits(path: DrivingPath, anchors, centers, radii, k_end=None):
    """Hit and swallow steps for (anchor, disc) targets on one chordal path."""
    a = np.asarray(anchors, dtype=complex)
    c = np.asarray(centers, dtype=complex)
    r = np.asarray(radii, dtype=float)
    k = path.n_steps if k_end is None else int(k_end)
    return _ball_hits(path.values, path.dt, a.real.copy(), a.imag.copy(), c.real.copy(),
                      c.imag.copy(), r, k, SLIT_ETA, distance_tolerance(path.dt))


def _circle_through(p):
    (x1, y1), (x2, y2), (x3, y3) = [(z.real, z.imag) for z in p]
    d = 2 * (x1 * (y2 - y3) + x2 * (y3 - y1) + x3 * (y1 - y2))
    ux = ((x1**2 + y1**2) * (y2 - y3) + (x2**2 + y2**2) * (y3 - y1) + (x3**2 + y3**2) * (y1 - y2)) / d
    uy = ((x1**2 + y1**2) * (x3 - x2) + (x2**2 + y2**2) * (x1 - x3) + (x3**2 + y3**2) * (x2 - x1)) / d
    c = complex(ux, uy)
    return c, abs(p[0] - c)


def _chordal_disconnection(radii, center, dt, seed, horizon, kappa):
    path = sample_driving(kappa, dt, horizon, seed)
    anchor = complex(disk_to_half_plane(center))
    cs, rs = [], []
    for r in radii:
        pts = disk_to_half_plane(center + r * np.exp(1j * np.array([0.3, 2.4, 4.4])))
        cc, rr = _circle_through(pts)
        cs.append(cc)
        rs.append(rr)
    hit, sw = ball_hits(path, [anchor] * len(radii), cs, rs)
    out = []
    for r, h, s in zip(radii, hit, sw):
        if h >= 0:
            out.append(TrialOutcome(kappa, r, dt, seed, True, h * dt))
        elif s >= 0:
            out.append(TrialOutcome(kappa, r, dt, seed, False, s * dt))
        else:
            out.append(TrialOutcome(kappa, r, dt, seed, False, path.horizon, censored=True))
    return out


def disk_disconnection_multi(radii, center: complex = 0j, dt: float = 2e-3, seed: int = 0,
                             eta: float | None = None, method: str = "radial",
                             horizon: float = 64.0, kappa: float = 6.0,
                             refine: int = 200):
    """Disconnection trials for several radii on one SLE_6 path.

    Success at radius r: when the trace first meets ``B(center, r)`` the
    centre is not yet cut off from -1.  ``stopping_time`` is that hitting
    time (radial or half-plane capacity, depending on ``method``), or the
    disconnection time on failure.  Events are nested in r pathwise.  The
    radial route tracks the angle of -1 on a grid ``refine`` times finer than
    the trace grid.
    """
    radii = [float(r) for r in np.atleast_1d(radii)]
    _check_disk_geometry(radii, center, eta)
    if method == "radial":
        if kappa != 6.0:
            raise ValueError("the radial route relies on SLE_6 locality")
        return _radial_disconnection(radii, center, dt, seed, refine)
    if method == "chordal":
        return _chordal_disconnection(radii, center, dt, seed, horizon, kappa)
    raise ValueError(f"unknown method {method!r}")


def disk_disconnection_trial(r: float, center: complex = 0j, dt: float = 2e-3, seed: int = 0,
                             eta: float | None = None, method: str = "radial",
                             horizon: float = 64.0) -> TrialOutcome:
    return disk_disconnection_multi([r], center, dt, seed, eta, method, horizon)[0]


# --- escape ------------------------------------------------------------------------

@njit(cache=True)
def _radius_crossings(W, dt, k_end, levels, stride, frac):
    """First trace step with |gamma| >= level for ascending ``levels``.

    Coarse scan every ``stride`` steps; a block is rescanned step by step
    when either endpoint comes within a relative ``frac`` of the next level.
    """
    L = levels.shape[0]
    out = -np.ones(L, dtype=np.int64)
    nxt = 0
    prev_k = 0
    prev_r = 0.0
    k = 0
    while nxt < L and prev_k < k_end:
        k = min(prev_k + stride, k_end)
        x, y = _trace_point(W, dt, k)
        r = math.sqrt(x * x + y * y)
        if max(prev_r, r) >= levels[nxt] * (1.0 - frac):
            for j in range(prev_k + 1, k + 1):
                if j == k:
                    rj = r
                else:
                    xj, yj = _trace_point(W, dt, j)
                    rj = math.sqrt(xj * xj + yj * yj)
                while nxt < L and rj >= levels[nxt]:
                    out[nxt] = j
                    nxt += 1
                if nxt == L:
                    break
        prev_k = k
        prev_r = r
    return out


def escape_multi(radii, dt: float = 0.01, seed: int = 0, kappa: float = 6.0,
                 stride: int = 8):
    """Escape trials for several radii on one chordal path.

    Success at R: i is not swallowed when the trace first reaches ``|z| = R``.
    Since ``hcap(K) <= rad(K)^2``, the trace reaches radius R by capacity
    ``R^2``, which bounds the simulation.  On failure ``stopping_time`` is
    the swallowing time of i.
    """
    Rs = np.sort(np.asarray(radii, dtype=float))
    if np.any(Rs < 1):
        raise ValueError("R must be at least 1")
    path = sample_driving(kappa, dt, Rs[-1] ** 2 + dt, seed)
    _, t_i, _ = forward_flow_many([1j], path)
    t_i = float(t_i[0])
    k_i = math.inf if math.isinf(t_i) else int(round(t_i / dt))
    k_end = path.n_steps if math.isinf(k_i) else k_i - 1
    cross = _radius_crossings(path.values, dt, k_end, Rs, stride, 0.15)
    out = {}
    for R, c in zip(Rs, cross):
        if c >= 0:
            out[R] = TrialOutcome(kappa, R, dt, seed, True, c * dt)
        elif k_i * dt > R * R:
            out[R] = TrialOutcome(kappa, R, dt, seed, True, R * R)
        else:
            out[R] = TrialOutcome(kappa, R, dt, seed, False, t_i)
    return [out[float(R)] for R in np.asarray(radii, dtype=float)]


def escape_trial(R: float, dt: float = 0.01, seed: int = 0, kappa: float = 6.0) -> TrialOutcome:
    if R < 1:
        raise ValueError("R must be at least 1")
    return escape_multi([R], dt, seed, kappa)[0]


# --- time sets ------------------------------------------------------------------

@njit(cache=True)
def _frontier_events(W, dt, starts, eps_steps, a_steps):
    """First left-frontier event in the window (s + eps, s + a] per start step s.

    The left frontier of the hull grown since step s is a real point A left
    of the driving, moved by the exact slit map; an event (the new hull
    swallows further to the left) happens on a step whose driving value
    reaches A, after which A restarts at the left foot ``U - 2 sqrt(dt)``.
    Frontiers of earlier starts lie to the left of later ones and coincide
    after a common event, so starts are kept in groups (contiguous in start
    order) sharing one frontier.  Returns -1 (no event), step, or -2 if the
    window is not covered by the path.
    """
    ns = starts.shape[0]
    first = -np.ones(ns, dtype=np.int64)
    N = W.shape[0] - 1
    cap = ns + N + 2
    gval = np.empty(cap)
    glo = np.empty(cap, dtype=np.int64)
    ghi = np.empty(cap, dtype=np.int64)
    head = 0
    top = 0
    nxt = 0
    s2 = 2.0 * math.sqrt(dt)
    s4 = 4.0 * dt
    for j in range(1, N + 1):
        U = W[j]
        merged = False
        mlo = ns
        mhi = -1
        while top > head and gval[top - 1] >= U:
            g = top - 1
            lo = glo[g]
            hi = ghi[g]
            while lo <= hi and j - starts[lo] > eps_steps:
                if j - starts[lo] <= a_steps:
                    first[lo] = j
                lo += 1
            if lo <= hi:
                mlo = min(mlo, lo)
                mhi = max(mhi, hi)
            top -= 1
            merged = True
        for g in range(head, top):
            d = gval[g] - U
            gval[g] = U - math.sqrt(d * d + s4)
        if merged and mhi >= 0:
            gval[top] = U - s2
            glo[top] = mlo
            ghi[top] = mhi
            top += 1
        while nxt < ns and starts[nxt] == j - 1:
            if top > head and gval[top - 1] == U - s2:
                if glo[top - 1] > ghi[top - 1]:
                    glo[top - 1] = nxt
                ghi[top - 1] = nxt
            else:
                gval[top] = U - s2
                glo[top] = nxt
                ghi[top] = nxt
                top += 1
            nxt += 1
        while head < top:
            lo = glo[head]
            while lo <= ghi[head] and j - starts[lo] >= a_steps:
                lo += 1
            glo[head] = lo
            if lo > ghi[head]:
                head += 1
            else:
                break
    for i in range(ns):
        if first[i] == -1 and starts[i] + a_steps > N:
            first[i] = -2
    return first


def _grid_steps(path, epsilon, a, grid_step):
    if not (0 < epsilon < a):
        raise ValueError("need 0 < epsilon < a")
    eps_steps = int(round(epsilon / path.dt))
    a_steps = int(round(a / path.dt))
    if eps_steps < 1:
        raise ValueError("epsilon must be at least one step")
    if path.horizon < 1 + a - 1e-9:
        raise ValueError("path horizon must cover [0, 1 + a]")
    g = max(1, eps_steps // 2) if grid_step is None else max(1, int(round(grid_step / path.dt)))
    starts = np.arange(0, int(round(1 / path.dt)) + 1, g, dtype=np.int64)
    return starts, eps_steps, a_steps


def boundary_time_set(path: DrivingPath, epsilon: float, a: float,
                      grid_step: float | None = None) -> TimeSetSample:
    """Approximate left-boundary times ``D_{epsilon,a}`` on a grid of [0, 1].

    t is a member iff the leftmost real point of ``g_t(K_{t+s})`` does not
    move for s in (epsilon, a].
    """
    starts, e, A = _grid_steps(path, epsilon, a, grid_step)
    grid = starts * path.dt
    if path.kappa <= 4:
        return TimeSetSample(epsilon, a, grid, np.ones(len(grid), bool), "boundary",
                             [FULL_INTERVAL_NOTE])
    first = _frontier_events(path.values, path.dt, starts, e, A)
    return TimeSetSample(epsilon, a, grid, first == -1, "boundary")


def boundary_time_members(path: DrivingPath, times, epsilon: float, a: float) -> np.ndarray:
    """Membership of the given times (in [0, 1]) in ``D_{epsilon,a}``."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any((t < 0) | (t > 1 + 1e-12)):
        raise ValueError("times must lie in [0, 1]")
    _, e, A = _grid_steps(path, epsilon, a, None)
    if path.kappa <= 4:
        return np.ones(len(t), bool)
    starts = np.round(t / path.dt).astype(np.int64)
    return _frontier_events(path.values, path.dt, starts, e, A) == -1


def cut_time_set_flow(path: DrivingPath, epsilon: float, a: float,
                      grid_step: float | None = None) -> TimeSetSample:
    """Approximate cut times through the flow: no left and no right frontier
    event in (t + epsilon, t + a], i.e. ``gamma((t+eps, t+a])`` does not touch
    ``gamma([0, t])`` or the real line."""
    starts, e, A = _grid_steps(path, epsilon, a, grid_step)
    if path.kappa <= 4:
        return TimeSetSample(epsilon, a, starts * path.dt, np.ones(len(starts), bool), "cut",
                             [FULL_CUT_NOTE])
    left = _frontier_events(path.values, path.dt, starts, e, A)
    right = _frontier_events(-path.values, path.dt, starts, e, A)
    return TimeSetSample(epsilon, a, starts * path.dt, (left == -1) & (right == -1), "cut")


@njit(cache=True)
def _window_min(p, lo, hi):
    """min(p[i+lo : i+hi+1]) for every i (windows clipped at the end)."""
    n = p.shape[0]
    out = np.empty(n, dtype=p.dtype)
    dq = np.empty(n, dtype=np.int64)
    h = 0
    t = 0
    j = 0  # next index to push
    for i in range(n):
        while j < n and j <= i + hi:
            while t > h and p[dq[t - 1]] >= p[j]:
                t -= 1
            dq[t] = j
            t += 1
            j += 1
        while t > h and dq[h] < i + lo:
            h += 1
        out[i] = p[dq[h]] if t > h else np.iinfo(np.int64).max
    return out


def cut_time_set(trace: TracePolyline, path: DrivingPath, epsilon: float, a: float,
                 tol: float | None = None) -> TimeSetSample:
    """Approximate cut times from the polyline.

    t is a member iff ``gamma([t+eps, t+a])`` stays farther than ``tol``
    (default 5 sqrt(dt)) from ``gamma([0, t])`` and from the real line.
    For kappa <= 4 the full grid is returned with a note: a finite tolerance
    only detects near-approaches of a simple curve, and near the junction
    ``gamma(t+eps)`` is itself within the tolerance of ``gamma(t)`` unless
    ``eps/dt`` is in the thousands.
    """
    if not (0 < epsilon < a):
        raise ValueError("need 0 < epsilon < a")
    times = np.asarray(trace.times)
    if times[-1] < 1 + a - 1e-9:
        raise ValueError("trace must cover [0, 1 + a]")
    step = times[1] - times[0]
    lo = int(math.ceil(epsilon / step - 1e-9))
    hi = int(math.floor(a / step + 1e-9))
    g = max(1, lo // 2)
    idx = np.arange(0, np.searchsorted(times, 1 + 1e-9), g)
    if path.kappa <= 4:
        return TimeSetSample(epsilon, a, times[idx], np.ones(len(idx), bool), "cut",
                             [FULL_CUT_NOTE])
    tol = distance_tolerance(path.dt) if tol is None else tol
    pts = np.asarray(trace.points)
    xy = np.column_stack([pts.real, pts.imag])
    tree = cKDTree(xy)
    # p[j] = earliest index within tol of gamma_j; -1 for contact with the real line
    p = np.array([min(nb) for nb in tree.query_ball_point(xy, tol)], dtype=np.int64)
    p[pts.imag <= tol] = -1
    wmin = _window_min(p, lo, hi)
    member = wmin[idx] > idx
    notes = list(trace.notes)
    return TimeSetSample(epsilon, a, times[idx], member, "cut", notes)


def densify(points, h: float) -> np.ndarray:
    """Insert evenly spaced points so consecutive polyline points are <= h apart."""
    p = np.asarray(points, dtype=complex)
    if len(p) < 2:
        return p.copy()
    seg = np.abs(np.diff(p))
    m = np.maximum(1, np.ceil(seg / h).astype(np.int64))
    idx = np.repeat(np.arange(len(seg)), m)
    frac = (np.arange(m.sum()) - np.repeat(np.cumsum(m) - m, m) + 1) / np.repeat(m, m)
    return np.concatenate([p[:1], p[idx] + (p[idx + 1] - p[idx]) * frac])


def point_set_from_times(trace: TracePolyline, sample: TimeSetSample) -> np.ndarray:
    """Trace points at member times, deduplicated on a grid of mesh epsilon/4."""
    t = np.asarray(sample.grid)[np.asarray(sample.member, bool)]
    if len(t) == 0:
        return np.empty(0, dtype=complex)
    times = np.asarray(trace.times)
    pts = np.asarray(trace.points)
    if t[-1] > times[-1] + 1e-9:
        raise ValueError("sample grid outside the trace time range")
    z = np.interp(t, times, pts.real) + 1j * np.interp(t, times, pts.imag)
    h = sample.epsilon / 4
    keys = np.column_stack([np.floor(z.real / h), np.floor(z.imag / h)]).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return z[np.sort(first)]


def path_time_points(path: DrivingPath, sample: TimeSetSample) -> np.ndarray:
    """Like :func:`point_set_from_times` but evaluates the trace only at member
    grid times (cheaper than a full trace for sparse sets)."""
    from .loewner import trace_points
    t = np.asarray(sample.grid)[np.asarray(sample.member, bool)]
    if len(t) == 0:
        return np.empty(0, dtype=complex)
    z = trace_points(path, np.round(t / path.dt).astype(np.int64))
    h = sample.epsilon / 4
    keys = np.column_stack([np.floor(z.real / h), np.floor(z.imag / h)]).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return z[np.sort(first)]


# --- C_epsilon -------------------------------------------------------------------

WINDOW = (-1.0, 1.0, 1.0, 3.0)


def in_window(z: complex) -> bool:
    x0, x1, y0, y1 = WINDOW
    return x0 <= z.real <= x1 and y0 <= z.imag <= y1


def c_epsilon_membership(z: complex, epsilon: float, trace: TracePolyline) -> bool:
    """True iff the polyline passes within ``epsilon`` of ``z``."""
    return polyline_distance(complex(z), trace.points) <= epsilon


def half_plane_ball_in_disk(z: complex, epsilon: float):
    """Image of ``B(z, epsilon)`` ⊂ H under the Moebius map H -> D sending
    0 -> 1 and z -> 0.  Returns (center, radius, image of infinity)."""
    z = complex(z)
    if not (0 < epsilon < z.imag):
        raise ValueError("need 0 < epsilon < Im z")
    lam = z.conjugate() / z

    def psi(w):
        return lam * (w - z) / (w - z.conjugate())

    c, rad = _circle_through(psi(z + epsilon * np.exp(1j * np.array([0.3, 2.4, 4.4]))))
    return c, rad, lam


def c_epsilon_trial(z: complex, epsilons, dt: float = 4e-3, seed: int = 0,
                    refine: int = 200):
    """Membership of z in C_epsilon for the complete chordal SLE_6 trace.

    Through the nondisconnection equivalence, z is within epsilon of the
    trace iff B(z, epsilon) is not cut off from infinity when first hit.
    Mapped to the disk (z -> 0, 0 -> 1) this is a disconnection trial for an
    off-centre ball with target the image of infinity, run on the radial
    engine.  Returns one outcome per epsilon; the recentring depends on
    epsilon, so outcomes for different epsilons are not coupled pathwise.
    """
    eps = [float(e) for e in np.atleast_1d(epsilons)]
    out = []
    for e in eps:
        c, rad, tgt = half_plane_ball_in_disk(z, e)
        res = _radial_disconnection([rad], c, dt, seed, refine, tgt)[0]
        out.append(TrialOutcome(6.0, e, dt, seed, res.success, res.stopping_time,
                                res.censored))
    return out


def c_epsilon_dual(z: complex, epsilon: float, path: DrivingPath) -> bool:
    """Membership through the flow: the trace meets ``B(z, epsilon)`` before z
    is swallowed (within the path horizon)."""
    hit, _ = ball_hits(path, [z], [z], [epsilon])
    return bool(hit[0] >= 0)


# --- simplicity -----------------------------------------------------------------

def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return np.sign(((b - a).conjugate() * (c - a)).imag)
    return (orient(p1, p2, q1) * orient(p1, p2, q2) < 0) & (orient(q1, q2, p1) * orient(q1, q2, p2) < 0)


def self_crossings(trace: TracePolyline, tol: float) -> int:
    """Number of crossings between non-adjacent segments enclosing a loop of
    diameter above ``tol``."""
    pts = np.asarray(trace.points)
    if len(pts) < 4:
        return 0
    a, b = pts[:-1], pts[1:]
    mid = (a + b) / 2
    half = np.abs(b - a).max()
    tree = cKDTree(np.column_stack([mid.real, mid.imag]))
    pairs = tree.query_pairs(half + 1e-15, output_type="ndarray")
    if len(pairs) == 0:
        return 0
    pairs = pairs[np.abs(pairs[:, 0] - pairs[:, 1]) >= 2]
    i, j = np.minimum(pairs[:, 0], pairs[:, 1]), np.maximum(pairs[:, 0], pairs[:, 1])
    cross = _segments_cross(a[i], b[i], a[j], b[j])
    count = 0
    for ii, jj in zip(i[cross], j[cross]):
        loop = pts[ii:jj + 2]
        if np.max(np.abs(loop - loop[0])) > tol:
            count += 1
    return count
