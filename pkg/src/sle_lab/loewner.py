"""Discretized chordal and radial Loewner flows.

Chordal flows use piecewise-constant driving: on step ``k`` (covering
``[(k-1) dt, k dt]``) the driving is held at ``W_k`` and the flow is the
exact vertical-slit map ``g -> W + sqrt((g - W)**2 + 4 dt)``.  The trace is
obtained by composing the inverse slit maps.

Radial flows ``dg/dt = g (beta + g) / (beta - g)`` use the same
piecewise-constant discipline; each step is again solved exactly.
"""

from __future__ import annotations

import cmath
import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

SPACE_FILLING_NOTE = "space-filling regime; geometric tolerances unreliable"

# Swallowing tolerances (see _forward_step).
SLIT_ETA = 0.2
NEAR_ZERO = 1e-8
REALIFY = 1e-13


@dataclass(frozen=True)
class DrivingPath:
    kappa: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive and finite")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if len(self.values) < 2:
            raise ValueError("a driving path needs at least one step")
        if self.values[0] != 0:
            raise ValueError("driving path must start at 0")

    @property
    def n_steps(self) -> int:
        return len(self.values) - 1

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "w"])
        for t, v in zip(self.times, self.values):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()


@dataclass(frozen=True)
class Alive:
    position: complex


@dataclass(frozen=True)
class Swallowed:
    time: float


@dataclass
class TracePolyline:
    times: np.ndarray
    points: np.ndarray
    notes: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "re", "im"])
        for t, z in zip(self.times, self.points):
            w.writerow([repr(float(t)), repr(float(z.real)), repr(float(z.imag))])
        return buf.getvalue()


@dataclass(frozen=True)
class RadialDrivingPath:
    kappa: float
    dt: float
    angles: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.angles) - 1

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt


def _check_steps(dt, horizon):
    for name, v in (("dt", dt), ("horizon", horizon)):
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be positive and finite, got {v!r}")
    if horizon < dt:
        raise ValueError("horizon must be at least dt")


def _gaussian_walk(kappa, dt, horizon, seed):
    _check_steps(dt, horizon)
    n = int(math.ceil(horizon / dt - 1e-9))
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    inc = rng.standard_normal(n) * math.sqrt(kappa * dt)
    return np.concatenate([[0.0], np.cumsum(inc)])


def sample_driving(kappa: float, dt: float, horizon: float, seed: int) -> DrivingPath:
    """``sqrt(kappa) B`` sampled on a uniform grid of ``ceil(horizon/dt)`` steps.

    A longer horizon with the same seed extends the same path (prefix property).
    """
    if kappa < 0 or not math.isfinite(kappa):
        raise ValueError("kappa must be finite and nonnegative")
    return DrivingPath(float(kappa), float(dt), _gaussian_walk(kappa, dt, horizon, seed))


def sample_radial_driving(kappa: float, dt: float, horizon: float,
                          seed: int) -> RadialDrivingPath:
    if kappa < 0 or not math.isfinite(kappa):
        raise ValueError("kappa must be finite and nonnegative")
    return RadialDrivingPath(float(kappa), float(dt),
                             _gaussian_walk(kappa, dt, horizon, seed))


# --- chordal kernels --------------------------------------------------------

@njit(cache=True, inline="always")
def _upper_sqrt(x, y, a):
    """Root of x + iy with nonnegative imaginary part; real roots take the sign of ``a``."""
    r = math.sqrt(x * x + y * y)
    if x >= 0.0:
        re = math.sqrt(0.5 * (r + x))
        im = abs(y) / (2.0 * re) if re > 0.0 else 0.0
    else:
        im = math.sqrt(0.5 * (r - x))
        re = abs(y) / (2.0 * im)
    if a < 0.0:
        re = -re
    return re, im


@njit(cache=True, inline="always")
def _step_point(gr, gi, side, dr, di, U, s4, sq, eta, want_deriv):
    """One exact slit step for a single point; returns (swallowed, state...)."""
    a = gr - U
    b = gi
    if b == 0.0:
        if a * side <= 0.0:
            return True, gr, gi, side, dr, di
    elif abs(a) < NEAR_ZERO and b < NEAR_ZERO:
        return True, gr, gi, side, dr, di
    x = a * a - b * b + s4
    y = 2.0 * a * b
    re, im = _upper_sqrt(x, y, a)
    if b > 0.0:
        if im <= eta * sq and abs(re) <= (2.0 + eta) * sq:
            return True, gr, gi, side, dr, di
        if im <= REALIFY * (abs(re) + sq):
            im = 0.0
            side = 1.0 if re > 0 else -1.0
    else:
        side = 1.0 if re > 0 else -1.0
    if want_deriv:
        # g' <- g' * Z / root
        den = re * re + im * im
        qr = (a * re + b * im) / den
        qi = (b * re - a * im) / den
        t = dr * qr - di * qi
        di = dr * qi + di * qr
        dr = t
    return False, U + re, im, side, dr, di


@njit(cache=True)
def _flow_points(zr, zi, W, dt, k_end, eta, want_deriv):
    """Forward-flow many points through steps 1..k_end.

    Returns final positions, swallow step (-1 if alive) and |g'| products.
    A point is swallowed on the step where it lies on the slit (up to a
    relative tolerance ``eta``), where its image comes within NEAR_ZERO of the
    driving, or, once it has become a real point, when the driving jumps to
    its other side.
    """
    n = zr.shape[0]
    gr = zr.copy()
    gi = zi.copy()
    dr = np.ones(n)
    di = np.zeros(n)
    side = np.zeros(n)
    sw = -np.ones(n, dtype=np.int64)
    s4 = 4.0 * dt
    sq = math.sqrt(dt)
    for m in range(n):
        if gi[m] <= 0.0:
            gi[m] = 0.0
            a = gr[m] - W[0]
            if a == 0.0:
                sw[m] = 0
            side[m] = 1.0 if a > 0 else -1.0
    for k in range(1, k_end + 1):
        U = W[k]
        for m in range(n):
            if sw[m] >= 0:
                continue
            dead, gr[m], gi[m], side[m], dr[m], di[m] = _step_point(
                gr[m], gi[m], side[m], dr[m], di[m], U, s4, sq, eta, want_deriv)
            if dead:
                sw[m] = k
    return gr, gi, sw, dr, di


@njit(cache=True, inline="always")
def _inverse_step(wr, wi, U, s4):
    a = wr - U
    b = wi
    x = a * a - b * b - s4
    y = 2.0 * a * b
    re, im = _upper_sqrt(x, y, a)
    return U + re, im


@njit(cache=True, fastmath=True)
def _trace_at(W, dt, idx):
    """gamma(t_k) for sorted step indices ``idx`` by composing inverse slit maps."""
    n = idx.shape[0]
    wr = np.empty(n)
    wi = np.zeros(n)
    for m in range(n):
        wr[m] = W[idx[m]]
    s4 = 4.0 * dt
    if n == 0:
        return wr, wi
    start = n
    kmax = idx[n - 1]
    for j in range(kmax, 0, -1):
        while start > 0 and idx[start - 1] >= j:
            start -= 1
        U = W[j]
        for m in range(start, n):
            wr[m], wi[m] = _inverse_step(wr[m], wi[m], U, s4)
    return wr, wi


@njit(cache=True, fastmath=True)
def _trace_point(W, dt, k):
    s4 = 4.0 * dt
    wr = W[k]
    wi = 0.0
    for j in range(k, 0, -1):
        wr, wi = _inverse_step(wr, wi, W[j], s4)
    return wr, wi


def trace_points(path: DrivingPath, indices) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    order = np.argsort(idx, kind="stable")
    wr, wi = _trace_at(path.values, path.dt, idx[order])
    out = np.empty(len(idx), dtype=complex)
    out[order] = wr + 1j * wi
    return out


def trace(path: DrivingPath, stride: int = 1) -> TracePolyline:
    """Sampled trace ``gamma(t_k)`` for ``k = 0, stride, 2*stride, ..., N``.

    Cost is quadratic in the number of steps; ``stride`` thins the output
    (the last step is always included).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    idx = np.arange(0, path.n_steps + 1, stride, dtype=np.int64)
    if idx[-1] != path.n_steps:
        idx = np.append(idx, path.n_steps)
    pts = trace_points(path, idx)
    pts[0] = 0.0
    notes = [SPACE_FILLING_NOTE] if path.kappa >= 8 else []
    return TracePolyline(idx * path.dt, pts, notes)


def _step_index(path, t):
    if t < 0 or t > path.horizon + 1e-12:
        raise ValueError("time outside the driving path")
    return int(round(t / path.dt)) if abs(t / path.dt - round(t / path.dt)) < 1e-9 \
        else int(math.floor(t / path.dt))


def forward_flow(z: complex, path: DrivingPath, t: float):
    """Image ``g_t(z)`` (as :class:`Alive`) or the swallowing time."""
    z = complex(z)
    if z.imag < 0:
        raise ValueError("z must lie in the closed upper half-plane")
    k = _step_index(path, t)
    gr, gi, sw, _, _ = _flow_points(np.array([z.real]), np.array([z.imag]),
                                    path.values, path.dt, k, SLIT_ETA, False)
    if sw[0] >= 0:
        return Swallowed(sw[0] * path.dt)
    return Alive(complex(gr[0], gi[0]))


def forward_flow_many(zs, path: DrivingPath, t: float | None = None, deriv=False):
    """Vectorized flow: returns (positions, swallow_times, derivatives)."""
    zs = np.asarray(zs, dtype=complex)
    if np.any(zs.imag < 0):
        raise ValueError("points must lie in the closed upper half-plane")
    k = path.n_steps if t is None else _step_index(path, t)
    gr, gi, sw, dr, di = _flow_points(zs.real.copy(), zs.imag.copy(), path.values,
                                      path.dt, k, SLIT_ETA, deriv)
    times = np.where(sw >= 0, sw * path.dt, np.inf)
    return gr + 1j * gi, times, dr + 1j * di


def swallow_time(z: complex, path: DrivingPath) -> float:
    z = complex(z)
    if z.imag < 0:
        raise ValueError("z must lie in the closed upper half-plane")
    _, times, _ = forward_flow_many([z], path)
    return float(times[0])


# --- radial kernels ---------------------------------------------------------
#
# With the driving held at beta = e^{i theta} for a time h, the relative
# coordinate w = g / beta obeys dw/dt = w (1 + w) / (1 - w), and
# K(w) = w / (1 + w)^2 satisfies K(w_t) = e^t K(w_0): each step is exact.
# K maps the disk onto C minus [1/4, inf); the slit image is that ray.

RADIAL_DTHETA = 0.05


@njit(cache=True, inline="always")
def _kinv_inside(c):
    """Root of c w^2 + (2c - 1) w + c = 0 in the closed unit disk."""
    if c == 0:
        return 0j
    s = cmath.sqrt(1.0 - 4.0 * c)
    d1 = 1.0 - 2.0 * c + s
    d2 = 1.0 - 2.0 * c - s
    w1 = 2.0 * c / d1 if d1 != 0 else complex(np.inf, 0.0)
    w2 = 2.0 * c / d2 if d2 != 0 else complex(np.inf, 0.0)
    return w1 if abs(w1) <= abs(w2) else w2


@njit(cache=True, inline="always")
def _radial_step(w, h):
    return _kinv_inside(math.exp(h) * w / ((1.0 + w) * (1.0 + w)))


@njit(cache=True, inline="always")
def _radial_inverse_step(w, h):
    return _kinv_inside(math.exp(-h) * w / ((1.0 + w) * (1.0 + w)))


def _radial_pieces(path, k_end):
    """Split steps whose driving jump exceeds RADIAL_DTHETA into equal pieces.

    Returns piece angles, piece durations and, per step k, the index one past
    its last piece.
    """
    th = path.angles[: k_end + 1]
    d = np.diff(th)
    m = np.maximum(1, np.ceil(np.abs(d) / RADIAL_DTHETA - 1e-12)).astype(np.int64)
    ends = np.concatenate([[0], np.cumsum(m)])
    k = np.repeat(np.arange(len(d)), m)
    j = np.arange(len(k)) - ends[k] + 1
    angles = th[k] + d[k] * j / m[k]
    return np.concatenate([[0.0], angles]), np.concatenate([[0.0], path.dt / m[k]]), ends


@njit(cache=True)
def _radial_boundary_run(y, th, hs, p_start, p_end):
    """Boundary point at angle y from the driving; jumps, then exact drift.

    Returns (Y, swallow_piece) with swallow_piece = -1 if it survives.
    """
    for p in range(p_start, p_end + 1):
        y -= th[p] - th[p - 1]
        if y <= 0.0 or y >= 2.0 * math.pi:
            return y, p
        y = 2.0 * math.acos(math.exp(-0.5 * hs[p]) * math.cos(0.5 * y))
    return y, -1


@njit(cache=True)
def _radial_interior_run(z, th, hs, p_end, eta):
    """Interior point; returns (g, swallow_piece, boundary_piece, Y)."""
    g = z
    for p in range(1, p_end + 1):
        beta = complex(math.cos(th[p]), math.sin(th[p]))
        w = g / beta
        if abs(w - 1.0) < NEAR_ZERO:
            return g, p, -1, 0.0
        h = hs[p]
        wn = _radial_step(w, h)
        r = abs(wn)
        sq = math.sqrt(h)
        arc = 2.0 * math.acos(math.exp(-0.5 * h))
        ang = math.atan2(wn.imag, wn.real)
        if 1.0 - r <= eta * sq and abs(ang) <= arc + eta * sq:
            return g, p, -1, 0.0
        if 1.0 - r <= REALIFY:
            y = ang if ang > 0 else ang + 2.0 * math.pi
            return beta * wn, -1, p, y
        g = beta * wn
    return g, -1, -1, 0.0


def radial_forward_flow(z: complex, path: RadialDrivingPath, t: float):
    """Radial flow of a point of the closed unit disk (growth toward 0)."""
    z = complex(z)
    if abs(z) > 1 + 1e-12:
        raise ValueError("z must lie in the closed unit disk")
    k_end = int(round(t / path.dt))
    if k_end > path.n_steps or t < 0:
        raise ValueError("t outside the driving horizon")
    th, hs, ends = _radial_pieces(path, k_end)
    step_of = np.searchsorted(ends, np.arange(len(th)), side="left")
    p_end = int(ends[-1])
    if abs(z) >= 1 - 1e-12:
        y0 = (math.atan2(z.imag, z.real) - th[0]) % (2 * math.pi)
        if y0 == 0.0:
            return Swallowed(0.0)
        y, p = _radial_boundary_run(y0, th, hs, 1, p_end)
    else:
        g, p, pb, y = _radial_interior_run(z, th, hs, p_end, SLIT_ETA)
        if p < 0 and pb < 0:
            return Alive(complex(g))
        if pb >= 0:
            y, p = _radial_boundary_run(y, th, hs, pb + 1, p_end)
    if p >= 0:
        return Swallowed(float(step_of[p] * path.dt))
    return Alive(complex(np.exp(1j * (y + th[p_end]))))


def radial_boundary_survival(path: RadialDrivingPath, y0: float = math.pi) -> float:
    """Swallowing time of the boundary point at angle ``y0`` from the driving (inf if none)."""
    th, hs, ends = _radial_pieces(path, path.n_steps)
    _, p = _radial_boundary_run(y0, th, hs, 1, int(ends[-1]))
    if p < 0:
        return math.inf
    return float(np.searchsorted(ends, p, side="left") * path.dt)


@njit(cache=True)
def _radial_trace_points(th, hs, ends, ks):
    out = np.empty(ks.shape[0], dtype=np.complex128)
    for i in range(ks.shape[0]):
        p = ends[ks[i]]
        if p == 0:
            out[i] = complex(math.cos(th[0]), math.sin(th[0]))
            continue
        # tip of the last slit, then pull back through all earlier pieces
        beta = complex(math.cos(th[p]), math.sin(th[p]))
        g = beta * _radial_inverse_step(1.0 + 0j, hs[p])
        for q in range(p - 1, 0, -1):
            beta = complex(math.cos(th[q]), math.sin(th[q]))
            g = beta * _radial_inverse_step(g / beta, hs[q])
        out[i] = g
    return out


def radial_trace(path: RadialDrivingPath, t: float, stride: int = 1) -> np.ndarray:
    """Radial trace points gamma(t_k), k = stride, 2*stride, ... up to t."""
    k_end = int(round(t / path.dt))
    th, hs, ends = _radial_pieces(path, k_end)
    ks = np.arange(stride, k_end + 1, stride, dtype=np.int64)
    return _radial_trace_points(th, hs, ends, ks)


def radial_hull_distance(path: RadialDrivingPath, t: float, stride: int = 1) -> float:
    """Estimate of ``d(0, K_t)`` from the sampled radial trace."""
    pts = radial_trace(path, t, stride)
    return float(np.min(np.abs(pts))) if len(pts) else 1.0
