"""Interval diffusions with absorption, coupled flows and eigenfunction checks.

The workhorse is an Euler–Maruyama kernel for ``dX = sigma dB + f(X) dt``
with a drift that blows up at the endpoints.  A step of size ``h`` is split
in two (Brownian-bridge refinement of the same noise) while
``|f(x)| h > ratio * dist(x, boundary)``; past ``max_depth`` splits the
point is declared absorbed.  Because the noise is additive, many start points
can share one Brownian path: their order is preserved, which gives the
stochastic flow ``x -> X_t^x`` of the interval.

Supported drift families:

* ``cot-half``     f(y) = cot(y/2) on (0, 2 pi)
* ``bessel``       f(y) = 2/y on (0, inf), sigma = sqrt(kappa)
* ``wright-fisher`` dZ = (1 - 2Z) ds + sqrt(kappa Z (1-Z)/2) dB on (0, 1);
  simulated through Z = (1 - cos phi)/2, for which
  d phi = sqrt(kappa/2) dB + (2 - kappa/4) cot(phi) ds on (0, pi).
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import integrate

from ._rng import derive_seed, nb_normal, nb_state
from .stats import ScalePoint, wilson_interval

COT_HALF = "cot-half"
BESSEL = "bessel"
WRIGHT_FISHER = "wright-fisher"

# stepping controls (see module docstring)
RATIO = 0.01
MAX_DEPTH = 30

_KIND = {COT_HALF: 0, WRIGHT_FISHER: 0, BESSEL: 1}


@dataclass(frozen=True)
class DiffusionSpec:
    family: str
    sigma: float
    kappa: float = 6.0

    def __post_init__(self):
        if self.family not in _KIND:
            raise ValueError(f"unknown drift family {self.family!r}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError("sigma must be positive and finite")
        if not math.isfinite(self.kappa):
            raise ValueError("kappa must be finite")

    @classmethod
    def cot_half(cls, sigma: float = math.sqrt(6.0)) -> "DiffusionSpec":
        return cls(COT_HALF, float(sigma))

    @classmethod
    def bessel(cls, kappa: float) -> "DiffusionSpec":
        return cls(BESSEL, math.sqrt(kappa), float(kappa))

    @classmethod
    def wright_fisher(cls, kappa: float) -> "DiffusionSpec":
        # sigma is the constant noise of the angular coordinate
        return cls(WRIGHT_FISHER, math.sqrt(kappa / 2.0), float(kappa))

    @property
    def domain(self) -> tuple[float, float]:
        return {COT_HALF: (0.0, 2 * math.pi), BESSEL: (0.0, math.inf),
                WRIGHT_FISHER: (0.0, 1.0)}[self.family]

    @property
    def length(self) -> float:
        lo, hi = self.domain
        return hi - lo

    def _params(self):
        """(kind, A, B) with f = A cot(B y) (kind 0) or A / y (kind 1)."""
        if self.family == COT_HALF:
            return 0, 1.0, 0.5
        if self.family == WRIGHT_FISHER:
            return 0, 2.0 - self.kappa / 4.0, 1.0
        return 1, 2.0, 0.0

    def to_internal(self, x):
        if self.family == WRIGHT_FISHER:
            return np.arccos(1.0 - 2.0 * np.asarray(x, float))
        return np.asarray(x, float)

    def from_internal(self, y):
        if self.family == WRIGHT_FISHER:
            return 0.5 * (1.0 - np.cos(y))
        return y

    def drift(self, y):
        kind, A, B = self._params()
        y = np.asarray(y, float)
        return A / np.tan(B * y) if kind == 0 else A / y

    def drift_slope(self, y):
        kind, A, B = self._params()
        y = np.asarray(y, float)
        return -A * B / np.sin(B * y) ** 2 if kind == 0 else -A / y**2


@dataclass(frozen=True)
class EigenData:
    b: float
    q: float
    lam: float


@dataclass(frozen=True)
class Absorbed:
    tau: float


@dataclass(frozen=True)
class Alive:
    x: float


@dataclass(frozen=True)
class FlowSample:
    length: float
    origin_survives: bool
    horizon: float


@dataclass
class SurvivalCurve:
    times: list
    alive: list
    n: int

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.alive) / self.n

    def intervals(self):
        return [wilson_interval(a, self.n) for a in self.alive]

    def points(self, drop_zero: bool = True) -> list[ScalePoint]:
        return [ScalePoint(t, self.n, int(a)) for t, a in zip(self.times, self.alive)
                if t > 0 and (a > 0 or not drop_zero)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "alive", "n", "ci_lo", "ci_hi"])
        for t, a, (lo, hi) in zip(self.times, self.alive, self.intervals()):
            w.writerow([repr(float(t)), int(a), self.n, f"{lo:.10g}", f"{hi:.10g}"])
        return buf.getvalue()


@dataclass
class MomentEstimate:
    horizon: float
    mean: float
    stderr: float
    n: int


def eigen_data(b: float, sigma: float = math.sqrt(6.0)) -> EigenData:
    """Eigen-pair of (sin(y/2))**q e^{-lam t} for the cot-half family.

    Plugging the candidate into ``h_t = (sigma^2/2) h'' + f h' + b f' h``
    leaves a constant and a ``cot^2`` term; the latter vanishes iff
    ``(s/8) q^2 - (s/8 - 1/2) q - b/2 = 0`` with ``s = sigma^2`` (for s = 6:
    ``3q^2 - q - 2b = 0``), and then ``lam = s q / 8 + b / 2``.
    """
    if b < 0:
        raise ValueError("b must be nonnegative")
    s = sigma * sigma
    a2, a1, a0 = s / 8.0, -(s / 8.0 - 0.5), -b / 2.0
    q = (-a1 + math.sqrt(a1 * a1 - 4 * a2 * a0)) / (2 * a2)
    return EigenData(float(b), q, s * q / 8.0 + b / 2.0)


def generator_residual(family: str, sigma: float, b: float, q: float, lam: float,
                       grid=None, kappa: float = 6.0) -> float:
    """Max relative residual of the candidate eigenfunction over an interior grid.

    ``cot-half``: h = sin(y/2)^q e^{-lam t} on (0, 2 pi);
    ``wright-fisher``: h = [x(1-x)]^q e^{-lam t} on (0, 1) with generator
    ``(kappa x(1-x)/4) d^2 + (1-2x) d`` (``sigma`` is ignored there).
    Derivatives are analytic, so exact eigen-pairs give rounding-level residuals.
    """
    if family == COT_HALF:
        lo, hi = 0.0, 2 * math.pi
        y = np.linspace(0.05, hi - 0.05, 2001) if grid is None else np.asarray(grid, float)
    elif family == WRIGHT_FISHER:
        lo, hi = 0.0, 1.0
        y = np.linspace(0.01, 0.99, 2001) if grid is None else np.asarray(grid, float)
    else:
        raise ValueError(f"no closed-form candidate for family {family!r}")
    if np.any(y <= lo) or np.any(y >= hi):
        raise ValueError("residual grid must stay strictly inside the domain")
    if family == COT_HALF:
        c = 1.0 / np.tan(y / 2)
        csc2 = 1.0 + c * c
        d1 = q * c / 2                      # h'/h
        d2 = q * q * c * c / 4 - q * csc2 / 4  # h''/h
        f, fp = c, -csc2 / 2
        a = sigma * sigma / 2
    else:
        u = y * (1 - y)
        up = 1 - 2 * y
        d1 = q * up / u
        d2 = q * (q - 1) * up * up / (u * u) - 2 * q / u
        f, fp = up, -2.0 * np.ones_like(y)
        a = kappa * u / 4
    res = -lam - a * d2 - f * d1 - b * fp
    return float(np.max(np.abs(res)))


# --- numba kernels ------------------------------------------------------------

@njit(cache=True, inline="always")
def _f(kind, A, B, y):
    if kind == 0:
        return A / math.tan(B * y)
    return A / y


@njit(cache=True, inline="always")
def _fp(kind, A, B, y):
    if kind == 0:
        s = math.sin(B * y)
        return -A * B / (s * s)
    return -A / (y * y)


@njit(cache=True, inline="always")
def _dist(kind, B, y):
    if kind == 0:
        return min(y, math.pi / B - y)
    return y


@njit(cache=True, inline="always")
def _outside(kind, B, y):
    if kind == 0:
        return y <= 0.0 or y >= math.pi / B
    return y <= 0.0


@njit(cache=True, inline="always")
def _tc(s, y):
    # time-change integrand e^{2s} Z(1-Z)/2 with Z = (1 - cos y)/2
    sn = math.sin(y)
    return math.exp(2.0 * s) * sn * sn / 8.0


@njit(cache=True)
def _flow_run(kind, A, B, sigma, x0, n_base, step, ratio, max_depth, state,
              accum, snap_steps):
    """Evolve sorted start points ``x0`` under one shared Brownian path.

    accum: 0 none, 1 integral of f'(X), 2 time-change integral (trapezoid).
    Returns (tau, x, acc, snaps, order_violations); tau = inf if alive at the end.
    """
    n = x0.shape[0]
    x = x0.copy()
    tau = np.full(n, np.inf)
    alive = np.ones(n, dtype=np.bool_)
    acc = np.zeros(n)
    snaps = np.full((snap_steps.shape[0], n), np.nan)
    for m in range(n):
        if _outside(kind, B, x[m]):
            alive[m] = False
            tau[m] = 0.0
    n_alive = 0
    for m in range(n):
        if alive[m]:
            n_alive += 1
    sh = np.empty(max_depth + 2)
    sb = np.empty(max_depth + 2)
    sd = np.empty(max_depth + 2, dtype=np.int64)
    violations = 0
    t = 0.0
    isnap = 0
    sq = math.sqrt(step)
    for k in range(n_base):
        if n_alive == 0:
            break
        top = 1
        sh[0] = step
        sb[0] = sq * nb_normal(state)
        sd[0] = 0
        while top > 0:
            top -= 1
            h = sh[top]
            db = sb[top]
            d = sd[top]
            need = False
            for m in range(n):
                if alive[m] and abs(_f(kind, A, B, x[m])) * h > ratio * _dist(kind, B, x[m]):
                    need = True
                    break
            if need and d < max_depth:
                mid = 0.5 * db + 0.5 * math.sqrt(h) * nb_normal(state)
                sh[top] = 0.5 * h
                sb[top] = db - mid
                sd[top] = d + 1
                sh[top + 1] = 0.5 * h
                sb[top + 1] = mid
                sd[top + 1] = d + 1
                top += 2
                continue
            for m in range(n):
                if not alive[m]:
                    continue
                y = x[m]
                fy = _f(kind, A, B, y)
                if need and abs(fy) * h > ratio * _dist(kind, B, y):
                    alive[m] = False
                    tau[m] = t + h
                    n_alive -= 1
                    continue
                yn = y + fy * h + sigma * db
                if _outside(kind, B, yn):
                    alive[m] = False
                    tau[m] = t + h
                    n_alive -= 1
                    if accum == 2:
                        acc[m] += 0.5 * h * _tc(t, y)
                    continue
                if accum == 1:
                    acc[m] += 0.5 * h * (_fp(kind, A, B, y) + _fp(kind, A, B, yn))
                elif accum == 2:
                    acc[m] += 0.5 * h * (_tc(t, y) + _tc(t + h, yn))
                x[m] = yn
            prev = -np.inf
            for m in range(n):
                if alive[m]:
                    if x[m] < prev:
                        violations += 1
                    prev = x[m]
            t += h
        while isnap < snap_steps.shape[0] and snap_steps[isnap] == k + 1:
            for m in range(n):
                if alive[m]:
                    snaps[isnap, m] = x[m]
            isnap += 1
    return tau, x, acc, snaps, violations


@njit(cache=True)
def _single_batch(kind, A, B, sigma, x0, n_base, step, ratio, max_depth, seeds, accum):
    n = seeds.shape[0]
    taus = np.empty(n)
    xs = np.empty(n)
    accs = np.empty(n)
    start = np.array([x0])
    nosnap = np.empty(0, dtype=np.int64)
    for i in range(n):
        st = nb_state(seeds[i])
        tau, x, acc, _, _ = _flow_run(kind, A, B, sigma, start, n_base, step, ratio,
                                      max_depth, st, accum, nosnap)
        taus[i] = tau[0]
        xs[i] = x[0]
        accs[i] = acc[0]
    return taus, xs, accs


def _seeds(seed, label, n):
    return np.array([derive_seed(seed, label, i) for i in range(n)], dtype=np.uint64)


def _n_base(horizon, step):
    if not (step > 0 and horizon > 0):
        raise ValueError("horizon and step must be positive")
    return int(math.ceil(horizon / step - 1e-9))


def _check_interior(spec, x0):
    lo, hi = spec.domain
    return lo < x0 < hi


# --- public operations ------------------------------------------------------------

def sde_trial(spec: DiffusionSpec, x0: float, horizon: float, step: float, seed: int,
              ratio: float = RATIO, max_depth: int = MAX_DEPTH):
    """One Euler–Maruyama path; ``Absorbed(tau)`` or ``Alive(x_final)``."""
    if not _check_interior(spec, x0):
        return Absorbed(0.0)
    kind, A, B = spec._params()
    y0 = float(spec.to_internal(x0))
    tau, x, _, _, _ = _flow_run(kind, A, B, spec.sigma, np.array([y0]),
                                _n_base(horizon, step), step, ratio, max_depth,
                                nb_state(derive_seed(seed, "sde")), 0,
                                np.empty(0, dtype=np.int64))
    if tau[0] <= horizon:
        return Absorbed(float(tau[0]))
    return Alive(float(spec.from_internal(x[0])))


def absorption_times(spec: DiffusionSpec, x0: float, horizon: float, n: int, seed: int,
                     step: float = 1e-3, ratio: float = RATIO,
                     max_depth: int = MAX_DEPTH) -> np.ndarray:
    """Absorption times of ``n`` independent paths (inf when alive at ``horizon``)."""
    return absorption_times_from_seeds(spec, x0, horizon, _seeds(seed, "sde", n), step,
                                       ratio, max_depth)


def absorption_times_from_seeds(spec: DiffusionSpec, x0: float, horizon: float, seeds,
                                step: float = 1e-3, ratio: float = RATIO,
                                max_depth: int = MAX_DEPTH) -> np.ndarray:
    """As :func:`absorption_times`, one path per given 64-bit seed."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    if not _check_interior(spec, x0):
        return np.zeros(len(seeds))
    kind, A, B = spec._params()
    taus, _, _ = _single_batch(kind, A, B, spec.sigma, float(spec.to_internal(x0)),
                               _n_base(horizon, step), step, ratio, max_depth, seeds, 0)
    return np.where(taus <= horizon, taus, np.inf)


def survival_from_times(taus: np.ndarray, times) -> SurvivalCurve:
    times = [float(t) for t in times]
    alive = [int(np.sum(taus > t)) for t in times]
    return SurvivalCurve(times, alive, len(taus))


def survival_curve(spec: DiffusionSpec, x0: float, times, n: int, seed: int,
                   step: float = 1e-3, ratio: float = RATIO,
                   max_depth: int = MAX_DEPTH) -> SurvivalCurve:
    """Estimates of P(tau_{x0} > t) with Wilson intervals."""
    if n < 100:
        raise ValueError("survival_curve needs n >= 100")
    times = list(times)
    if max(times) == 0:
        return survival_from_times(np.full(n, np.inf), times)
    taus = absorption_times(spec, x0, max(times), n, seed, step, ratio, max_depth)
    return survival_from_times(taus, times)


def _flow_grid(gridsize):
    x = 2 * math.pi * np.arange(1, gridsize + 1) / (gridsize + 1)
    if gridsize % 2 == 0:
        x = np.sort(np.append(x, math.pi))
    return x


def flow_samples(spec: DiffusionSpec, horizons, gridsize: int, n: int, seed: int,
                 step: float = 1e-3, ratio: float = RATIO,
                 max_depth: int = MAX_DEPTH) -> list[list[FlowSample]]:
    """Coupled-flow samples of (l_t, origin survival) at each horizon.

    The start grid is evenly spaced in the open interval and always contains
    the midpoint (the origin of the symmetric interval); ``l_t`` is the
    distance between the images of the extreme surviving grid points.
    """
    seeds = [derive_seed(seed, "flow", i) for i in range(n)]
    return flow_samples_from_seeds(spec, horizons, gridsize, seeds, step, ratio, max_depth)


def flow_samples_from_seeds(spec: DiffusionSpec, horizons, gridsize: int, seeds,
                            step: float = 1e-3, ratio: float = RATIO,
                            max_depth: int = MAX_DEPTH) -> list[list[FlowSample]]:
    """As :func:`flow_samples`, one coupled flow per given seed."""
    if spec.family != COT_HALF:
        raise ValueError("flow moments are implemented for the cot-half family")
    if gridsize < 64:
        raise ValueError("gridsize must be >= 64")
    horizons = sorted(float(h) for h in horizons)
    kind, A, B = spec._params()
    x0 = _flow_grid(gridsize)
    mid = int(np.argmin(np.abs(x0 - math.pi)))
    snap = np.array([_n_base(h, step) for h in horizons], dtype=np.int64)
    out = [[] for _ in horizons]
    for sd in seeds:
        st = nb_state(int(sd))
        tau, _, _, snaps, viol = _flow_run(kind, A, B, spec.sigma, x0, int(snap[-1]),
                                           step, ratio, max_depth, st, 0, snap)
        if viol:
            raise AssertionError("coupled flow lost monotonicity")
        for j, h in enumerate(horizons):
            row = snaps[j]
            ok = np.nonzero(~np.isnan(row))[0]
            length = float(row[ok[-1]] - row[ok[0]]) if len(ok) else 0.0
            out[j].append(FlowSample(length, bool(not np.isnan(row[mid])), h))
    return out


def _moment(values, horizon) -> MomentEstimate:
    v = np.asarray(values, float)
    return MomentEstimate(horizon, float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v))),
                          len(v))


def flow_interval_moment(spec: DiffusionSpec, b: float, horizon, gridsize: int, n: int,
                         seed: int, step: float = 1e-3, **kw):
    """E(l_t^b 1{origin survives}) at one horizon or a list of horizons."""
    if b <= 0:
        raise ValueError("b must be positive")
    hs = horizon if np.iterable(horizon) else [horizon]
    samples = flow_samples(spec, hs, gridsize, n, seed, step, **kw)
    res = [_moment([s.length**b * s.origin_survives for s in row], row[0].horizon)
           for row in samples]
    return res if np.iterable(horizon) else res[0]


def log_derivatives(spec: DiffusionSpec, x0: float, times, n: int, seed: int,
                    step: float = 1e-3, ratio: float = RATIO,
                    max_depth: int = MAX_DEPTH) -> np.ndarray:
    """log g'_t(x0) = int_0^t f'(X_s) ds per path (rows: times); NaN once absorbed."""
    kind, A, B = spec._params()
    times = sorted(times)
    snap = np.array([_n_base(t, step) for t in times], dtype=np.int64)
    y0 = np.array([float(spec.to_internal(x0))])
    W = np.zeros((len(times), n))
    for i in range(n):
        st = nb_state(derive_seed(seed, "deriv", i))
        # integrate f' in pieces so weights at intermediate times are exact prefixes
        W[:, i] = _deriv_run(kind, A, B, spec.sigma, y0, snap, step, ratio,
                             max_depth, st)
    return W


@njit(cache=True)
def _deriv_run(kind, A, B, sigma, y0, snap, step, ratio, max_depth, state):
    # Runs the single-point kernel piecewise between snapshot times on one
    # noise stream; returns the running integral of f' per snapshot.
    out = np.full(snap.shape[0], np.nan)
    x = y0.copy()
    total = 0.0
    prev = 0
    nosnap = np.empty(0, dtype=np.int64)
    for j in range(snap.shape[0]):
        tau, xn, acc, _, _ = _flow_run(kind, A, B, sigma, x, snap[j] - prev, step,
                                       ratio, max_depth, state, 1, nosnap)
        if tau[0] < np.inf:
            break
        total += acc[0]
        out[j] = total
        x = xn
        prev = snap[j]
    return out


def derivative_moment(spec: DiffusionSpec, x0: float, b: float, horizon, n: int,
                      seed: int, step: float = 1e-3, **kw):
    """E((g'_t(x0))^b) with g'_t = exp(int f'(X)) on survival, at one or more horizons."""
    if b <= 0:
        raise ValueError("b must be positive")
    hs = sorted(horizon) if np.iterable(horizon) else [horizon]
    L = log_derivatives(spec, x0, hs, n, seed, step, **kw)
    res = []
    for j, h in enumerate(hs):
        w = np.where(np.isnan(L[j]), 0.0, np.exp(b * np.nan_to_num(L[j])))
        res.append(_moment(w, h))
    return res if np.iterable(horizon) else res[0]


# --- Bessel process ------------------------------------------------------------------

@njit(cache=True)
def _bessel_taus(kappa, y0, ds, depth, t_max, seeds):
    """Hitting times of 0 for dY = sqrt(kappa) dB + (2/Y) dt via U = log Y.

    In the clock ds = dt / Y^2, U is a Brownian motion with drift 2 - kappa/2
    and t = int e^{2U} ds (trapezoid rule); the path is stopped once U has
    dropped ``depth`` below min(log y0, 0), or reported alive (inf) once t
    exceeds ``t_max``.
    """
    n = seeds.shape[0]
    out = np.empty(n)
    mu = (2.0 - 0.5 * kappa) * ds
    sk = math.sqrt(kappa * ds)
    u0 = math.log(y0)
    stop = min(u0, 0.0) - depth
    for i in range(n):
        st = nb_state(seeds[i])
        u = u0
        e = math.exp(2.0 * u)
        t = 0.0
        while True:
            un = u + mu + sk * nb_normal(st)
            en = math.exp(2.0 * un)
            t += 0.5 * (e + en) * ds
            if t > t_max:
                t = np.inf
                break
            if un < stop:
                break
            u = un
            e = en
        out[i] = t
    return out


def bessel_hitting_times(kappa: float, y0: float, n: int, seed: int, t_max: float,
                         ds: float = 2e-3, depth: float = 25.0) -> np.ndarray:
    if y0 <= 0:
        raise ValueError("y0 must be positive")
    if kappa <= 4:
        raise ValueError("the Bessel process only hits 0 for kappa > 4")
    return bessel_hitting_times_from_seeds(kappa, y0, _seeds(seed, "bessel", n), t_max,
                                           ds, depth)


def bessel_hitting_times_from_seeds(kappa: float, y0: float, seeds, t_max: float,
                                    ds: float = 2e-3, depth: float = 25.0) -> np.ndarray:
    """As :func:`bessel_hitting_times`, one path per given seed."""
    if y0 <= 0:
        raise ValueError("y0 must be positive")
    if kappa <= 4:
        raise ValueError("the Bessel process only hits 0 for kappa > 4")
    return _bessel_taus(float(kappa), float(y0), ds, depth, float(t_max),
                        np.asarray(seeds, dtype=np.uint64))


def bessel_survival(kappa: float, y0: float, times, n: int, seed: int,
                    ds: float = 2e-3) -> SurvivalCurve:
    """Survival of dY = sqrt(kappa) dB + (2/Y) dt absorbed at 0."""
    times = list(times)
    taus = bessel_hitting_times(kappa, y0, n, seed, max(times), ds)
    return survival_from_times(taus, times)


def bessel_survival_exact(kappa: float, y0: float, t: float) -> float:
    """Closed-form P(tau > t): with x = y0/sqrt(kappa), x^2/(2 tau) ~ Gamma((kappa-4)/(2 kappa)).

    Evaluated by numerical integration of the Gamma density (an oracle
    independent of the simulation and of special-function shortcuts).
    """
    a = (kappa - 4.0) / (2.0 * kappa)
    u = y0 * y0 / kappa / (2.0 * t)
    dens = lambda s: s ** (a - 1.0) * math.exp(-s)  # noqa: E731
    # split at 1 (integrable singularity at 0); the tail beyond 200 is < e^-190
    val = integrate.quad(dens, 0.0, min(u, 1.0), limit=200)[0]
    if u > 1.0:
        val += integrate.quad(dens, 1.0, min(u, 200.0), limit=200)[0]
    return min(1.0, val / math.gamma(a))


def bessel_exponent(kappa: float) -> float:
    return (kappa - 4.0) / (2.0 * kappa)


# --- cut-time SDE ---------------------------------------------------------------------

@dataclass
class CutSdeResult:
    kappa: float
    s_curve: SurvivalCurve
    t_curve: SurvivalCurve | None
    abs_s: np.ndarray
    abs_t: np.ndarray | None
    regime_note: str = ""


def cut_sde_paths(kappa: float, z0s: np.ndarray, s_max: float, seeds: np.ndarray,
                  step: float = 1e-3, with_time_change: bool = False,
                  snap_s=(), ratio: float = RATIO, max_depth: int = MAX_DEPTH):
    """Run the Z-diffusion from each z0 (own seed); returns (S, T, snapshots of Z)."""
    spec = DiffusionSpec.wright_fisher(kappa)
    kind, A, B = spec._params()
    nb = _n_base(s_max, step)
    snap = np.array([_n_base(s, step) for s in snap_s], dtype=np.int64)
    S = np.empty(len(z0s))
    T = np.empty(len(z0s))
    Zs = np.full((len(snap), len(z0s)), np.nan)
    for i, (z0, sd) in enumerate(zip(z0s, seeds)):
        if not 0.0 < z0 < 1.0:
            S[i] = T[i] = 0.0
            continue
        y0 = np.array([math.acos(1.0 - 2.0 * z0)])
        tau, _, acc, snaps, _ = _flow_run(kind, A, B, spec.sigma, y0, nb, step, ratio,
                                          max_depth, nb_state(sd),
                                          2 if with_time_change else 0, snap)
        S[i] = tau[0] if tau[0] <= s_max else np.inf
        T[i] = acc[0] if S[i] < np.inf else np.inf
        Zs[:, i] = 0.5 * (1.0 - np.cos(snaps[:, 0]))
    return S, T, Zs


def cut_sde_survival(kappa: float, s_values, n: int, seed: int,
                     with_time_change: bool = False, t_values=None, z0: float | None = None,
                     step: float = 1e-3) -> CutSdeResult:
    """Survival of dZ = (1-2Z) ds + sqrt(kappa Z(1-Z)/2) dB absorbed at {0, 1}.

    Z_0 is uniform on (0, 1) unless ``z0`` is given.  With the time change,
    t(s) = int_0^s e^{2u} Z_u (1 - Z_u)/2 du is accumulated and survival is
    also reported in t (``t_values`` default: e^{2s}/8 for the given s).
    """
    note = ""
    if not 4 < kappa < 8:
        note = f"kappa={kappa} outside (4, 8): exponent claims do not apply"
        warnings.warn(note, stacklevel=2)
    s_values = list(s_values)
    seeds = _seeds(seed, "cut-sde", n)
    if z0 is None:
        rng = np.random.default_rng(derive_seed(seed, "cut-sde-z0"))
        z0s = rng.uniform(0.0, 1.0, n)
    else:
        z0s = np.full(n, float(z0))
    S, T, _ = cut_sde_paths(kappa, z0s, max(s_values), seeds, step, with_time_change)
    s_curve = survival_from_times(S, s_values)
    t_curve = None
    if with_time_change:
        if t_values is None:
            t_values = [math.exp(2 * s) / 8 for s in s_values if s > 0]
        t_curve = survival_from_times(T, t_values)
    return CutSdeResult(kappa, s_curve, t_curve, S, T if with_time_change else None, note)


def beta_exponent_from_moment(z: np.ndarray) -> float:
    """Exponent a of a density proportional to [x(1-x)]^a, by matching E(Z - 1/2)^2.

    For that density, E(Z - 1/2)^2 = 1 / (4 (2a + 3)).
    """
    m2 = float(np.mean((np.asarray(z) - 0.5) ** 2))
    return (1.0 / (4.0 * m2) - 3.0) / 2.0


def cut_sde_interior_density_exponent(kappa: float, s_end: float, n: int, seed: int,
                                      step: float = 1e-3) -> tuple[float, int]:
    """Exponent of the law of Z_{s/2} on paths still alive at s (moment fit).

    For long surviving paths the law at an interior time is proportional to
    the product of the ground state [x(1-x)]^{(kappa-4)/kappa} and the
    (uniform) quasi-stationary density.
    """
    seeds = _seeds(seed, "cut-sde-density", n)
    rng = np.random.default_rng(derive_seed(seed, "cut-sde-density-z0"))
    S, _, Z = cut_sde_paths(kappa, rng.uniform(0, 1, n), s_end, seeds, step,
                            snap_s=(s_end / 2,))
    keep = np.isinf(S)
    return beta_exponent_from_moment(Z[0, keep]), int(keep.sum())
