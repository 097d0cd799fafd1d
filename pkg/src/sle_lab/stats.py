"""Power-law fitting, box-counting dimension and the three-condition harness.

Every exponent claim in the package is reduced to a :class:`ExponentFit`:
a weighted least-squares line through log-probabilities, with the slope's
standard error taken from the binomial variance of each point.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps

LOG_LOG = "log-log"
LOG_LINEAR = "log-linear"


@dataclass(frozen=True)
class ScalePoint:
    scale: float
    trials: int
    successes: int

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if self.trials <= 0:
            raise ValueError("trials must be positive")
        if not 0 <= self.successes <= self.trials:
            raise ValueError("successes must lie in [0, trials]")

    @property
    def p(self) -> float:
        return self.successes / self.trials

    def wilson(self, confidence: float = 0.95) -> tuple[float, float]:
        return wilson_interval(self.successes, self.trials, confidence)


@dataclass(frozen=True)
class MeanPoint:
    """A positive Monte Carlo mean with its standard error (moment estimators)."""

    scale: float
    mean: float
    stderr: float
    trials: int


@dataclass
class ExponentFit:
    slope: float
    intercept: float
    stderr_slope: float
    r_squared: float
    mode: str
    n_scales: int
    scales: list = field(default_factory=list)
    values: list = field(default_factory=list)
    stderr_values: list = field(default_factory=list)

    def within(self, target: float, tol: float) -> bool:
        return abs(self.slope - target) <= tol

    def to_record(self) -> dict:
        return {
            "slope": self.slope,
            "stderr": self.stderr_slope,
            "r2": self.r_squared,
            "mode": self.mode,
            "n_scales": self.n_scales,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, indent=2)


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    ci = sps.binomtest(int(k), int(n)).proportion_ci(confidence, method="wilson")
    return (float(ci.low), float(ci.high))


def _wls(x, y, var):
    """Weighted straight-line fit with known per-point variances."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    w = 1.0 / np.asarray(var, float)
    X = np.column_stack([np.ones_like(x), x])
    A = X.T @ (w[:, None] * X)
    cov = np.linalg.inv(A)
    beta = cov @ (X.T @ (w * y))
    resid = y - X @ beta
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = np.sum(w * (y - ybar) ** 2)
    ss_res = np.sum(w * resid**2)
    r2 = 1.0 if ss_tot == 0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return beta[1], beta[0], math.sqrt(cov[1, 1]), r2


def fit_power_law(points: Sequence[ScalePoint], mode: str = LOG_LOG) -> ExponentFit:
    """Fit ``log p`` against ``log scale`` (or against ``scale`` in log-linear mode).

    Scales with zero successes carry no information on the log scale; they
    are dropped with a warning. Weights come from the delta-method variance
    ``(1 - p) / (n p)`` of ``log p``; exact data (p = 1 or huge n) gets a
    tiny variance floor so the fit stays defined.
    """
    if mode not in (LOG_LOG, LOG_LINEAR):
        raise ValueError(f"unknown mode {mode!r}")
    if len({p.scale for p in points}) < 3:
        raise ValueError("fit_power_law needs at least 3 distinct scales")
    kept = []
    for p in points:
        if p.successes == 0:
            warnings.warn(f"scale {p.scale}: zero successes, excluded from fit",
                          stacklevel=2)
            continue
        kept.append(p)
    if len({p.scale for p in kept}) < 3:
        raise ValueError("fewer than 3 scales with successes remain")
    kept.sort(key=lambda p: p.scale)
    s = np.array([p.scale for p in kept])
    ph = np.array([p.p for p in kept])
    n = np.array([p.trials for p in kept], float)
    y = np.log(ph)
    var = np.maximum((1.0 - ph) / (n * ph), 1e-12)
    x = np.log(s) if mode == LOG_LOG else s
    slope, icpt, se, r2 = _wls(x, y, var)
    return ExponentFit(slope, icpt, se, r2, mode, len(kept),
                       s.tolist(), ph.tolist(), np.sqrt(var).tolist())


def fit_mean_decay(points: Sequence[MeanPoint], mode: str = LOG_LINEAR) -> ExponentFit:
    """Same fit for positive means (e.g. moments) with their own standard errors."""
    if len({p.scale for p in points}) < 3:
        raise ValueError("fit_mean_decay needs at least 3 distinct scales")
    kept = [p for p in points if p.mean > 0]
    if len(kept) < len(points):
        warnings.warn("non-positive means excluded from fit", stacklevel=2)
    if len(kept) < 3:
        raise ValueError("fewer than 3 positive means remain")
    kept.sort(key=lambda p: p.scale)
    s = np.array([p.scale for p in kept])
    m = np.array([p.mean for p in kept])
    var = np.maximum((np.array([p.stderr for p in kept]) / m) ** 2, 1e-12)
    x = np.log(s) if mode == LOG_LOG else s
    slope, icpt, se, r2 = _wls(x, np.log(m), var)
    return ExponentFit(slope, icpt, se, r2, mode, len(kept),
                       s.tolist(), m.tolist(), np.sqrt(var).tolist())


def implied_constants(fit: ExponentFit, exponent: float) -> np.ndarray:
    """``p / scale**exponent`` per fitted scale (``p * exp(exponent * t)`` in log-linear mode)."""
    s = np.asarray(fit.scales)
    v = np.asarray(fit.values)
    if fit.mode == LOG_LOG:
        return v / s**exponent
    return v * np.exp(-exponent * s)


def asymp_check(fit: ExponentFit, exponent: float, tol: float,
                factor: float = 10.0) -> bool:
    """Two-sided bound check: slope within ``tol`` and implied constants within ``factor``."""
    c = implied_constants(fit, exponent)
    return fit.within(exponent, tol) and c.max() / c.min() <= factor


# --- box counting -----------------------------------------------------------

def _as_coords(points) -> np.ndarray:
    a = np.asarray(points)
    if np.iscomplexobj(a):
        return np.column_stack([a.real, a.imag])
    a = a.astype(float)
    if a.ndim == 1:
        return a[:, None]
    return a


def box_counts(points, scales: Sequence[float], offsets: int = 4,
               seed: int = 0) -> np.ndarray:
    """Number of occupied boxes per scale, minimised over grid anchors.

    The first grid is anchored at the lower corner of the bounding box and
    the other ``offsets - 1`` are shifted by uniform random fractions of a
    box.  Taking the minimum approximates the smallest box cover; averaging
    over uniformly shifted grids instead adds a boundary term of relative
    size ~h/diameter that biases slopes at coarse scales.
    """
    X = _as_coords(points)
    X = X - X.min(axis=0)
    rng = np.random.default_rng(seed)
    out = np.empty(len(scales))
    for j, h in enumerate(scales):
        best = math.inf
        for k in range(max(1, offsets)):
            shift = np.zeros(X.shape[1]) if k == 0 else rng.uniform(0.0, h, size=X.shape[1])
            idx = np.floor((X + shift) / h).astype(np.int64)
            best = min(best, len(np.unique(idx, axis=0)))
        out[j] = best
    return out


def box_counting_dimension(points, scales: Sequence[float], offsets: int = 4,
                           seed: int = 0) -> ExponentFit:
    """Minkowski dimension estimate; the returned ``slope`` is the dimension.

    Accepts complex points, an (n, d) array, or a 1-d array of reals.
    """
    X = _as_coords(points)
    if len(X) < 10:
        raise ValueError("box counting needs at least 10 points")
    if np.all(np.ptp(X, axis=0) == 0):
        raise ValueError("degenerate point set (all points identical)")
    scales = np.sort(np.asarray(scales, float))
    if len(scales) < 3 or scales[-1] / scales[0] < 4.0:
        raise ValueError("scales must number >= 3 and span at least 2 octaves")
    counts = box_counts(X, scales, offsets, seed)
    x = np.log(scales)
    y = np.log(counts)
    res = sps.linregress(x, y)
    return ExponentFit(-res.slope, res.intercept, res.stderr, res.rvalue**2,
                       LOG_LOG, len(scales), scales.tolist(), counts.tolist(), [])


def window_box_counts(points, scales: Sequence[float], window) -> np.ndarray:
    """Boxes of the grid anchored at the window corner met by the points in the window.

    ``window = (x0, y0, width, height)``.  With a fixed window the expected
    count is a sum of box-hitting probabilities, which avoids the end and
    extent effects of counting a whole finite sample.
    """
    z = np.asarray(points, dtype=complex)
    x0, y0, w, h = (float(v) for v in window)
    z = z[(z.real >= x0) & (z.real < x0 + w) & (z.imag >= y0) & (z.imag < y0 + h)]
    out = np.empty(len(scales))
    for j, s in enumerate(scales):
        i = np.floor((z.real - x0) / s).astype(np.int64)
        k = np.floor((z.imag - y0) / s).astype(np.int64)
        out[j] = len(np.unique(i * (1 << 32) + k))
    return out


def fit_log_counts(scales: Sequence[float], log_counts: np.ndarray) -> ExponentFit:
    """Dimension fit from log box counts pooled over many samples (rows = samples)."""
    L = np.atleast_2d(np.asarray(log_counts, float))
    mean = L.mean(axis=0)
    if L.shape[0] > 1:
        var = np.maximum(L.var(axis=0, ddof=1) / L.shape[0], 1e-12)
    else:
        var = np.ones_like(mean)
    x = np.log(np.asarray(scales, float))
    slope, icpt, se, r2 = _wls(x, mean, var)
    if L.shape[0] == 1:
        r2 = sps.linregress(x, mean).rvalue ** 2
    return ExponentFit(-slope, icpt, se, r2, LOG_LOG, len(x),
                       list(map(float, scales)), np.exp(mean).tolist(),
                       np.sqrt(var).tolist())


# --- two-point lower-bound harness ------------------------------------------

@dataclass
class PairRow:
    separation: float
    trials: int
    both: int
    p_hat: float
    implied_constant: float


@dataclass
class PairTable:
    epsilon: float
    s: float
    rows: list
    bounded: bool
    spread: float


def two_point_correlation(pair_oracle: Callable[[float, int], tuple[bool, bool]],
                          epsilon: float, separations: Sequence[float], n: int,
                          seed: int, s: float, factor: float = 5.0) -> PairTable:
    """Estimate P({x, y} in C_eps) per separation and the implied constant.

    ``pair_oracle(d, trial_seed)`` samples one configuration with points at
    separation ``d`` (placed inside its own window) and returns both
    memberships. Non-boundedness is flagged when the implied constant
    increases monotonically by more than ``factor`` across separations.
    """
    from ._rng import derive_seed

    rows = []
    for j, d in enumerate(separations):
        if d < 2 * epsilon:
            raise ValueError("separations must be at least 2*epsilon")
        both = 0
        for i in range(n):
            a, b = pair_oracle(d, derive_seed(seed, "pair", j, i))
            both += bool(a and b)
        p = both / n
        rows.append(PairRow(d, n, both, p, p * d**s / epsilon ** (2 * s)))
    c = np.array([r.implied_constant for r in rows])
    pos = c[c > 0]
    spread = float(pos.max() / pos.min()) if len(pos) else math.inf
    monotone_up = bool(np.all(np.diff(c) > 0))
    bounded = not (monotone_up and spread > factor)
    return PairTable(epsilon, s, rows, bounded, spread)


@dataclass
class AreaReport:
    epsilon: float
    ratios: np.ndarray
    threshold: float
    mass_above: float
    empty: bool


def condition_two_check(membership: Callable, area_sampler: Callable,
                        epsilon: float, n: int, seed: int,
                        threshold: float = math.pi / 16) -> AreaReport:
    """Distribution of area(C_eps ∩ B(x, eps)) / eps**2 given x in C_eps.

    ``membership(trial_seed)`` returns a state object when the sampled point
    lies in C_eps and ``None`` otherwise; ``area_sampler(state, rng)`` returns
    the area ratio for that state.
    """
    from ._rng import derive_seed

    rng = np.random.default_rng(seed)
    ratios = []
    for i in range(n):
        state = membership(derive_seed(seed, "cond2", i))
        if state is not None:
            ratios.append(area_sampler(state, rng))
    r = np.asarray(ratios, float)
    if len(r) == 0:
        warnings.warn("condition-2 check: no conditioned samples", stacklevel=2)
        return AreaReport(epsilon, r, threshold, float("nan"), True)
    return AreaReport(epsilon, r, threshold, float(np.mean(r > threshold)), False)


def fit_to_dict(fit: ExponentFit) -> dict:
    return asdict(fit)
