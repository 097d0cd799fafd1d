"""Acceptance criteria 1-12 as runnable checks.

Each criterion function returns a list of :class:`Check` results; tolerances
on Monte Carlo exponents are engineering choices, stated in each check's
detail line.  ``quick=True`` divides trial counts (a wiring smoke test only;
quick results are not expected to meet the tolerances).

Run one criterion with ``sle-lab accept N`` or all with ``sle-lab accept all``.
"""

from __future__ import annotations

import filecmp
import math
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import diffusion as D
from . import percolation as P
from . import sle_events as E
from . import stats as S
from ._rng import derive_seed, trial_seeds
from .loewner import sample_driving, trace

COT = D.DiffusionSpec.cot_half(math.sqrt(6.0))
R2_GATE = 0.95


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:2d} {status}  {self.title}  ({self.seconds:.0f} s)"


def _within(name, value, target, tol, extra=""):
    ok = bool(abs(value - target) <= tol)
    return Check(name, ok, f"{value:.4f} (target {target:.4f} ± {tol:g}){extra}")


def _n(n, quick, div=20, floor=100):
    return max(floor, n // div) if quick else n


# --- 1 -----------------------------------------------------------------------------

def criterion_1(quick=False):
    out = []
    for b, q, lam in ((0.0, 1 / 3, 1 / 4), (1 / 3, 2 / 3, 2 / 3)):
        r = D.generator_residual(D.COT_HALF, math.sqrt(6.0), b, q, lam)
        out.append(Check(f"residual (b,q,lam)=({b:.4g},{q:.4g},{lam:.4g})", r < 1e-8,
                         f"{r:.2e} < 1e-8"))
    r = D.generator_residual(D.COT_HALF, math.sqrt(6.0), 0.0, 1 / 3, 0.3)
    out.append(Check("negative control (0,1/3,0.3)", r > 1e-2, f"{r:.2e} > 1e-2"))
    return out


# --- 2 -----------------------------------------------------------------------------

def criterion_2(quick=False):
    n = _n(100_000, quick)
    c = D.survival_curve(COT, math.pi, [2, 3, 4, 5, 6, 7, 8], n, 2, step=2e-3)
    fit = S.fit_power_law(c.points(), S.LOG_LINEAR)
    return [_within("cot-half survival rate", fit.slope, -0.25, 0.02,
                    f", se {fit.stderr_slope:.4f}, n={n}")]


# --- 3 -----------------------------------------------------------------------------

def criterion_3(quick=False):
    hs = [2.0, 3.0, 4.0, 5.0]
    nf, nd = _n(1500, quick, floor=64), _n(20_000, quick)
    fm = D.flow_interval_moment(COT, 1 / 3, hs, 64, nf, 3, step=2e-3)
    dm = D.derivative_moment(COT, math.pi, 1 / 3, hs, nd, 3, step=2e-3)
    f1 = S.fit_mean_decay([S.MeanPoint(r.horizon, r.mean, r.stderr, r.n) for r in fm])
    f2 = S.fit_mean_decay([S.MeanPoint(r.horizon, r.mean, r.stderr, r.n) for r in dm])
    joint = 1.96 * math.hypot(f1.stderr_slope, f2.stderr_slope)
    gap = abs(f1.slope - f2.slope)
    return [
        _within("flow moment decay E(l^(1/3) 1)", -f1.slope, 2 / 3, 0.05,
                f", se {f1.stderr_slope:.4f}"),
        Check("agreement with derivative moment", gap <= joint,
              f"rates {-f1.slope:.4f} vs {-f2.slope:.4f}, |diff| {gap:.4f} <= {joint:.4f}"),
    ]


# --- 4 -----------------------------------------------------------------------------

def criterion_4(quick=False):
    out = []
    ts = [4.0, 16.0, 64.0, 256.0]
    n = _n(100_000, quick)
    for kappa, target in ((6.0, 1 / 6), (8.0, 1 / 4)):
        c = D.bessel_survival(kappa, 1.0, ts, n, 4)
        fit = S.fit_power_law(c.points())
        out.append(_within(f"Bessel survival exponent, kappa={kappa:g}", -fit.slope, target,
                           0.02, f", se {fit.stderr_slope:.4f}"))
        worst = 0.0
        for t, p in zip(ts, c.p):
            ex = D.bessel_survival_exact(kappa, 1.0, t)
            worst = max(worst, abs(p - ex) / math.sqrt(ex * (1 - ex) / n))
        out.append(Check(f"closed-form hitting law, kappa={kappa:g}", worst <= 3.0,
                         f"max deviation {worst:.2f} standard errors"))
    return out


# --- 5 -----------------------------------------------------------------------------

def criterion_5(quick=False):
    n = _n(20_000, quick)
    r = D.cut_sde_survival(6.0, [1, 2, 3, 4], n, 5, with_time_change=True)
    fs = S.fit_power_law(r.s_curve.points(), S.LOG_LINEAR)
    ft = S.fit_power_law(r.t_curve.points())
    a, kept = D.cut_sde_interior_density_exponent(6.0, 4.0, _n(40_000, quick), 5)
    return [
        _within("survival rate in s", -fs.slope, 1.0, 0.05, f", se {fs.stderr_slope:.4f}"),
        _within("survival exponent in t", -ft.slope, 0.5, 0.07, f", se {ft.stderr_slope:.4f}"),
        _within("conditional density exponent", a, 1 / 3, 0.05, f", {kept} surviving paths"),
    ]


# --- experiments run through the bundle machinery (6, 7) ----------------------------

def _run_config(text, quick, divide=10):
    from .config import validate_config
    from .experiments import run_experiment

    out = tempfile.mkdtemp(prefix="sle-lab-accept-")
    cfg = validate_config(text, {"output": out})
    if quick:
        cfg = cfg.replace(trials=max(50, cfg.trials // divide))
    return run_experiment(cfg)


CONFIG_6 = """# disconnection exponent, kappa = 6 disk trials
kind = disconnection
kappa = 6
dt = 0.004
refine = 400
scales = 0.25, 0.125, 0.0625, 0.03125
trials = 4000
seed = 6
"""

CONFIG_7 = """# escape exponent
kind = escape
kappa = 6
dt = 0.01
scales = 2, 4, 8, 16
trials = 4000
seed = 7
"""


def criterion_6(quick=False):
    b = _run_config(CONFIG_6, quick)
    return [_within("disconnection slope", b.slope, 0.25, 0.06,
                    f", se {b.fit['stderr']:.4f}, bundle {b.directory}")]


def criterion_7(quick=False):
    b = _run_config(CONFIG_7, quick)
    return [_within("escape slope", b.slope, -1 / 3, 0.07,
                    f", se {b.fit['stderr']:.4f}, bundle {b.directory}")]


# --- 8 -----------------------------------------------------------------------------

FIXTURE_24 = dict(epsilon=0.16, delta=0.26, outer=0.75,
                  offset=complex(0.5, math.sqrt(3) / 6) * 0.26)
FIXTURE_20 = dict(epsilon=0.42, delta=0.21, outer=0.7)


def criterion_8(quick=False):
    delta = 1 / 512
    eps = [2.0**-k for k in range(1, 5)]
    n = _n(10_000, quick)
    two, three = [], []
    for j, e in enumerate(eps):
        a, b = P.arm_events(e, delta, trial_seeds(8, "arm", j, n))
        two.append(S.ScalePoint(e, n, int(a.sum())))
        three.append(S.ScalePoint(e, n, int(b.sum())))
    f2, f3 = S.fit_power_law(two), S.fit_power_law(three)
    out = [_within("two-arm slope", f2.slope, 0.25, 0.08,
                   f", p = {', '.join(f'{p.p:.4f}' for p in two)}"),
           _within("three-arm slope", f3.slope, 2 / 3, 0.1,
                   f", p = {', '.join(f'{p.p:.4f}' for p in three)}")]
    m = _n(10**6, quick)
    for name, fx in (("24-site", FIXTURE_24), ("20-site", FIXTURE_20)):
        region = P.annulus_region(**fx)
        exact = P.enumerate_arm_probabilities(region)
        mc = P.region_arm_events(region, trial_seeds(8, "enum-" + name, 0, m))
        for which, label in ((0, "two"), (1, "three")):
            p = float(np.mean(mc[which]))
            se = math.sqrt(exact[which] * (1 - exact[which]) / m)
            z = abs(p - exact[which]) / se if se > 0 else (0.0 if p == exact[which] else math.inf)
            out.append(Check(f"enumeration {name} {label}-arm", z <= 3.0,
                             f"exact {exact[which]:.5f}, MC {p:.5f} ({z:.2f} se, "
                             f"{region.n_sites} sites)"))
    return out


# --- 9 -----------------------------------------------------------------------------

def _dim_check(name, fit, dim, target, tol):
    ok = abs(dim - target) <= tol and fit.r_squared >= R2_GATE
    return Check(name, bool(ok), f"{dim:.4f} (target {target:.4f} ± {tol:g}), "
                 f"r2 {fit.r_squared:.4f} (gate {R2_GATE})")


def trace_occupancy_dimension(n, seed, eps=None, dt=4e-3, refine=200):
    """2 - (exponent of P(dist(z, trace) < eps)) for z uniform in the window, kappa = 6."""
    eps = eps or [2.0**-k for k in range(2, 6)]
    x0, x1, y0, y1 = E.WINDOW
    hits = np.zeros(len(eps), int)
    for i in range(n):
        s = derive_seed(seed, "occupancy", i)
        rng = np.random.default_rng(s)
        z = complex(rng.uniform(x0, x1), rng.uniform(y0, y1))
        hits += [o.success for o in E.c_epsilon_trial(z, eps, dt, s, refine)]
    fit = S.fit_power_law([S.ScalePoint(e, n, int(h)) for e, h in zip(eps, hits)])
    return 2.0 - fit.slope, fit


def trace_box_dimension(kappa, n, seed, dt=2e-5, scales=None, window=(-1.0, 0.25, 2.0, 1.0)):
    scales = scales or [2.0**-k for k in range(2, 7)]
    L = []
    for i in range(n):
        tr = trace(sample_driving(kappa, dt, 1.0, derive_seed(seed, "box", i)))
        c = S.window_box_counts(E.densify(tr.points, min(scales) / 8), scales, window)
        L.append(np.log(np.maximum(c, 1)))
    fit = S.fit_log_counts(scales, np.array(L))
    return fit.slope, fit


def criterion_9(quick=False):
    out = []
    d, fit = trace_occupancy_dimension(_n(1000, quick, 10), 9)
    out.append(_dim_check("kappa=6 trace (expected box occupancy)", fit, d, 1.75, 0.10))
    npaths = 4 if quick else 24
    a = 0.1
    eps = [1e-4 * 2**k for k in range(5)]
    bf, cf, logs = [], [], []
    scales = [2.0**-k for k in range(2, 6)]
    for i in range(npaths):
        p = sample_driving(6.0, 1e-5, 1 + a + 1e-5, derive_seed(9, "timeset", i))
        bf.append([E.boundary_time_set(p, e, a).fraction for e in eps])
        cf.append([E.cut_time_set_flow(p, e, a).fraction for e in eps])
        if i < (4 if quick else 12):
            pts = E.path_time_points(p, E.boundary_time_set(p, eps[0], a))
            logs.append(np.log(S.box_counts(pts, scales)))
    fb = S.fit_log_counts(scales, np.array(logs))
    out.append(_dim_check("kappa=6 boundary points (box count)", fb, fb.slope, 4 / 3, 0.15))
    d83, f83 = trace_box_dimension(8 / 3, 3 if quick else 12, 9)
    out.append(_dim_check("SLE_8/3 trace (box count)", f83, d83, 4 / 3, 0.15))
    for name, fr, target in (("boundary-time set", bf, 5 / 6), ("cut-time set", cf, 0.5)):
        fr = np.array(fr)
        pts = [S.MeanPoint(e, float(m), float(s), npaths) for e, m, s in
               zip(eps, fr.mean(0), fr.std(0, ddof=1) / math.sqrt(npaths))]
        f = S.fit_mean_decay(pts, S.LOG_LOG)
        out.append(_dim_check(f"kappa=6 {name} dimension", f, 1 - f.slope, target, 0.08))
    return out


# --- 10 ----------------------------------------------------------------------------

def criterion_10(quick=False):
    seeds = 20 if quick else 100
    bad = 0
    for s in range(seeds):
        p = sample_driving(2.0, 1e-3, 1.0, derive_seed(10, "simple", s))
        bad += E.self_crossings(trace(p), 10 * math.sqrt(p.dt)) > 0
    out = [Check("kappa=2 trace simple", bad == 0, f"{bad} of {seeds} seeds self-cross "
                 "(tolerance 10 sqrt(dt))")]
    p = sample_driving(2.0, 1e-4, 1.1 + 1e-4, 10)
    fr = [E.boundary_time_set(p, 1e-3, 0.1).fraction, E.cut_time_set_flow(p, 1e-3, 0.1).fraction,
          E.cut_time_set(trace(p, 10), p, 1e-3, 0.1).fraction]
    out.append(Check("kappa=2 boundary and cut times are the full interval",
                     all(f == 1.0 for f in fr), f"member fractions {fr}"))
    n9 = 10 if quick else 30
    fr9 = []
    for s in range(n9):
        p = sample_driving(9.0, 1e-4, 1.5 + 1e-4, derive_seed(10, "k9", s))
        fr9.append(E.cut_time_set(trace(p), p, 1e-3, 0.5).fraction)
    m = float(np.mean(fr9))
    out.append(Check("kappa=9 cut-time fraction", m < 1e-2,
                     f"pooled {m:.5f} < 0.01 over {n9} paths (eps=1e-3, a=0.5), "
                     f"max per path {max(fr9):.4f}"))
    return out


# --- 11 ----------------------------------------------------------------------------

HARNESS_EPS = 0.05
HARNESS_CENTER = 1j


def trace_pair_oracle(d, seed, eps=HARNESS_EPS, dt=1e-3, horizon=4.0):
    """Both points within eps of the trace up to ``horizon`` (hit before swallowed)."""
    p = sample_driving(6.0, dt, horizon, seed)
    z = [HARNESS_CENTER - d / 2, HARNESS_CENTER + d / 2]
    hit, _ = E.ball_hits(p, z, z, [eps, eps])
    return bool(hit[0] >= 0), bool(hit[1] >= 0)


def boundary_pair_oracle(d, seed, eps=1e-3, a=0.1, dt=1e-4):
    p = sample_driving(6.0, dt, 1 + a + dt, seed)
    m = E.boundary_time_members(p, [0.5 - d / 2, 0.5 + d / 2], eps, a)
    return bool(m[0]), bool(m[1])


def condition_two(n, seed, eps=2.0**-6, dt=1e-3, horizon=4.0, samples=200):
    """Conditional area ratios of C_eps ∩ B(x, eps) for x uniform in the window."""
    x0, x1, y0, y1 = E.WINDOW

    def membership(s):
        rng = np.random.default_rng(s)
        x = complex(rng.uniform(x0, x1), rng.uniform(y0, y1))
        tr = trace(sample_driving(6.0, dt, horizon, s))
        if E.polyline_distance(x, tr.points) <= eps:
            return x, tr.points
        return None

    def area(state, rng):
        x, pts = state
        r = eps * np.sqrt(rng.uniform(size=samples))
        w = x + r * np.exp(2j * math.pi * rng.uniform(size=samples))
        near = pts[np.abs(pts - x) <= 2 * eps + 4 * math.sqrt(dt * 6)]
        inside = sum(E.polyline_distance(v, near if len(near) > 1 else pts) <= eps
                     for v in w)
        return math.pi * inside / samples

    return S.condition_two_check(membership, area, eps, n, seed)


def criterion_11(quick=False):
    out = []
    for name, oracle, eps, s, n in (("trace", trace_pair_oracle, HARNESS_EPS, 0.25, 600),
                                    ("boundary times", boundary_pair_oracle, 1e-3, 1 / 6, 2000)):
        n = _n(n, quick, 10)
        seps = [4 * eps, 8 * eps, 16 * eps]
        tab = S.two_point_correlation(oracle, eps, seps, n, 11, s=s)
        c = [r.implied_constant for r in tab.rows]
        out.append(Check(f"condition 3, {name}, s={s:.4g}", bool(tab.spread <= 10.0),
                         f"implied constants {', '.join(f'{v:.3f}' for v in c)}; "
                         f"spread {tab.spread:.2f} <= 10"))
    # about 9-13% of uniform window points are members; 8000 draws give >= 700 samples
    rep = condition_two(_n(8000, quick, 10), 11)
    ok = (not rep.empty) and rep.mass_above >= 0.5 and len(rep.ratios) >= (20 if quick else 500)
    out.append(Check("condition 2, trace, threshold pi/16", bool(ok),
                     f"mass above {rep.mass_above:.3f} >= 0.5 over {len(rep.ratios)} "
                     f"conditioned samples, min ratio "
                     f"{rep.ratios.min() if len(rep.ratios) else float('nan'):.3f}"))
    return out


# --- 12 ----------------------------------------------------------------------------

CONFIG_12 = """kind = escape
scales = 2, 4, 8
trials = 120
chunk = 7
seed = 12
"""

CONFIG_12B = """kind = perco-two-arm
delta = 0.0078125
scales = 0.5, 0.25, 0.125
trials = 60
chunk = 9
seed = 12
"""


def _bundle_files(d):
    files = ["trials.csv", "fit.json"]
    files += [os.path.join("batches", f) for f in sorted(os.listdir(os.path.join(d, "batches")))]
    return files


def criterion_12(quick=False):
    from .config import validate_config
    from .experiments import run_experiment

    out = []
    for text in (CONFIG_12, CONFIG_12B):
        dirs = []
        for w in (1, 8, 1):
            d = tempfile.mkdtemp(prefix="sle-lab-accept-")
            run_experiment(validate_config(text, {"output": d, "workers": w}))
            dirs.append(d)
        files = _bundle_files(dirs[0])
        same_w = all(filecmp.cmp(os.path.join(dirs[0], f), os.path.join(dirs[1], f),
                                 shallow=False) for f in files)
        same_r = all(filecmp.cmp(os.path.join(dirs[0], f), os.path.join(dirs[2], f),
                                 shallow=False) for f in files)
        kind = text.split("\n")[0].split("=")[1].strip()
        out.append(Check(f"{kind}: workers 1 vs 8 byte-identical", same_w,
                         f"{len(files)} CSV/JSON files compared"))
        out.append(Check(f"{kind}: rerun byte-identical", same_r,
                         f"{len(files)} CSV/JSON files compared"))
    return out


CRITERIA = {
    1: ("generator/eigenfunction certificates", criterion_1),
    2: ("radial survival exponent", criterion_2),
    3: ("flow-moment exponent", criterion_3),
    4: ("Bessel survival", criterion_4),
    5: ("cut-time SDE", criterion_5),
    6: ("disconnection exponent", criterion_6),
    7: ("escape exponent", criterion_7),
    8: ("percolation arms", criterion_8),
    9: ("dimensions", criterion_9),
    10: ("qualitative regime checks", criterion_10),
    11: ("two-point harness", criterion_11),
    12: ("infrastructure", criterion_12),
}


def run_criterion(number: int, quick: bool = False) -> CriterionResult:
    title, fn = CRITERIA[number]
    t0 = time.time()
    checks = fn(quick)
    return CriterionResult(number, title, checks, time.time() - t0)
