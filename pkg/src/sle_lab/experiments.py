"""Seeded, resumable experiment runs and report bundles.

A run expands a validated :class:`ExperimentConfig` into fixed-size work
units of trials.  Every trial seed is ``derive_seed(master, kind, batch,
trial)``, so results do not depend on how units are scheduled.  Units are
executed inline or by a process pool, and results are folded in trial order.

Most kinds are *coupled*: one trial (one SLE path, one diffusion path, one
exploration) yields an outcome at every scale, and all trials form batch 0.
The annulus-arm kinds and the two-point harness run independent trials per
scale, one batch per scale index.

Bundle layout (``config.output``)::

    batches/batch_000.csv   per-batch trial rows (resume granularity)
    trials.csv              all rows in batch/trial/scale order
    fit.json                exponent fit and derived quantities
    plot.svg                estimates with error bars and the fitted line
    manifest.json           config echo, code version, wall time, warnings
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import diffusion as D
from . import percolation as P
from . import sle_events as E
from . import stats as S
from ._rng import derive_seed
from .config import ExperimentConfig
from .loewner import sample_driving, trace
from .svg import plot_fit

CSV_HEADER = ["master_seed", "scale_index", "scale", "trial", "seed", "value", "aux", "failed"]
FAILURE_LIMIT = 0.01

INDEPENDENT_KINDS = ("perco-two-arm", "perco-three-arm", "prop1-harness")
# window for trace box counts, away from the real line
TRACE_WINDOW = (-1.0, 0.25, 2.0, 1.0)
HARNESS_CENTER = 1j


class BatchFailure(RuntimeError):
    """A batch had more than 1% failed trials; the fit was not attempted."""


@dataclass
class ReportBundle:
    directory: str
    fit: dict
    manifest: dict
    rows: list

    @property
    def slope(self) -> float:
        return self.fit["slope"]


# --- per-kind trial evaluation ---------------------------------------------------

def trace_method(cfg: ExperimentConfig) -> str:
    if cfg.method != "auto":
        return cfg.method
    return "occupancy" if cfg.kappa == 6.0 else "box"


def harness_exponent(cfg: ExperimentConfig) -> float:
    """Expected one-point exponent s for the harness target."""
    if cfg.target == "trace":
        return 1.0 - cfg.kappa / 8.0
    return D.bessel_exponent(cfg.kappa)


def _uniform(seed, label, lo, hi):
    return np.random.default_rng(derive_seed(seed, label)).uniform(lo, hi)


def _trial(cfg: ExperimentConfig, j: int, seed: int):
    """Values for one trial: a list over scales (coupled) or one (value, aux)."""
    k, sc = cfg.kind, cfg.scales
    if k == "escape":
        return [o.success for o in E.escape_multi(sc, cfg.dt, seed, cfg.kappa)]
    if k == "disconnection":
        return [o.success for o in E.disk_disconnection_multi(sc, 0j, cfg.dt, seed,
                                                              refine=cfg.refine)]
    if k in ("boundary-times", "cut-times"):
        p = sample_driving(cfg.kappa, cfg.dt, cfg.horizon + cfg.dt, seed)
        f = E.boundary_time_set if k == "boundary-times" else E.cut_time_set_flow
        return [f(p, e, cfg.a).fraction for e in sc]
    if k == "trace-dimension":
        if trace_method(cfg) == "occupancy":
            x0, x1, y0, y1 = E.WINDOW
            z = complex(_uniform(seed, "z-re", x0, x1), _uniform(seed, "z-im", y0, y1))
            return [o.success for o in E.c_epsilon_trial(z, sc, cfg.dt, seed, cfg.refine)]
        tr = trace(sample_driving(cfg.kappa, cfg.dt, cfg.horizon, seed))
        pts = E.densify(tr.points, min(sc) / 8)
        counts = S.window_box_counts(pts, sc, TRACE_WINDOW)
        if np.any(counts == 0):
            raise ValueError("trace missed the counting window")
        return np.log(counts).tolist()
    if k == "boundary-dimension":
        p = sample_driving(cfg.kappa, cfg.dt, 1 + cfg.a + cfg.dt, seed)
        pts = E.path_time_points(p, E.boundary_time_set(p, cfg.epsilon, cfg.a))
        if len(pts) < 10:
            raise ValueError("too few boundary points for box counting")
        return np.log(S.box_counts(pts, sc)).tolist()
    if k == "perco-disk-hit":
        return P.disk_hit_trial(sc, cfg.delta, seed, max_radius=cfg.max_radius).tolist()
    if k in ("perco-two-arm", "perco-three-arm"):
        two, three = P.arm_events(sc[j], cfg.delta, [seed], k == "perco-three-arm")
        v = two if k == "perco-two-arm" else three
        return float(v[0]), math.nan
    if k == "prop1-harness":
        a, b = _harness_pair(cfg, sc[j], seed)
        return float(a and b), float(a)
    return _batch(cfg, j, [seed])[0]


def _harness_pair(cfg, d, seed):
    if cfg.target == "trace":
        p = sample_driving(cfg.kappa, cfg.dt, cfg.horizon, seed)
        z = [HARNESS_CENTER - d / 2, HARNESS_CENTER + d / 2]
        hit, _ = E.ball_hits(p, z, z, [cfg.epsilon] * 2)
        return bool(hit[0] >= 0), bool(hit[1] >= 0)
    if d >= 1:
        raise ValueError("time separations must be < 1")
    p = sample_driving(cfg.kappa, cfg.dt, 1 + cfg.a + cfg.dt, seed)
    m = E.boundary_time_members(p, [0.5 - d / 2, 0.5 + d / 2], cfg.epsilon, cfg.a)
    return bool(m[0]), bool(m[1])


VECTOR_KINDS = ("radial-survival", "flow-moment", "bessel", "cut-sde",
                "perco-two-arm", "perco-three-arm")


def _batch(cfg: ExperimentConfig, j: int, seeds) -> list:
    """Vectorised evaluation of several trials (kinds in ``VECTOR_KINDS``)."""
    k, sc = cfg.kind, np.asarray(cfg.scales)
    seeds = np.asarray(seeds, dtype=np.uint64)
    if k == "radial-survival":
        spec = D.DiffusionSpec.cot_half(math.sqrt(cfg.kappa))
        taus = D.absorption_times_from_seeds(spec, cfg.y0, sc.max(), seeds, cfg.step)
        return (taus[:, None] > sc[None, :]).astype(float).tolist()
    if k == "bessel":
        taus = D.bessel_hitting_times_from_seeds(cfg.kappa, cfg.y0, seeds, sc.max(), cfg.step)
        return (taus[:, None] > sc[None, :]).astype(float).tolist()
    if k == "flow-moment":
        spec = D.DiffusionSpec.cot_half(math.sqrt(cfg.kappa))
        out = D.flow_samples_from_seeds(spec, sc, cfg.gridsize, seeds, cfg.step)
        order = np.argsort(sc, kind="stable")
        vals = np.empty((len(seeds), len(sc)))
        for r, col in enumerate(order):
            vals[:, col] = [s.length**cfg.b * s.origin_survives for s in out[r]]
        return vals.tolist()
    if k == "cut-sde":
        z0 = np.array([_uniform(int(s), "z0", 0.0, 1.0) for s in seeds])
        if cfg.clock == "s":
            s_max = sc.max()
        else:
            s_max = 0.5 * math.log(8 * sc.max()) + 2.0
        Sv, Tv, _ = D.cut_sde_paths(cfg.kappa, z0, s_max, seeds, cfg.step,
                                    with_time_change=cfg.clock == "t")
        clock = Sv if cfg.clock == "s" else Tv
        return (clock[:, None] > sc[None, :]).astype(float).tolist()
    if k in ("perco-two-arm", "perco-three-arm"):
        two, three = P.arm_events(sc[j], cfg.delta, seeds, k == "perco-three-arm")
        v = two if k == "perco-two-arm" else three
        return [(float(x), math.nan) for x in v]
    return [_trial(cfg, j, int(s)) for s in seeds]


def _run_unit(args):
    """Evaluate trials ``lo..hi-1`` of batch ``j``; returns CSV-ready rows."""
    cfg, j, lo, hi = args
    seeds = [derive_seed(cfg.seed, cfg.kind, j, i) for i in range(lo, hi)]
    coupled = cfg.kind not in INDEPENDENT_KINDS
    try:
        results = [(r, False) for r in _batch(cfg, j, seeds)] if cfg.kind in VECTOR_KINDS \
            else None
    except Exception:  # isolate the failing trials below
        results = None
    if results is None:
        results = []
        for s in seeds:
            try:
                results.append((_trial(cfg, j, s), False))
            except Exception:
                results.append((None, True))
    rows = []
    for i, s, (r, failed) in zip(range(lo, hi), seeds, results):
        if coupled:
            vals = [math.nan] * len(cfg.scales) if failed else list(r)
            for m, (scale, v) in enumerate(zip(cfg.scales, vals)):
                rows.append((m, scale, i, s, float(v), math.nan, failed))
        else:
            v, aux = (math.nan, math.nan) if failed else r
            rows.append((j, cfg.scales[j], i, s, float(v), float(aux), failed))
    return rows


# --- persistence -------------------------------------------------------------------

def _rows_to_csv(master: int, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for m, scale, i, s, v, aux, failed in rows:
        w.writerow([master, m, repr(float(scale)), i, s, repr(float(v)), repr(float(aux)),
                    int(failed)])
    return buf.getvalue()


def read_rows(path: str) -> list:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        return [(int(d["scale_index"]), float(d["scale"]), int(d["trial"]), int(d["seed"]),
                 float(d["value"]), float(d["aux"]), bool(int(d["failed"]))) for d in r]


def _write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def batch_plan(cfg: ExperimentConfig) -> list:
    """(batch index, number of trials) pairs."""
    if cfg.kind in INDEPENDENT_KINDS:
        return [(j, cfg.trials) for j in range(len(cfg.scales))]
    return [(0, cfg.trials)]


def worker_count(cfg: ExperimentConfig) -> int:
    env = os.environ.get("SLE_LAB_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"SLE_LAB_WORKERS must be an integer, got {env!r}") from None
        if n < 1:
            raise ValueError("SLE_LAB_WORKERS must be >= 1")
        return n
    return cfg.workers


def run_experiment(cfg: ExperimentConfig, progress=None) -> ReportBundle:
    """Run (or resume) all batches, then fit and write the bundle.

    Raises :class:`BatchFailure` if any batch has more than 1% failed trials;
    trial rows and the manifest are still written in that case.
    """
    t0 = time.time()
    out = cfg.output
    bdir = os.path.join(out, "batches")
    os.makedirs(bdir, exist_ok=True)
    mpath = os.path.join(out, "manifest.json")
    fp = cfg.fingerprint()
    done = {}
    notes = []
    if os.path.exists(mpath):
        with open(mpath) as fh:
            old = json.load(fh)
        if old.get("fingerprint") == fp and old.get("code_version") == __version__:
            for key, info in old.get("batches", {}).items():
                f = os.path.join(bdir, f"batch_{int(key):03d}.csv")
                if info.get("complete") and os.path.exists(f):
                    done[int(key)] = info
        else:
            notes.append("existing bundle had a different configuration; started afresh")
            shutil.rmtree(bdir)
            os.makedirs(bdir)
    workers = worker_count(cfg)
    manifest = {
        "config": cfg.to_dict(), "fingerprint": fp, "code_version": __version__,
        "master_seed": cfg.seed, "workers": workers, "warnings": list(cfg.warnings) + notes,
        "batches": {str(k): v for k, v in done.items()}, "resumed": sorted(done),
        "status": "running",
    }
    plan = batch_plan(cfg)
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    failed_batches = []
    try:
        for j, n in plan:
            if j in done:
                if done[j]["failed"] > FAILURE_LIMIT * n:
                    failed_batches.append(j)
                continue
            units = [(cfg, j, lo, min(lo + cfg.chunk, n)) for lo in range(0, n, cfg.chunk)]
            mapper = pool.map if pool is not None else map
            rows = []
            for part in mapper(_run_unit, units):
                rows.extend(part)
                if progress:
                    progress(j, len(rows))
            _write(os.path.join(bdir, f"batch_{j:03d}.csv"), _rows_to_csv(cfg.seed, rows))
            nfail = len({r[2] for r in rows if r[6]})
            manifest["batches"][str(j)] = {"trials": n, "failed": nfail, "complete": True}
            if nfail > FAILURE_LIMIT * n:
                failed_batches.append(j)
            _write(mpath, _json(manifest))
    finally:
        if pool is not None:
            pool.shutdown()
    rows = []
    for j, _ in plan:
        rows.extend(read_rows(os.path.join(bdir, f"batch_{j:03d}.csv")))
    _write(os.path.join(out, "trials.csv"), _rows_to_csv(cfg.seed, rows))
    manifest["wall_time"] = time.time() - t0
    if failed_batches:
        manifest["status"] = "aborted"
        manifest["failed_batches"] = failed_batches
        _write(mpath, _json(manifest))
        raise BatchFailure(f"batches {failed_batches} exceed {FAILURE_LIMIT:.0%} failed trials")
    fit = write_report(cfg, rows, out)
    manifest["status"] = "complete"
    _write(mpath, _json(manifest))
    return ReportBundle(out, fit, manifest, rows)


# --- fitting and reporting -----------------------------------------------------------

BINOMIAL_KINDS = ("escape", "disconnection", "radial-survival", "bessel", "cut-sde",
                  "perco-two-arm", "perco-three-arm", "perco-disk-hit", "prop1-harness")
LOG_LINEAR_KINDS = ("radial-survival", "flow-moment")


def _fit_mode(cfg):
    if cfg.kind in LOG_LINEAR_KINDS or (cfg.kind == "cut-sde" and cfg.clock == "s"):
        return S.LOG_LINEAR
    return S.LOG_LOG


def fit_rows(cfg: ExperimentConfig, rows):
    """Fit the exponent from trial rows; returns (ExponentFit, derived dict, plot data)."""
    ok = [r for r in rows if not r[6]]
    m = len(cfg.scales)
    by = [[r for r in ok if r[0] == j] for j in range(m)]
    mode = _fit_mode(cfg)
    derived = {}
    binomial = cfg.kind in BINOMIAL_KINDS or (cfg.kind == "trace-dimension"
                                              and trace_method(cfg) == "occupancy")
    if binomial:
        pts = [S.ScalePoint(cfg.scales[j], len(b), int(sum(r[4] for r in b)))
               for j, b in enumerate(by) if b]
        fit = S.fit_power_law(pts, mode)
        est = [p.p for p in pts]
        ci = [p.wilson() for p in pts]
        lo, hi = [c[0] for c in ci], [c[1] for c in ci]
        xs = [p.scale for p in pts]
        if cfg.kind == "trace-dimension":
            derived["dimension"] = 2.0 - fit.slope
        if cfg.kind == "prop1-harness":
            s = harness_exponent(cfg)
            consts = [p.p * p.scale**s / cfg.epsilon ** (2 * s) for p in pts]
            pos = [c for c in consts if c > 0]
            derived.update(s=s, implied_constants=consts,
                           spread=max(pos) / min(pos) if pos else math.inf)
        line = _line(fit, mode)
    elif cfg.kind in ("flow-moment", "boundary-times", "cut-times"):
        pts = []
        for j, b in enumerate(by):
            v = np.array([r[4] for r in b])
            pts.append(S.MeanPoint(cfg.scales[j], float(v.mean()),
                                   float(v.std(ddof=1) / math.sqrt(len(v))), len(v)))
        fit = S.fit_mean_decay(pts, mode)
        xs = [p.scale for p in pts]
        est = [p.mean for p in pts]
        lo = [p.mean - 2 * p.stderr for p in pts]
        hi = [p.mean + 2 * p.stderr for p in pts]
        if cfg.kind != "flow-moment":
            derived["dimension"] = 1.0 - fit.slope
        line = _line(fit, mode)
    else:  # log box counts
        trials = sorted({r[2] for r in ok})
        L = np.array([[math.nan] * m for _ in trials])
        pos = {t: i for i, t in enumerate(trials)}
        for r in ok:
            L[pos[r[2]], r[0]] = r[4]
        fit = S.fit_log_counts(cfg.scales, L)
        derived["dimension"] = fit.slope
        xs = list(cfg.scales)
        est = np.exp(L.mean(axis=0)).tolist()
        lo = hi = None

        def line(x, f=fit):
            return math.exp(f.intercept) * x ** (-f.slope)
    return fit, derived, (xs, est, lo, hi, line)


def _line(fit, mode):
    if mode == S.LOG_LOG:
        return lambda x: math.exp(fit.intercept) * x**fit.slope
    return lambda x: math.exp(fit.intercept + fit.slope * x)


def write_report(cfg: ExperimentConfig, rows, out: str) -> dict:
    fit, derived, (xs, est, lo, hi, line) = fit_rows(cfg, rows)
    rec = fit.to_record()
    rec.update(kind=cfg.kind, master_seed=cfg.seed, derived=derived,
               scales=list(map(float, fit.scales)), estimates=list(map(float, fit.values)))
    _write(os.path.join(out, "fit.json"), _json(rec))
    title = f"{cfg.kind}  kappa={cfg.kappa:g}  slope={fit.slope:.4f} ± {fit.stderr_slope:.4f}"
    svg = plot_fit(xs, est, lo, hi, line, logx=fit.mode == S.LOG_LOG, title=title,
                   xlabel="scale", ylabel="estimate")
    _write(os.path.join(out, "plot.svg"), svg)
    return rec


def report_bundle(directory: str) -> dict:
    """Re-fit an existing bundle from its trial rows and manifest."""
    from .config import validate_config

    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    conf = dict(manifest["config"])
    conf.pop("warnings", None)
    conf["output"] = directory
    cfg = validate_config(ExperimentConfig(**conf).to_text())
    rows = read_rows(os.path.join(directory, "trials.csv"))
    return write_report(cfg, rows, directory)
