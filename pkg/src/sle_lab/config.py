"""Experiment configuration: flat ``key = value`` text with ``#`` comments.

Every field has a default; a few defaults depend on the experiment kind
(``KIND_DEFAULTS``).  :func:`validate_config` collects *all* problems and
raises :class:`ConfigError` with one ``field: message`` entry per problem.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields

KINDS = (
    "trace-dimension", "boundary-dimension", "disconnection", "escape",
    "radial-survival", "flow-moment", "bessel", "cut-sde", "boundary-times",
    "cut-times", "perco-two-arm", "perco-three-arm", "perco-disk-hit", "prop1-harness",
)

TIME_SET_KINDS = ("boundary-times", "cut-times")
PERCO_KINDS = ("perco-two-arm", "perco-three-arm", "perco-disk-hit")


def _geom(a, r, n):
    return tuple(a * r**k for k in range(n))


# Defaults shared by all kinds; per-kind overrides follow.
BASE_DEFAULTS = dict(
    kind="escape", kappa=6.0, dt=0.01, delta=1 / 512, scales=(2.0, 4.0, 8.0, 16.0),
    trials=4000, seed=0, workers=1, output="sle-lab-output", epsilon=2.0**-6, a=0.1,
    horizon=1.0, refine=400, y0=1.0, b=1 / 3, gridsize=64, step=1e-3, target="trace",
    clock="s", chunk=50, max_radius=4.0, method="auto",
)

KIND_DEFAULTS = {
    "escape": dict(dt=0.01, scales=(2.0, 4.0, 8.0, 16.0), trials=4000),
    "disconnection": dict(dt=4e-3, scales=_geom(0.25, 0.5, 4), trials=4000, refine=400),
    "radial-survival": dict(scales=(2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0), trials=100_000,
                            y0=math.pi, step=2e-3, chunk=1000),
    "flow-moment": dict(scales=(1.0, 2.0, 3.0, 4.0), trials=400, step=2e-3, b=1 / 3,
                        gridsize=64, chunk=20),
    "bessel": dict(scales=(1.0, 4.0, 16.0, 64.0, 256.0), trials=100_000, y0=1.0,
                   step=2e-3, chunk=5000),
    "cut-sde": dict(scales=(1.0, 2.0, 3.0, 4.0), trials=20_000, step=1e-3, chunk=500),
    "boundary-times": dict(dt=1e-5, scales=_geom(1e-4, 2.0, 5), a=0.1, trials=24,
                           chunk=1),
    "cut-times": dict(dt=1e-5, scales=_geom(1e-4, 2.0, 5), a=0.1, trials=24, chunk=1),
    # dt for trace-dimension depends on the method (see validate_config)
    "trace-dimension": dict(scales=_geom(0.25, 0.5, 4), horizon=1.0, trials=1000, chunk=10,
                            refine=200),
    "boundary-dimension": dict(dt=1e-5, scales=_geom(0.25, 0.5, 4), epsilon=1e-4, a=0.1,
                               trials=12, chunk=1),
    "perco-two-arm": dict(delta=1 / 512, scales=_geom(0.5, 0.5, 4), trials=10_000,
                          chunk=250),
    "perco-three-arm": dict(delta=1 / 512, scales=_geom(0.5, 0.5, 4), trials=10_000,
                            chunk=250),
    "perco-disk-hit": dict(delta=1 / 256, scales=_geom(0.25, 0.5, 4), trials=2000,
                           chunk=100),
    "prop1-harness": dict(dt=1e-3, epsilon=0.05, scales=(0.2, 0.4, 0.8), trials=600,
                          horizon=4.0, target="trace", chunk=50),
}

TYPES = dict(
    kind=str, kappa=float, dt=float, delta=float, scales="floats", trials=int, seed=int,
    workers=int, output=str, epsilon=float, a=float, horizon=float, refine=int, y0=float,
    b=float, gridsize=int, step=float, target=str, clock=str, chunk=int, max_radius=float,
    method=str,
)

# fields that do not change results (excluded from the fingerprint)
NON_RESULT_FIELDS = ("workers", "output")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    kappa: float
    dt: float
    delta: float
    scales: tuple
    trials: int
    seed: int
    workers: int
    output: str
    epsilon: float
    a: float
    horizon: float
    refine: int
    y0: float
    b: float
    gridsize: int
    step: float
    target: str
    clock: str
    chunk: int
    max_radius: float
    method: str
    warnings: tuple = field(default=(), compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scales"] = list(self.scales)
        d["warnings"] = list(self.warnings)
        return d

    def fingerprint(self) -> str:
        d = {k: v for k, v in self.to_dict().items()
             if k not in NON_RESULT_FIELDS and k != "warnings"}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **kw) -> "ExperimentConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return ExperimentConfig(**d)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "warnings":
                continue
            v = getattr(self, f.name)
            if f.name == "scales":
                v = ", ".join(repr(float(x)) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def parse_text(text: str) -> tuple[dict, list]:
    """Split ``key = value`` lines; returns (raw dict, syntax errors)."""
    raw, errors = {}, []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {n}: expected 'key = value'")
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in TYPES:
            errors.append(f"{k}: unknown field (line {n})")
            continue
        if k in raw:
            errors.append(f"{k}: given twice (line {n})")
            continue
        raw[k] = v
    return raw, errors


def _convert(key, value, errors):
    t = TYPES[key]
    try:
        if t == "floats":
            parts = [p for p in value.replace(",", " ").split() if p]
            out = []
            for i, p in enumerate(parts):
                try:
                    out.append(float(p))
                except ValueError:
                    errors.append(f"{key}[{i}]: not a number: {p!r}")
            return tuple(out)
        if t is int:
            return int(value)
        if t is float:
            x = float(value)
            if not math.isfinite(x):
                raise ValueError
            return x
        return value
    except ValueError:
        errors.append(f"{key}: expected {getattr(t, '__name__', t)}, got {value!r}")
        return None


def validate_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse, default and cross-check a configuration; raise ConfigError listing all problems."""
    raw, errors = parse_text(text)
    if overrides:
        raw.update({k: str(v) for k, v in overrides.items()})
    values = {}
    for k, v in raw.items():
        c = _convert(k, v, errors)
        if c is not None:
            values[k] = c
    kind = values.get("kind", BASE_DEFAULTS["kind"])
    if kind not in KINDS:
        errors.append(f"kind: unknown experiment kind {kind!r}")
        kind = BASE_DEFAULTS["kind"]
    merged = dict(BASE_DEFAULTS)
    merged.update(KIND_DEFAULTS.get(kind, {}))
    merged.update(values)
    merged["kind"] = kind
    if kind == "trace-dimension" and "dt" not in values:
        occupancy = merged["method"] == "occupancy" or (merged["method"] == "auto"
                                                        and merged["kappa"] == 6)
        merged["dt"] = 4e-3 if occupancy else 2e-5
    warn = []
    _cross_checks(merged, errors, warn)
    if errors:
        raise ConfigError(errors)
    merged["scales"] = tuple(float(s) for s in merged["scales"])
    return ExperimentConfig(**merged, warnings=tuple(warn))


def _cross_checks(c, errors, warn):
    kind = c["kind"]
    sc = c["scales"]
    if c["trials"] < 1:
        errors.append("trials: must be >= 1")
    if c["workers"] < 1:
        errors.append("workers: must be >= 1")
    if c["chunk"] < 1:
        errors.append("chunk: must be >= 1")
    if c["seed"] < 0:
        errors.append("seed: must be >= 0")
    if c["kappa"] < 0:
        errors.append("kappa: must be >= 0")
    for k in ("dt", "step", "horizon", "y0", "b"):
        if not c[k] > 0:
            errors.append(f"{k}: must be positive")
    if len(set(sc)) < 3:
        errors.append("scales: need at least 3 distinct values")
    for i, s in enumerate(sc):
        if not s > 0:
            errors.append(f"scales[{i}]: must be positive")
    if kind in TIME_SET_KINDS or (kind == "prop1-harness" and c["target"] == "boundary-times"):
        eps = sc if kind in TIME_SET_KINDS else (c["epsilon"],)
        name = "scales[{}]" if kind in TIME_SET_KINDS else "epsilon"
        for i, e in enumerate(eps):
            if e >= c["a"]:
                errors.append(f"{name.format(i)}, a: epsilon={e:g} must be smaller than a={c['a']:g}")
        if c["horizon"] < 1 + c["a"]:
            c["horizon"] = 1 + c["a"]
    if kind == "cut-sde" and not 4 < c["kappa"] < 8:
        warn.append(f"kappa={c['kappa']:g} is outside (4, 8): the cut-time exponent "
                    "claims do not apply (regime check only)")
    if kind == "cut-times" and c["kappa"] >= 8:
        warn.append(f"kappa={c['kappa']:g} >= 8: cut times are expected to be negligible")
    if kind == "flow-moment" and c["gridsize"] < 64:
        errors.append("gridsize: the flow grid needs at least 64 points")
    if kind == "bessel" and c["kappa"] <= 4:
        errors.append("kappa: the Bessel process only hits 0 for kappa > 4")
    if kind == "disconnection":
        if c["kappa"] != 6:
            errors.append("kappa: disconnection trials are implemented for kappa = 6")
        for i, s in enumerate(sc):
            if not 0 < s < 1:
                errors.append(f"scales[{i}]: disk radius must lie in (0, 1)")
        if c["refine"] < 1:
            errors.append("refine: must be >= 1")
    if kind == "escape":
        for i, s in enumerate(sc):
            if s < 1:
                errors.append(f"scales[{i}]: escape radius must be >= 1")
    if kind in PERCO_KINDS:
        lim = 1 / 8 if kind == "perco-disk-hit" else None
        if not c["delta"] > 0:
            errors.append("delta: must be positive")
        if lim is not None and c["delta"] > lim:
            errors.append("delta: mesh must be <= 1/8")
        for i, s in enumerate(sc):
            if not 0 < s < 1:
                errors.append(f"scales[{i}]: epsilon must lie in (0, 1)")
            elif lim is None and c["delta"] > s / 4:
                errors.append(f"scales[{i}], delta: need delta <= epsilon/4")
    if kind == "prop1-harness":
        if c["target"] not in ("trace", "boundary-times"):
            errors.append("target: must be 'trace' or 'boundary-times'")
        for i, d in enumerate(sc):
            if d < 2 * c["epsilon"]:
                errors.append(f"scales[{i}], epsilon: separations must be >= 2*epsilon")
    if kind == "trace-dimension":
        if c["method"] not in ("auto", "box", "occupancy"):
            errors.append("method: must be 'auto', 'box' or 'occupancy'")
        elif c["method"] == "occupancy" and c["kappa"] != 6:
            errors.append("method, kappa: the occupancy route is implemented for kappa = 6")
    if kind == "boundary-dimension" and c["epsilon"] >= c["a"]:
        errors.append(f"epsilon, a: epsilon={c['epsilon']:g} must be smaller than a={c['a']:g}")
    if kind == "cut-sde" and c["clock"] not in ("s", "t"):
        errors.append("clock: must be 's' or 't'")
