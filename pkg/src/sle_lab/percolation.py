"""Critical site percolation on the triangular lattice.

Sites carry axial integer coordinates ``(q, r)``; the six neighbours of a
site are obtained by adding one of ``DIRECTIONS`` (listed counter-clockwise,
so opposite directions are three entries apart).  A site sits at the
Euclidean point ``offset + delta * (q + r/2 + i r sqrt(3)/2)``.

Every site carries one fair bit derived from a per-trial key and the site's
coordinates (:func:`sle_lab._rng.site_bit`), so a site can be coloured
lazily, on first contact, and still agree with a full pre-colouring.

Regions (annuli, half-plane boxes, rhombi) are stored as a padded
rectangular window of axial coordinates with a bit mask per site:
``IN_REGION`` plus source/target bits used by the crossing searches.
Closed-site arm counts are maximum flows with unit vertex capacities
(Menger), computed by breadth-first augmenting paths on the split graph.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit

from ._rng import site_bit

SQRT3_2 = math.sqrt(3.0) / 2.0
DIRECTIONS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))

CLOSED, OPEN, UNVISITED = 0, 1, -1

IN_REGION = np.uint8(1)
SRC_A = np.uint8(2)
DST_A = np.uint8(4)
SRC_B = np.uint8(8)
DST_B = np.uint8(16)

HIT, RADIUS, STEP_CAP, BUFFER = 0, 1, 2, 3
STATUS_NAMES = {HIT: "ball", RADIUS: "radius", STEP_CAP: "step_cap"}

# --------------------------------------------------------------------------
# regions


@dataclass
class LatticeRegion:
    """A finite set of triangular-lattice sites with boundary-set bits."""

    delta: float
    q0: int
    r0: int
    nq: int
    nr: int
    mask: np.ndarray
    offset: complex = 0j
    tags: dict = field(default_factory=dict)
    description: str = ""

    def index(self, q, r):
        return (np.asarray(r) - self.r0) * self.nq + (np.asarray(q) - self.q0)

    def coords(self, idx):
        idx = np.asarray(idx)
        return idx % self.nq + self.q0, idx // self.nq + self.r0

    def position(self, q, r):
        q = np.asarray(q, dtype=float)
        r = np.asarray(r, dtype=float)
        return self.offset + self.delta * (q + 0.5 * r + 1j * SQRT3_2 * r)

    def sites(self, bit=IN_REGION) -> np.ndarray:
        """Flat indices of the sites carrying ``bit``."""
        return np.flatnonzero(self.mask & bit)

    @property
    def n_sites(self) -> int:
        return int(np.count_nonzero(self.mask & IN_REGION))

    def with_sets(self, sources, targets, src=SRC_A, dst=DST_A) -> "LatticeRegion":
        """Copy of the region with the given site lists as source/target sets."""
        mask = self.mask & ~np.uint8(src | dst)
        for bit, pts in ((src, sources), (dst, targets)):
            for q, r in pts:
                i = int(self.index(q, r))
                if not 0 <= i < mask.size or not mask[i] & IN_REGION:
                    raise ValueError(f"site {(q, r)} is not in the region")
                mask[i] |= bit
        return LatticeRegion(self.delta, self.q0, self.r0, self.nq, self.nr, mask,
                             self.offset, dict(self.tags), self.description)


def _window(delta, offset, xmin, xmax, ymin, ymax):
    r_lo = math.floor((ymin - offset.imag) / (delta * SQRT3_2)) - 1
    r_hi = math.ceil((ymax - offset.imag) / (delta * SQRT3_2)) + 1
    half = 0.5 * max(abs(r_lo), abs(r_hi))
    q_lo = math.floor((xmin - offset.real) / delta - half) - 1
    q_hi = math.ceil((xmax - offset.real) / delta + half) + 1
    return q_lo, r_lo, q_hi - q_lo + 1, r_hi - r_lo + 1


def _grid_positions(delta, offset, q0, r0, nq, nr):
    q = np.arange(q0, q0 + nq, dtype=float)
    r = np.arange(r0, r0 + nr, dtype=float)
    Q, R = np.meshgrid(q, r)
    return (offset + delta * (Q + 0.5 * R + 1j * SQRT3_2 * R)).ravel()


def _finish(mask, nq, nr):
    # keep a one-site margin empty so neighbour lookups never leave the array
    m = mask.reshape(nr, nq)
    m[0, :] = 0
    m[-1, :] = 0
    m[:, 0] = 0
    m[:, -1] = 0
    return m.ravel()


def annulus_region(epsilon: float, delta: float, center: complex = 0j,
                   outer: float = 1.0, strict_outer: bool = False,
                   offset: complex = 0j) -> LatticeRegion:
    """Sites with ``epsilon <= |x - center| <= outer``.

    The inner boundary set is the shell ``[epsilon, epsilon + delta)`` and
    the outer set ``(outer - delta, outer]``: consecutive sites of a path
    are ``delta`` apart, so every lattice crossing meets both shells.
    """
    if not (0 < epsilon < outer):
        raise ValueError("need 0 < epsilon < outer radius")
    if outer - epsilon < delta:
        raise ValueError(
            f"annulus of width {outer - epsilon:g} is thinner than the mesh {delta:g}")
    q0, r0, nq, nr = _window(delta, offset, center.real - outer, center.real + outer,
                             center.imag - outer, center.imag + outer)
    rho = np.abs(_grid_positions(delta, offset, q0, r0, nq, nr) - center)
    inside = (rho >= epsilon) & ((rho < outer) if strict_outer else (rho <= outer))
    mask = np.zeros(rho.size, dtype=np.uint8)
    mask[inside] |= IN_REGION
    mask[inside & (rho < epsilon + delta)] |= SRC_A
    mask[inside & (rho > outer - delta)] |= DST_A
    mask = _finish(mask, nq, nr)
    return LatticeRegion(delta, q0, r0, nq, nr, mask, offset,
                         {"inner": SRC_A, "outer": DST_A},
                         f"annulus center={center} radii=({epsilon}, {outer}) mesh={delta}")


def rhombus_region(n: int, m: int | None = None) -> LatticeRegion:
    """``n x m`` rhombus ``0 <= q < n, 0 <= r < m`` (a Hex board when square).

    Set A is left (q = 0) to right (q = n-1), set B is bottom (r = 0) to
    top (r = m-1).
    """
    m = n if m is None else m
    if n < 1 or m < 1:
        raise ValueError("rhombus sides must be positive")
    nq, nr = n + 2, m + 2
    mask = np.zeros(nq * nr, dtype=np.uint8)
    g = mask.reshape(nr, nq)
    g[1:-1, 1:-1] = IN_REGION
    g[1:-1, 1] |= SRC_A
    g[1:-1, n] |= DST_A
    g[1, 1:-1] |= SRC_B
    g[m, 1:-1] |= DST_B
    return LatticeRegion(1.0, -1, -1, nq, nr, mask, 0j,
                         {"left": SRC_A, "right": DST_A, "bottom": SRC_B, "top": DST_B},
                         f"rhombus {n}x{m}")


# half-plane lattice: row r = -1 is the boundary row on the real axis and the
# exploration starts on the edge between sites (0, -1) and (1, -1).
def _half_plane_offset(delta):
    return complex(0.0, delta * SQRT3_2)


def half_plane_region(delta: float, box: float) -> LatticeRegion:
    """Box ``|x| <= box, 0 <= y <= box`` of the upper half-plane lattice.

    Interior rows are ``r >= 0``; the boundary row ``r = -1`` lies on the
    real axis and is tagged ``boundary`` (bit ``SRC_B``) — it is coloured
    at construction, open on ``x >= 0`` and closed on ``x < 0``.
    """
    off = _half_plane_offset(delta)
    q0, r0, nq, nr = _window(delta, off, -box, box, -delta, box)
    z = _grid_positions(delta, off, q0, r0, nq, nr)
    r = np.repeat(np.arange(r0, r0 + nr), nq)
    inside = (np.abs(z.real) <= box) & (z.imag <= box)
    mask = np.zeros(z.size, dtype=np.uint8)
    mask[inside & (r >= 0)] |= IN_REGION
    mask[inside & (r == -1)] |= SRC_B
    mask = _finish(mask, nq, nr)
    return LatticeRegion(delta, q0, r0, nq, nr, mask, off, {"boundary": SRC_B},
                         f"half-plane box={box} mesh={delta}")


# --------------------------------------------------------------------------
# numba kernels


_OFF_Q = np.array([d[0] for d in DIRECTIONS], dtype=np.int64)
_OFF_R = np.array([d[1] for d in DIRECTIONS], dtype=np.int64)


def _offsets(nq):
    return (_OFF_R * nq + _OFF_Q).astype(np.int64)


@njit(cache=True, inline="always")
def _label(q, r):
    return np.uint64(q + 2147483648) * np.uint64(4294967296) + np.uint64(r + 2147483648)


@njit(cache=True, inline="always")
def _colour(colors, idx, key, q0, r0, nq):
    c = colors[idx]
    if c < 0:
        q = idx % nq + q0
        r = idx // nq + r0
        c = np.int8(1) if site_bit(key, _label(q, r)) else np.int8(0)
        colors[idx] = c
    return c


@njit(cache=True)
def _crossing(mask, colors, key, q0, r0, nq, offs, sources, colour, dst,
              seen, stamp, queue):
    """True iff a path of ``colour`` sites joins ``sources`` to a ``dst`` site."""
    n = 0
    for s in sources:
        if seen[s] != stamp and _colour(colors, s, key, q0, r0, nq) == colour:
            if mask[s] & dst:
                return True
            seen[s] = stamp
            queue[n] = s
            n += 1
    while n > 0:
        n -= 1
        v = queue[n]
        for d in range(6):
            w = v + offs[d]
            if seen[w] == stamp or not (mask[w] & 1):
                continue
            seen[w] = stamp
            if _colour(colors, w, key, q0, r0, nq) != colour:
                continue
            if mask[w] & dst:
                return True
            queue[n] = w
            n += 1
    return False


@njit(cache=True)
def _closed_flow(mask, colors, key, q0, r0, nq, offs, sources, dst, limit,
                 seen, stamp0, queue, parent, used, flow, touched, tmark):
    """Maximum number (capped at ``limit``) of vertex-disjoint closed paths.

    States are ``2*site`` (in-copy) and ``2*site + 1`` (out-copy).  ``used``
    marks saturated internal arcs, ``flow[6*u + d]`` the arc from ``u`` to
    its neighbour in direction ``d``.  Returns (count, next stamp); the flow
    arrays are restored to zero before returning.
    """
    count = 0
    stamp = stamp0
    nt = 0
    while count < limit:
        stamp += 1
        n = 0
        for s in sources:
            st = 2 * s
            if seen[st] != stamp and (mask[s] & 1) and \
                    _colour(colors, s, key, q0, r0, nq) == 0:
                seen[st] = stamp
                parent[st] = -1
                queue[n] = st
                n += 1
        end = -1
        while n > 0:
            n -= 1
            st = queue[n]
            v = st >> 1
            if st & 1:
                if mask[v] & dst:
                    end = st
                    break
                if used[v]:
                    nx = 2 * v
                    if seen[nx] != stamp:
                        seen[nx] = stamp
                        parent[nx] = st
                        queue[n] = nx
                        n += 1
                for d in range(6):
                    w = v + offs[d]
                    if not (mask[w] & 1) or flow[6 * v + d]:
                        continue
                    nx = 2 * w
                    if seen[nx] == stamp:
                        continue
                    if _colour(colors, w, key, q0, r0, nq) != 0:
                        continue
                    seen[nx] = stamp
                    parent[nx] = st
                    queue[n] = nx
                    n += 1
            else:
                if not used[v]:
                    nx = 2 * v + 1
                    if seen[nx] != stamp:
                        seen[nx] = stamp
                        parent[nx] = st
                        queue[n] = nx
                        n += 1
                for d in range(6):
                    u = v + offs[d]
                    if not (mask[u] & 1):
                        continue
                    if flow[6 * u + (d + 3) % 6]:
                        nx = 2 * u + 1
                        if seen[nx] != stamp:
                            seen[nx] = stamp
                            parent[nx] = st
                            queue[n] = nx
                            n += 1
        if end < 0:
            break
        count += 1
        b = end
        a = parent[b]
        while a >= 0:
            va = a >> 1
            vb = b >> 1
            if va == vb:
                used[va] = 1 if (a & 1) == 0 else 0
            elif a & 1:
                for d in range(6):
                    if va + offs[d] == vb:
                        flow[6 * va + d] = 1
            if not tmark[va]:
                tmark[va] = 1
                touched[nt] = va
                nt += 1
            else:
                for d in range(6):
                    if vb + offs[d] == va:
                        flow[6 * vb + d] = 0
            b = a
            a = parent[b]
    for i in range(nt):
        v = touched[i]
        used[v] = 0
        tmark[v] = 0
        for d in range(6):
            flow[6 * v + d] = 0
    return count, stamp


class _Workspace:
    """Scratch arrays sized for one region, reused across trials."""

    def __init__(self, region: LatticeRegion):
        size = region.mask.size
        self.offs = _offsets(region.nq)
        self.seen = np.zeros(size, dtype=np.int64)
        self.seen2 = np.zeros(2 * size, dtype=np.int64)
        self.queue = np.empty(2 * size, dtype=np.int64)
        self.parent = np.empty(2 * size, dtype=np.int64)
        self.used = np.zeros(size, dtype=np.uint8)
        self.flow = np.zeros(6 * size, dtype=np.uint8)
        self.touched = np.empty(size, dtype=np.int64)
        self.tmark = np.zeros(size, dtype=np.uint8)

    def reset(self):
        self.seen.fill(0)
        self.seen2.fill(0)
        return self


@njit(cache=True)
def _arm_batch(mask, q0, r0, nq, offs, sources, dst, keys, want_three,
               colors, seen, seen2, queue, parent, used, flow, touched, tmark):
    n = keys.size
    two = np.zeros(n, dtype=np.bool_)
    three = np.zeros(n, dtype=np.bool_)
    stamp = 0
    stamp2 = 0
    for t in range(n):
        colors[:] = -1
        key = keys[t]
        stamp += 1
        if not _crossing(mask, colors, key, q0, r0, nq, offs, sources, 1, dst,
                         seen, stamp, queue):
            continue
        limit = 2 if want_three else 1
        c, stamp2 = _closed_flow(mask, colors, key, q0, r0, nq, offs, sources, dst,
                                 limit, seen2, stamp2, queue, parent, used, flow,
                                 touched, tmark)
        two[t] = c >= 1
        three[t] = c >= 2
    return two, three


@njit(cache=True)
def _enumerate(mask, q0, r0, nq, offs, sites, sources, dst, colors, seen, seen2,
               queue, parent, used, flow, touched, tmark):
    m = sites.size
    n2 = 0
    n3 = 0
    stamp = 0
    stamp2 = 0
    for cfg in range(1 << m):
        for j in range(m):
            colors[sites[j]] = (cfg >> j) & 1
        stamp += 1
        if not _crossing(mask, colors, 0, q0, r0, nq, offs, sources, 1, dst,
                         seen, stamp, queue):
            continue
        c, stamp2 = _closed_flow(mask, colors, 0, q0, r0, nq, offs, sources, dst, 2,
                                 seen2, stamp2, queue, parent, used, flow, touched,
                                 tmark)
        if c >= 1:
            n2 += 1
        if c >= 2:
            n3 += 1
    return n2, n3


# --------------------------------------------------------------------------
# site fields


class SiteField:
    """Lazily coloured percolation configuration on a region.

    ``colors`` holds ``OPEN``, ``CLOSED`` or ``UNVISITED`` per grid cell; a
    cell is coloured from the trial key the first time it is queried and
    never changes afterwards.
    """

    def __init__(self, region: LatticeRegion, key: int = 0, colors=None,
                 boundary: dict | None = None):
        self.region = region
        self.key = int(key)
        self.colors = (np.full(region.mask.size, UNVISITED, dtype=np.int8)
                       if colors is None else np.asarray(colors, dtype=np.int8).copy())
        self.boundary = dict(boundary or {})

    def state(self, q: int, r: int) -> int:
        i = int(self.region.index(q, r))
        return int(_colour(self.colors, i, np.uint64(self.key), self.region.q0,
                           self.region.r0, self.region.nq))

    def peek(self, q: int, r: int) -> int:
        return int(self.colors[int(self.region.index(q, r))])

    def set_state(self, q: int, r: int, state: int):
        self.colors[int(self.region.index(q, r))] = state

    def precolor(self) -> "SiteField":
        """Colour every region site now (same bits as lazy colouring)."""
        for i in self.region.sites():
            _colour(self.colors, i, np.uint64(self.key), self.region.q0,
                    self.region.r0, self.region.nq)
        return self

    def visited(self) -> int:
        return int(np.count_nonzero(self.colors[self.region.sites()] >= 0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["q", "r", "state"])
        idx = self.region.sites()
        qs, rs = self.region.coords(idx)
        names = {OPEN: "open", CLOSED: "closed", UNVISITED: "unvisited"}
        for q, r, i in zip(qs, rs, idx):
            w.writerow([int(q), int(r), names[int(self.colors[i])]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, region: LatticeRegion, key: int = 0) -> "SiteField":
        codes = {"open": OPEN, "closed": CLOSED, "unvisited": UNVISITED}
        f = cls(region, key)
        for row in csv.DictReader(io.StringIO(text)):
            f.set_state(int(row["q"]), int(row["r"]), codes[row["state"].strip()])
        return f


def disjoint_closed_arms(field: SiteField, inner, outer, limit: int | None = None) -> int:
    """Maximum number of vertex-disjoint closed paths from ``inner`` to ``outer``.

    ``inner`` and ``outer`` are iterables of ``(q, r)`` sites of the region.
    Uncoloured sites are coloured lazily from the field's key.
    """
    inner = list(inner)
    outer = list(outer)
    if not inner or not outer:
        raise ValueError("boundary sets must be nonempty")
    region = field.region.with_sets(inner, outer)
    ws = _Workspace(region)
    cap = region.n_sites + 1 if limit is None else int(limit)
    count, _ = _closed_flow(region.mask, field.colors, np.uint64(field.key), region.q0,
                            region.r0, region.nq, ws.offs, region.sites(SRC_A), DST_A,
                            cap, ws.seen2, 0, ws.queue, ws.parent, ws.used, ws.flow,
                            ws.touched, ws.tmark)
    return int(count)


def has_crossing(field: SiteField, colour: int, src=SRC_A, dst=DST_A) -> bool:
    """Is there a path of ``colour`` sites from the ``src`` set to the ``dst`` set?"""
    region = field.region
    ws = _Workspace(region)
    return bool(_crossing(region.mask, field.colors, np.uint64(field.key), region.q0,
                          region.r0, region.nq, ws.offs, region.sites(src), colour,
                          dst, ws.seen, 1, ws.queue))


# --------------------------------------------------------------------------
# annulus arm events


def _check_annulus(epsilon, delta):
    if not (0 < epsilon < 1):
        raise ValueError("epsilon must lie in (0, 1)")
    if not (0 < delta <= epsilon / 4):
        raise ValueError("need 0 < delta <= epsilon/4")


@lru_cache(maxsize=16)
def _annulus_cached(epsilon, delta):
    region = annulus_region(epsilon, delta)
    return region, _Workspace(region), region.sites(SRC_A)


def arm_events(epsilon: float, delta: float, keys, three: bool = True):
    """Two-arm and three-arm indicators for a batch of trial keys.

    Returns boolean arrays ``(two, three)``; both events are evaluated on
    the same field for each key, so ``three`` implies ``two`` pathwise.
    """
    _check_annulus(epsilon, delta)
    region, ws, sources = _annulus_cached(float(epsilon), float(delta))
    keys = np.asarray(keys, dtype=np.uint64).ravel()
    colors = np.empty(region.mask.size, dtype=np.int8)
    return _arm_batch(region.mask, region.q0, region.r0, region.nq, ws.offs, sources,
                      DST_A, keys, bool(three), colors, ws.reset().seen, ws.seen2, ws.queue,
                      ws.parent, ws.used, ws.flow, ws.touched, ws.tmark)


def annulus_two_arm_trial(epsilon: float, delta: float, seed: int) -> bool:
    """Open and closed crossings of the annulus ``epsilon < |x| < 1``."""
    two, _ = arm_events(epsilon, delta, [seed], three=False)
    return bool(two[0])


def annulus_three_arm_trial(epsilon: float, delta: float, seed: int) -> bool:
    """One open crossing plus two vertex-disjoint closed crossings."""
    _, three = arm_events(epsilon, delta, [seed], three=True)
    return bool(three[0])


def enumerate_arm_probabilities(region: LatticeRegion) -> tuple[float, float]:
    """Exact two-arm and three-arm probabilities by listing all colourings.

    Uses the region's ``SRC_A``/``DST_A`` sets; limited to 26 sites.
    """
    sites = region.sites()
    if sites.size > 26:
        raise ValueError("enumeration limited to 26 sites")
    ws = _Workspace(region)
    colors = np.full(region.mask.size, UNVISITED, dtype=np.int8)
    n2, n3 = _enumerate(region.mask, region.q0, region.r0, region.nq, ws.offs, sites,
                        region.sites(SRC_A), DST_A, colors, ws.seen, ws.seen2,
                        ws.queue, ws.parent, ws.used, ws.flow, ws.touched, ws.tmark)
    total = float(1 << sites.size)
    return n2 / total, n3 / total


def region_arm_events(region: LatticeRegion, keys, three: bool = True):
    """Batch arm indicators on an arbitrary region (``SRC_A`` to ``DST_A``)."""
    ws = _Workspace(region)
    keys = np.asarray(keys, dtype=np.uint64).ravel()
    colors = np.empty(region.mask.size, dtype=np.int8)
    return _arm_batch(region.mask, region.q0, region.r0, region.nq, ws.offs,
                      region.sites(SRC_A), DST_A, keys, bool(three), colors, ws.seen,
                      ws.seen2, ws.queue, ws.parent, ws.used, ws.flow, ws.touched, ws.tmark)


@dataclass(frozen=True)
class ArmBatch:
    epsilon: float
    delta: float
    trials: int
    successes: int


def arm_batches_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epsilon", "delta", "trials", "successes"])
    for b in rows:
        w.writerow([repr(float(b.epsilon)), repr(float(b.delta)), b.trials, b.successes])
    return buf.getvalue()


# --------------------------------------------------------------------------
# rhombus crossings (duality check)


@njit(cache=True)
def _rhombus_batch(mask, q0, r0, nq, offs, src_a, src_b, keys, colors, seen, queue):
    n = keys.size
    a = np.zeros(n, dtype=np.bool_)
    b = np.zeros(n, dtype=np.bool_)
    stamp = 0
    for t in range(n):
        colors[:] = -1
        stamp += 1
        a[t] = _crossing(mask, colors, keys[t], q0, r0, nq, offs, src_a, 1, 4,
                         seen, stamp, queue)
        stamp += 1
        b[t] = _crossing(mask, colors, keys[t], q0, r0, nq, offs, src_b, 0, 16,
                         seen, stamp, queue)
    return a, b


def rhombus_crossings(n: int, keys):
    """Open left-right and closed bottom-top crossings of an ``n x n`` rhombus."""
    region = rhombus_region(n)
    ws = _Workspace(region)
    keys = np.asarray(keys, dtype=np.uint64).ravel()
    colors = np.empty(region.mask.size, dtype=np.int8)
    return _rhombus_batch(region.mask, region.q0, region.r0, region.nq, ws.offs,
                          region.sites(SRC_A), region.sites(SRC_B), keys, colors,
                          ws.seen, ws.queue)


# --------------------------------------------------------------------------
# exploration interface in the half-plane


@dataclass(frozen=True)
class StopRule:
    """Halting rule of the exploration walk.

    The walk stops when an edge midpoint comes within ``ball_radius`` of
    ``ball_center`` (if given), when a midpoint reaches modulus
    ``max_radius``, or after ``max_steps`` steps.
    """

    max_radius: float = 4.0
    ball_center: complex = 1j
    ball_radius: float | None = None
    max_steps: int = 10_000_000


@dataclass
class InterfacePath:
    points: np.ndarray
    left: np.ndarray
    right: np.ndarray
    orientation: str
    status: str
    steps: int
    min_distance: float

    @property
    def hit(self) -> bool:
        return self.status == "ball"


_DIR_TABLE = np.full((3, 3), -1, dtype=np.int64)
for _k, (_dq, _dr) in enumerate(DIRECTIONS):
    _DIR_TABLE[_dq + 1, _dr + 1] = _k


@njit(cache=True)
def _explore(colors, mask, key, q0, r0, nq, delta, yoff, lq, lr, rq, rr, cx, cy,
             eps, rmax, steps0, max_steps, dir_table, oq, orr, out_l, out_r, record,
             min_d):
    """Walk the interface with closed sites on the left, open on the right."""
    n = 0
    steps = steps0
    status = BUFFER
    cap = out_l.shape[0]
    while True:
        x = delta * (0.5 * (lq + rq) + 0.25 * (lr + rr))
        y = yoff + delta * SQRT3_2 * 0.5 * (lr + rr)
        dist = math.sqrt((x - cx) ** 2 + (y - cy) ** 2)
        if dist < min_d:
            min_d = dist
        if record:
            if n >= cap:
                break
            out_l[n, 0] = lq
            out_l[n, 1] = lr
            out_r[n, 0] = rq
            out_r[n, 1] = rr
            n += 1
        if dist < eps:
            status = HIT
            break
        if x * x + y * y >= rmax * rmax:
            status = RADIUS
            break
        if steps >= max_steps:
            status = STEP_CAP
            break
        k = dir_table[rq - lq + 1, rr - lr + 1]
        j = (k + 1) % 6
        sq = lq + oq[j]
        sr = lr + orr[j]
        idx = (sr - r0) * nq + (sq - q0)
        if _colour(colors, idx, key, q0, r0, nq) == 1:
            rq = sq
            rr = sr
        else:
            lq = sq
            lr = sr
        steps += 1
    return n, status, steps, lq, lr, rq, rr, min_d


@lru_cache(maxsize=4)
def _half_plane_cached(delta, box):
    return half_plane_region(delta, box)


def _half_plane_field(delta, rmax, seed):
    region = _half_plane_cached(float(delta), float(rmax) + 4 * float(delta))
    f = SiteField(region, seed, boundary={"x>=0": "open (wired)", "x<0": "closed"})
    b = region.sites(SRC_B)
    q, _ = region.coords(b)
    f.colors[b] = np.where(q >= 1, OPEN, CLOSED)
    return f


def explore_half_plane(mesh: float, stop: StopRule = StopRule(), seed: int = 0,
                       field: SiteField | None = None, record: bool = True,
                       chunk: int = 1 << 16):
    """Percolation exploration interface from 0 in the upper half-plane.

    Boundary sites on ``x >= 0`` are open and those on ``x < 0`` closed; the
    walk keeps closed sites on its left and open sites on its right, and
    colours interior sites on first contact.  Returns ``(path, field)``;
    ``path.status`` is ``"ball"``, ``"radius"`` or ``"step_cap"``.
    A pre-coloured ``field`` (from the same region) may be supplied.
    """
    if not (0 < mesh <= 0.125):
        raise ValueError("mesh must lie in (0, 1/8]")
    if field is None:
        field = _half_plane_field(mesh, stop.max_radius, seed)
    region = field.region
    eps = -1.0 if stop.ball_radius is None else float(stop.ball_radius)
    chunk = int(chunk) if record else 0
    ls, rs = [], []
    lq, lr, rq, rr = 0, -1, 1, -1
    steps = 0
    min_d = math.inf
    while True:
        out_l = np.empty((chunk, 2), dtype=np.int64)
        out_r = np.empty((chunk, 2), dtype=np.int64)
        n, status, steps, lq, lr, rq, rr, min_d = _explore(
            field.colors, region.mask, np.uint64(field.key), region.q0, region.r0,
            region.nq, mesh, region.offset.imag, lq, lr, rq, rr,
            stop.ball_center.real, stop.ball_center.imag, eps, stop.max_radius, steps,
            stop.max_steps, _DIR_TABLE, _OFF_Q, _OFF_R, out_l, out_r, record, min_d)
        ls.append(out_l[:n])
        rs.append(out_r[:n])
        if status != BUFFER:
            break
    left = np.concatenate(ls) if record else np.empty((0, 2), dtype=np.int64)
    right = np.concatenate(rs) if record else np.empty((0, 2), dtype=np.int64)
    pts = 0.5 * (region.position(left[:, 0], left[:, 1])
                 + region.position(right[:, 0], right[:, 1])) if record else \
        np.empty(0, dtype=complex)
    path = InterfacePath(np.asarray(pts, dtype=complex), left, right,
                         "closed-left/open-right", STATUS_NAMES[status], steps, min_d)
    return path, field


def disk_hit_trial(epsilons, delta: float, seed: int, center: complex = 1j,
                   max_radius: float = 4.0, max_steps: int = 10_000_000) -> np.ndarray:
    """Did the exploration come within each ``epsilon`` of ``center``?

    One walk serves all radii: it runs until the smallest ball is hit or the
    walk reaches ``max_radius``.  Raises ``RuntimeError`` on step-cap
    exhaustion.
    """
    eps = np.asarray(epsilons, dtype=float)
    stop = StopRule(max_radius=max_radius, ball_center=center,
                    ball_radius=float(eps.min()), max_steps=max_steps)
    path, _ = explore_half_plane(delta, stop, seed, record=False)
    if path.status == "step_cap":
        raise RuntimeError(f"exploration exhausted its {max_steps} step cap")
    return path.min_distance < eps


# --------------------------------------------------------------------------
# the three events for two balls


def _two_ball_regions(z, z2, epsilon, delta, box):
    d = abs(z - z2)
    if d == 0:
        raise ValueError("the two centres coincide")
    if not (0 < epsilon < d / 2):
        raise ValueError("need 0 < epsilon < |z - z'|/2")
    half = d / 2
    for c in (z, z2):
        if c.imag - half < delta:
            raise ValueError("the balls B(z, |z-z'|/2) must lie in the upper half-plane")
    if half - epsilon < delta:
        raise ValueError("annuli thinner than the mesh")
    mid = 0.5 * (z + z2)
    off = _half_plane_offset(delta)
    ra = annulus_region(epsilon, delta, z, half, strict_outer=True, offset=off)
    rb = annulus_region(epsilon, delta, z2, half, strict_outer=True, offset=off)
    # (iii): outside B(mid, d), inside the truncation box, from the circle to row 0
    if box < abs(mid) + d + 2 * delta:
        raise ValueError("truncation box does not contain the middle ball")
    q0, r0, nq, nr = _window(delta, off, -box, box, -delta, box)
    pos = _grid_positions(delta, off, q0, r0, nq, nr)
    r = np.repeat(np.arange(r0, r0 + nr), nq)
    rho = np.abs(pos - mid)
    inside = (r >= 0) & (np.abs(pos.real) <= box) & (pos.imag <= box) & (rho >= d)
    mask = np.zeros(pos.size, dtype=np.uint8)
    mask[inside] |= IN_REGION
    mask[inside & (rho < d + delta)] |= SRC_A
    mask[inside & (r == 0)] |= DST_A
    mask = _finish(mask, nq, nr)
    rc = LatticeRegion(delta, q0, r0, nq, nr, mask, off, {"inner": SRC_A, "axis": DST_A},
                       f"half-plane outside B({mid}, {d})")
    return ra, rb, rc


def _site_labels(region):
    q, r = region.coords(region.sites())
    return set(zip(q.tolist(), r.tolist()))


def two_ball_event_trial(z: complex, z2: complex, epsilon: float, delta: float,
                         seed: int, box: float = 6.0, check_disjoint: bool = False):
    """Indicators of the three two-colour crossing events for two balls.

    (i) around ``z`` from radius ``epsilon`` to ``|z - z'|/2``; (ii) the same
    around ``z'``; (iii) from the circle of radius ``|z - z'|`` about the
    midpoint to the real axis, outside that circle (within ``|x| <= box``,
    ``y <= box``).  All three use one field, on pairwise disjoint sites.
    """
    z = complex(z)
    z2 = complex(z2)
    regions = _cached_two_ball(z, z2, float(epsilon), float(delta), float(box))
    if check_disjoint:
        sets = [_site_labels(rg) for rg in regions]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValueError("regions overlap")
    out = []
    for rg in regions:
        two, _ = region_arm_events(rg, [seed], three=False)
        out.append(bool(two[0]))
    return tuple(out)


@lru_cache(maxsize=8)
def _cached_two_ball(z, z2, epsilon, delta, box):
    return _two_ball_regions(z, z2, epsilon, delta, box)


def two_ball_events(z, z2, epsilon, delta, keys, box: float = 6.0):
    """Batch version of :func:`two_ball_event_trial`: a ``(n, 3)`` boolean array."""
    regions = _cached_two_ball(complex(z), complex(z2), float(epsilon), float(delta),
                               float(box))
    keys = np.asarray(keys, dtype=np.uint64).ravel()
    return np.stack([region_arm_events(rg, keys, three=False)[0] for rg in regions],
                    axis=1)
