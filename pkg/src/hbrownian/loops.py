"""Closed polylines carried by the stochastic flow under common noise.

Every point of one loop realization sees the same Brownian increments, so the
loop moves as the image of the initial curve under one random diffeomorphism.
Independent realizations are batched together: all points live in one flat
array with an owner index, grouped by realization in loop order.
"""

import csv
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import rng as rngmod
from .errors import DomainError, IntegrationError, NotApplicable
from .integrator import CHUNK, n_steps_for, positions_step
from .montecarlo import _grid, _Result, run_chunks
from .stats import EnsembleStats

MIN_POINTS = 16
MAX_REFINE_PASSES = 30
REALIZATION_CHUNK = 32


@dataclass
class LoopState:
    """Ordered closed polyline on M (the last point joins the first)."""

    points: np.ndarray
    t: float = 0.0
    refinement_threshold: float = math.inf

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or len(self.points) < MIN_POINTS:
            raise DomainError(f"a loop needs at least {MIN_POINTS} points")

    @property
    def segments(self):
        return np.linalg.norm(np.roll(self.points, -1, axis=0) - self.points, axis=-1)

    @property
    def length(self):
        return float(math.fsum(self.segments))

    @property
    def n_points(self):
        return len(self.points)


def default_threshold(M):
    """a / 32 for the manifold's injectivity bound (inf when there is none)."""
    try:
        return M.injectivity_radius_bound() / 32
    except NotApplicable:
        return math.inf


def make_loop(M, shape="equator", count=256):
    """Catalog circles: ``equator`` / ``latitude:z`` on spheres, ``waist`` /
    ``waist:z`` on cylinders, ``circle:r`` or ``circle:r,cx`` in the plane."""
    if count < MIN_POINTS:
        raise DomainError(f"a loop needs at least {MIN_POINTS} points")
    name, _, arg = shape.partition(":")
    args = [float(a) for a in arg.split(",") if a.strip()]
    th = np.arange(count) * (2 * math.pi / count)
    c, s = np.cos(th), np.sin(th)
    kind = getattr(M, "name", "")
    if name in ("equator", "latitude") and kind in ("sphere", "ellipsoid") and M.ambient_dim == 3:
        z0 = args[0] if args else 0.0
        if kind == "sphere":
            r = M.radius
            if abs(z0) >= r:
                raise DomainError("latitude must lie strictly inside (-r, r)")
            rho = math.sqrt(r * r - z0 * z0)
            pts = np.stack([rho * c, rho * s, np.full(count, z0)], -1)
        else:
            a, b, cz = M.axes
            k = math.sqrt(max(1 - (z0 / cz) ** 2, 0.0))
            pts = np.stack([a * k * c, b * k * s, np.full(count, z0)], -1)
    elif name == "equator" and kind == "sphere" and M.ambient_dim == 2:
        pts = M.radius * np.stack([c, s], -1)
    elif name == "waist" and kind == "cylinder":
        z0 = args[0] if args else 0.0
        pts = np.stack([M.radius * c, M.radius * s, np.full(count, z0)], -1)
    elif name == "circle" and kind == "flat" and M.dim == 2:
        r = args[0] if args else 1.0
        cx = args[1] if len(args) > 1 else 0.0
        pts = np.stack([cx + r * c, r * s], -1)
    else:
        raise DomainError(f"no catalog loop {shape!r} on {M.describe()}")
    return LoopState(M.check_point(pts), 0.0, default_threshold(M))


# -- batched polyline bookkeeping ------------------------------------------------------
def _successor(owner):
    """Index of the next point along each loop (wrapping within an owner)."""
    P = len(owner)
    nxt = np.arange(1, P + 1)
    last = np.flatnonzero(np.append(owner[1:] != owner[:-1], True))
    first = np.concatenate([[0], last[:-1] + 1])
    nxt[last] = first
    return nxt


def _segments(pts, owner):
    return np.linalg.norm(pts[_successor(owner)] - pts, axis=-1)


def refine(S, pts, owner, threshold):
    """Insert retracted chord midpoints until no segment exceeds ``threshold``."""
    if not math.isfinite(threshold):
        return pts, owner
    for _ in range(MAX_REFINE_PASSES):
        nxt = _successor(owner)
        seg = np.linalg.norm(pts[nxt] - pts, axis=-1)
        long = np.flatnonzero(seg > threshold)
        if len(long) == 0:
            return pts, owner
        mid = 0.5 * (pts[long] + pts[nxt[long]])
        proj = S.retract(mid)
        if np.any(np.linalg.norm(proj - mid, axis=-1) >= threshold / 2):
            raise IntegrationError("midpoint projection moved farther than half the refinement threshold")
        pts = np.insert(pts, long + 1, proj, axis=0)
        owner = np.insert(owner, long + 1, owner[long])
    raise IntegrationError("loop refinement did not converge")


def _lengths(pts, owner, R):
    return np.bincount(owner, weights=_segments(pts, owner), minlength=R)


@dataclass
class LoopRun:
    """Per-realization records on the time grid (arrays shaped (R, G))."""

    times: np.ndarray
    lengths: np.ndarray
    point_counts: np.ndarray
    contractible: np.ndarray
    min_length: np.ndarray  # running minimum over every step, (R, G)
    clouds: list = None  # optional [(t, points, owner)] snapshots

    def merge(self, other):
        cat = lambda a, b: np.concatenate([a, b], axis=0)  # noqa: E731
        clouds = None if self.clouds is None else self.clouds + (other.clouds or [])
        return LoopRun(
            self.times,
            cat(self.lengths, other.lengths),
            cat(self.point_counts, other.point_counts),
            cat(self.contractible, other.contractible),
            cat(self.min_length, other.min_length),
            clouds,
        )


def contractibility_event(loop, M):
    """Length test: a loop shorter than half the injectivity radius is contractible."""
    a = M.injectivity_radius_bound()
    length = loop.length if isinstance(loop, LoopState) else float(loop)
    return length < 0.5 * a


def _half_injectivity(S):
    try:
        return 0.5 * S.manifold.injectivity_radius_bound()
    except NotApplicable:
        return None


def evolve_loops(S, loop0, T, dt, seed, realizations, record_every=1, keep_clouds=False, threshold=None):
    """Advance one copy of ``loop0`` per realization index under its own noise."""
    if not T > 0 or not dt > 0:
        raise DomainError("T and dt must be positive")
    realizations = list(realizations)
    R = len(realizations)
    thr = loop0.refinement_threshold if threshold is None else threshold
    half_a = _half_injectivity(S)
    K = loop0.n_points
    pts = np.tile(loop0.points, (R, 1))
    owner = np.repeat(np.arange(R), K)
    pts, owner = refine(S, pts, owner, thr)
    streams = [rngmod.IncrementStream(seed, r, S.noise_dim, dt) for r in realizations]

    def contractible(lengths):
        return np.zeros(R, bool) if half_a is None else lengths < half_a

    lengths = _lengths(pts, owner, R)
    run_min = lengths.copy()
    event = contractible(lengths)
    rec = {"t": [0.0], "len": [lengths], "cnt": [np.bincount(owner, minlength=R)], "ev": [event.copy()], "min": [run_min.copy()]}
    clouds = [(0.0, pts.copy(), owner.copy())] if keep_clouds else None
    n = n_steps_for(T, dt)
    done = 0
    while done < n:
        k = min(CHUNK, n - done)
        dBs = rngmod.batch_increments(streams, k)
        for j in range(k):
            with np.errstate(all="ignore"):
                pts = positions_step(S, pts, dBs[owner, j], dt)
            done += 1
            if not np.all(np.isfinite(pts)):
                raise IntegrationError("loop point became non-finite", done * dt)
            pts, owner = refine(S, pts, owner, thr)
            lengths = _lengths(pts, owner, R)
            run_min = np.minimum(run_min, lengths)
            event |= contractible(lengths)
            if done % record_every == 0 or done == n:
                rec["t"].append(done * dt)
                rec["len"].append(lengths)
                rec["cnt"].append(np.bincount(owner, minlength=R))
                rec["ev"].append(event.copy())
                rec["min"].append(run_min.copy())
                if keep_clouds:
                    clouds.append((done * dt, pts.copy(), owner.copy()))
    return LoopRun(
        np.array(rec["t"]),
        np.stack(rec["len"], 1),
        np.stack(rec["cnt"], 1),
        np.stack(rec["ev"], 1),
        np.stack(rec["min"], 1),
        clouds,
    )


def evolve_loop(S, loop0, T, dt, seed, realization=0, record_every=1):
    """Time series of LoopState for a single realization."""
    run = evolve_loops(S, loop0, T, dt, seed, [realization], record_every, keep_clouds=True)
    return [LoopState(p, t, loop0.refinement_threshold) for t, p, _ in run.clouds]


def _loop_chunk(S, loop0, T, dt, seed, every, start, stop):
    return evolve_loops(S, loop0, T, dt, seed, range(start, stop), every)


@dataclass
class LengthCurve(_Result):
    time_grid: list
    mean_length: list
    ci_lo: list
    ci_hi: list
    contractible_fraction: list
    min_length: float
    initial_length: float
    n_realizations: int
    max_points: int
    half_injectivity: float = None
    notes: list = field(default_factory=list)

    def csv_rows(self):
        header = ["t", "mean_length", "ci_lo", "ci_hi", "contractible_fraction"]
        rows = [
            [t, self.mean_length[k], self.ci_lo[k], self.ci_hi[k], self.contractible_fraction[k]]
            for k, t in enumerate(self.time_grid)
        ]
        return header, rows


def mean_length_curve(S, loop0, T, n_realizations, seed, dt=1e-2, grid=0.1, workers=1, return_run=False):
    """E length(sigma_t) with 95% CIs and the cumulative contractibility fraction."""
    if n_realizations < 2:
        raise DomainError("need at least two realizations")
    every, _ = _grid(T, dt, grid)
    job = partial(_loop_chunk, S, loop0, T, dt, seed, every)
    run = run_chunks(job, n_realizations, workers, REALIZATION_CHUNK)
    st = EnsembleStats(run.lengths.shape[1]).add(run.lengths)
    mean, lo, hi = st.confidence()
    half_a = _half_injectivity(S)
    curve = LengthCurve(
        time_grid=run.times.tolist(),
        mean_length=mean.tolist(),
        ci_lo=lo.tolist(),
        ci_hi=hi.tolist(),
        contractible_fraction=(run.contractible.sum(0) / n_realizations).tolist(),
        min_length=float(run.min_length.min()),
        initial_length=loop0.length,
        n_realizations=n_realizations,
        max_points=int(run.point_counts.max()),
        half_injectivity=half_a,
        notes=[] if half_a is not None else ["no injectivity bound: contractibility not assessed"],
    )
    return (curve, run) if return_run else curve


def write_loop_csv(run, path, realization=0):
    """time, length, contractible flag, point count for one realization."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "length", "contractible", "n_points"])
        for k, t in enumerate(run.times):
            w.writerow(
                [
                    f"{float(t):.17g}",
                    f"{float(run.lengths[realization, k]):.17g}",
                    int(run.contractible[realization, k]),
                    int(run.point_counts[realization, k]),
                ]
            )

