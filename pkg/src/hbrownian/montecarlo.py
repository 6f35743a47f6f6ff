"""Ensemble estimators: moments of the derivative flow and their exponents,
exponential functionals of the position path, the two-sided curvature
sandwich, positivity rates, h-volume and the integrability diagnostic.

Paths are processed in fixed chunks of ``CHUNK_PATHS`` consecutive indices.
A chunk is always the same batch whatever the worker count, and its
statistics merge exactly, so one and many workers give identical bits.
"""

import json
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np
from scipy.special import roots_legendre

from . import rng as rngmod
from .curvature import hp_extrema, rho_h_values
from .errors import DomainError, EstimationError, NotApplicable
from .integrator import IntegratorConfig, integrate_functionals, simulate_batch
from .stats import EnsembleStats, fit_exponent, integrability_integral

CHUNK_PATHS = 256
CENSOR_LIMIT = 0.01
EXP_LIMIT = 700.0


# -- parallel plumbing --------------------------------------------------------------
def path_chunks(n_paths, size=CHUNK_PATHS):
    return [(a, min(a + size, n_paths)) for a in range(0, n_paths, size)]


def run_chunks(job, n_paths, workers=1, size=CHUNK_PATHS):
    """Apply ``job(start, stop)`` to every chunk and merge results in chunk order."""
    chunks = path_chunks(n_paths, size)
    if workers <= 1 or len(chunks) == 1:
        parts = [job(a, b) for a, b in chunks]
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            parts = list(pool.map(job, *zip(*chunks)))
    out = parts[0]
    for part in parts[1:]:
        out = _merge(out, part)
    return out


def _merge(a, b):
    if isinstance(a, dict):
        return {k: _merge(a[k], b[k]) for k in a}
    return a.merge(b)


def _grid(T, dt, grid):
    """Steps per record and the number of records for horizon T."""
    if not T > 0 or not dt > 0 or not grid > 0:
        raise DomainError("T, dt and grid spacing must be positive")
    every = max(1, int(round(grid / dt)))
    if abs(every * dt - grid) > 1e-9 * grid and grid > dt:
        raise DomainError("grid spacing must be a multiple of dt")
    steps = int(math.ceil(T / dt - 1e-9))
    if steps % every:
        raise DomainError("horizon must be a multiple of the grid spacing")
    return every, steps // every + 1


def _to_builtin(obj):
    if isinstance(obj, dict):
        return {k: _to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_builtin(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class _Result:
    schema_version = 1

    def to_dict(self):
        d = _to_builtin(asdict(self))
        d["schema_version"] = self.schema_version
        d["kind"] = type(self).__name__
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# -- moments --------------------------------------------------------------------------
def initial_vector(S, x0, seed, path):
    """v0 uniform on the unit tangent sphere at x0, keyed by (seed, path)."""
    g = rngmod.initial_generator(seed, path)
    for _ in range(100):
        v = S.project_tangent(x0, g.standard_normal(len(x0)))
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            return v / nv
    raise EstimationError("could not draw a tangent direction")


def _streams(S, seed, start, stop, dt, copies=1):
    return [rngmod.IncrementStream(seed, i, S.noise_dim, dt) for i in range(start, stop) for _ in range(copies)]


def _moment_chunk(S, x0, orders, T, dt, every, seed, v0_scale, frame_sup, radius, start, stop):
    N = stop - start
    cfg = IntegratorConfig(dt=dt, functionals=False, explosion_radius=radius)
    v0 = np.stack([initial_vector(S, x0, seed, i) for i in range(start, stop)]) * v0_scale
    xs = np.tile(x0, (N, 1))
    if frame_sup:
        E = S.manifold.tangent_basis(x0) * v0_scale
        n = len(E)
        xs = np.tile(x0, (N * (n + 1), 1))
        v0 = np.concatenate([v0[:, None, :], np.broadcast_to(E, (N, n, len(x0)))], axis=1).reshape(-1, len(x0))
        tr = simulate_batch(S, xs, v0, T, cfg, _streams(S, seed, start, stop, dt, n + 1), every)
        vn = tr.vnorm.reshape(len(tr.times), N, n + 1)
        censored = ~tr.alive.reshape(len(tr.times), N, n + 1)[..., 0].T
        single, frame = vn[..., 0].T, np.max(vn[..., 1:], axis=-1).T
    else:
        tr = simulate_batch(S, xs, v0, T, cfg, _streams(S, seed, start, stop, dt), every)
        single, censored, frame = tr.vnorm.T, ~tr.alive.T, None
    out = {}
    for p in orders:
        st = {"single": EnsembleStats(single.shape[1]).add(single**p, censored)}
        if frame is not None:
            st["frame"] = EnsembleStats(frame.shape[1]).add(frame**p, censored)
        out[float(p)] = st
    return out


@dataclass
class MomentEstimate(_Result):
    p: float
    time_grid: list
    mean_vp: list
    ci_lo: list
    ci_hi: list
    n_paths: int
    n_censored: int
    fitted_mu: float
    fitted_mu_ci: tuple
    fit_window: float
    frame_mean_vp: list = None
    frame_ci_lo: list = None
    frame_ci_hi: list = None
    frame_fitted_mu: float = None
    frame_fitted_mu_ci: tuple = None
    censored_fraction: float = 0.0
    unreliable: bool = False
    warnings: list = field(default_factory=list)

    def csv_rows(self):
        header = ["t", "mean_vp", "ci_lo", "ci_hi"]
        if self.frame_mean_vp is not None:
            header += ["frame_mean_vp", "frame_ci_lo", "frame_ci_hi"]
        rows = []
        for k, t in enumerate(self.time_grid):
            row = [t, self.mean_vp[k], self.ci_lo[k], self.ci_hi[k]]
            if self.frame_mean_vp is not None:
                row += [self.frame_mean_vp[k], self.frame_ci_lo[k], self.frame_ci_hi[k]]
            rows.append(row)
        return header, rows


def _moment_from_stats(p, times, st, n_paths, fit_window):
    single = st["single"]
    censored = int(single.censored[-1])
    if censored == n_paths:
        raise EstimationError("every path was censored")
    mean, lo, hi = single.confidence()
    warnings = []
    if single.heavy_tailed():
        warnings.append(f"sample kurtosis of |v|^{p:g} exceeds {100:g}; normal-approximation CIs are doubtful")
    frac = censored / n_paths
    if frac > CENSOR_LIMIT:
        warnings.append(f"{frac:.2%} of paths censored by the explosion cutoff")
    mu, mu_ci = fit_exponent(times, mean, fit_window)
    est = MomentEstimate(
        p=p,
        time_grid=times.tolist(),
        mean_vp=mean.tolist(),
        ci_lo=lo.tolist(),
        ci_hi=hi.tolist(),
        n_paths=n_paths,
        n_censored=censored,
        fitted_mu=mu,
        fitted_mu_ci=mu_ci,
        fit_window=fit_window,
        censored_fraction=frac,
        unreliable=frac > CENSOR_LIMIT,
        warnings=warnings,
    )
    if "frame" in st:
        fm, flo, fhi = st["frame"].confidence()
        est.frame_mean_vp, est.frame_ci_lo, est.frame_ci_hi = fm.tolist(), flo.tolist(), fhi.tolist()
        est.frame_fitted_mu, est.frame_fitted_mu_ci = fit_exponent(times, fm, fit_window)
        est.warnings.append(
            "frame maximum over an orthonormal initial frame; it lies between |T_xF_t| / sqrt(n) and |T_xF_t|"
        )
    return est


def estimate_moments(
    S,
    x0,
    orders,
    T,
    n_paths,
    seed,
    dt=1e-3,
    grid=0.1,
    fit_window=0.5,
    frame_sup=False,
    v0_scale=1.0,
    workers=1,
    explosion_radius=1e6,
):
    """MomentEstimate for several orders p from one ensemble of paths."""
    x0 = S.check_point(np.asarray(x0, dtype=float))
    if n_paths < 2:
        raise DomainError("need at least two paths")
    if not all(p >= 1 for p in orders):
        raise DomainError("moment orders must be >= 1")
    every, count = _grid(T, dt, grid)
    times = np.arange(count) * (every * dt)
    job = partial(_moment_chunk, S, x0, tuple(orders), T, dt, every, seed, v0_scale, frame_sup, explosion_radius)
    merged = run_chunks(job, n_paths, workers)
    return [_moment_from_stats(float(p), times, merged[float(p)], n_paths, fit_window) for p in orders]


def estimate_moment(S, x0, p, T, n_paths, seed, **kw):
    """Ensemble estimate of E|v_t|^p on a time grid with a fitted exponent."""
    return estimate_moments(S, x0, (p,), T, n_paths, seed, **kw)[0]


# -- exponential functionals ---------------------------------------------------------
def pointwise_functional(S, tag, p=1.0):
    """Batched x -> f(x) for a functional tag or a callable."""
    if callable(tag):
        return tag
    if tag == "h_p":
        return lambda x: hp_extrema(S, x, p)[0]
    if tag in ("h_p_lower", "h_lower_p"):
        return lambda x: hp_extrema(S, x, p)[1]
    if tag == "-h_p":
        return lambda x: -hp_extrema(S, x, p)[0]
    if tag == "rho_h":
        return lambda x: rho_h_values(S, x)
    if isinstance(tag, str) and tag.startswith("const:"):
        c = float(tag.split(":", 1)[1])
        return lambda x: np.full(np.shape(x)[:-1], c)
    raise DomainError(f"unknown functional {tag!r}")


def _exp_values(integral, sign, alive):
    """exp(sign * integral) with overflow and explosion censoring."""
    expo = sign * integral
    over = expo > EXP_LIMIT
    return np.exp(np.minimum(expo, EXP_LIMIT)), over | ~alive


def _functional_chunk(S, x0, tags, p, signs, T, dt, every, seed, offset, start, stop):
    N = stop - start
    start, stop = start + offset, stop + offset
    fns = {f"f{i}": pointwise_functional(S, t, p) for i, t in enumerate(tags)}
    times, ints, alive = integrate_functionals(S, np.tile(x0, (N, 1)), T, dt, _streams(S, seed, start, stop, dt), fns, every)
    out = {}
    for i, sign in enumerate(signs):
        vals, cens = _exp_values(ints[f"f{i}"].T, sign, alive.T)
        out[f"e{i}"] = EnsembleStats(vals.shape[1]).add(vals, cens)
        out[f"i{i}"] = EnsembleStats(vals.shape[1]).add(ints[f"f{i}"].T, ~alive.T)
    return out


@dataclass
class FunctionalEstimate(_Result):
    functional: str
    sign: float
    time_grid: list
    mean: list
    ci_lo: list
    ci_hi: list
    n_paths: int
    n_censored: int
    fitted_rate: float
    fitted_rate_ci: tuple
    jensen_ok: bool
    censored_fraction: float = 0.0
    unreliable: bool = False
    warnings: list = field(default_factory=list)


def _functional_from_stats(name, sign, times, est, integ, n_paths, fit_window):
    cens = int(est.censored[-1])
    if cens == n_paths:
        raise EstimationError("every path was censored")
    mean, lo, hi = est.confidence()
    warnings = []
    if np.any(est.censored > integ.censored):
        first = int(np.argmax(est.censored > integ.censored))
        warnings.append(f"exponent overflow censored paths from t={times[first]:.6g}")
    if est.heavy_tailed():
        warnings.append("sample kurtosis exceeds 100; normal-approximation CIs are doubtful")
    jensen = bool(np.all(hi >= np.exp(sign * integ.mean()) * (1 - 1e-12)))
    rate, rate_ci = fit_exponent(times, mean, fit_window)
    frac = cens / n_paths
    return FunctionalEstimate(
        functional=name,
        sign=sign,
        time_grid=times.tolist(),
        mean=mean.tolist(),
        ci_lo=lo.tolist(),
        ci_hi=hi.tolist(),
        n_paths=n_paths,
        n_censored=cens,
        fitted_rate=rate,
        fitted_rate_ci=rate_ci,
        jensen_ok=jensen,
        censored_fraction=frac,
        unreliable=frac > CENSOR_LIMIT,
        warnings=warnings,
    )


def exponential_functional(
    S, x0, f, sign, T, n_paths, seed, p=1.0, dt=1e-3, grid=0.1, fit_window=0.5, workers=1, path_offset=0
):
    """Estimate E exp(sign * int_0^t f(x_s) ds) along the position path.

    Paths use increment keys ``path_offset .. path_offset + n_paths - 1``.
    """
    x0 = S.check_point(np.asarray(x0, dtype=float))
    if n_paths < 2:
        raise DomainError("need at least two paths")
    every, count = _grid(T, dt, grid)
    times = np.arange(count) * (every * dt)
    job = partial(_functional_chunk, S, x0, (f,), p, (float(sign),), T, dt, every, seed, path_offset)
    st = run_chunks(job, n_paths, workers)
    name = f if isinstance(f, str) else getattr(f, "__name__", "user")
    return _functional_from_stats(name, float(sign), times, st["e0"], st["i0"], n_paths, fit_window)


# -- sandwich -------------------------------------------------------------------------
class _ExtremaCache:
    """Serves h_p and h_p_lower from one optimizer call per point set."""

    def __init__(self, S, p):
        self.S, self.p, self.key, self.vals = S, p, None, None

    def _get(self, x):
        if self.key is not x:
            self.key, self.vals = x, hp_extrema(self.S, x, self.p)
        return self.vals

    def upper(self, x):
        return self._get(x)[0]

    def lower(self, x):
        return self._get(x)[1]


def _sandwich_chunk(S, x0, p, T, dt, seed, start, stop):
    N = stop - start
    n = S.dim
    E = S.manifold.tangent_basis(x0)
    cfg = IntegratorConfig(dt=dt, p=p, functionals=False, track_hp=False)
    xs = np.tile(x0, (N * n, 1))
    v0 = np.tile(E, (N, 1))
    tr = simulate_batch(S, xs, v0, T, cfg, _streams(S, seed, start, stop, dt, n), n_steps(T, dt))
    frame = np.max(tr.vnorm[-1].reshape(N, n), axis=-1) ** p
    alive = tr.alive[-1].reshape(N, n)[:, 0]
    pair = _ExtremaCache(S, p)
    fns = {"hp": pair.upper, "hpl": pair.lower}
    _, ints, alive_x = integrate_functionals(S, np.tile(x0, (N, 1)), T, dt, _streams(S, seed, start, stop, dt), fns, n_steps(T, dt))
    up, cu = _exp_values(0.5 * ints["hp"][-1], 1.0, alive_x[-1])
    low, cl = _exp_values(0.5 * ints["hpl"][-1], 1.0, alive_x[-1])
    return {
        "middle": EnsembleStats(1).add(frame[:, None], ~alive[:, None]),
        "upper": EnsembleStats(1).add(n * up[:, None], cu[:, None]),
        "lower": EnsembleStats(1).add(low[:, None], cl[:, None]),
    }


def n_steps(T, dt):
    return int(math.ceil(T / dt - 1e-9))


@dataclass
class SandwichResult(_Result):
    p: float
    t: float
    n: int
    lower: float
    lower_ci: tuple
    middle: float
    middle_ci: tuple
    upper: float
    upper_ci: tuple
    passed: bool
    n_paths: int
    n_censored: int
    unreliable: bool
    notes: list = field(default_factory=list)


def sandwich_check(S, x0, p, t, n_paths, seed, dt=1e-3, workers=1):
    """Lower E exp(1/2 int h_p_lower), middle E|T_xF_t|^p (frame maximum),
    upper n E exp(1/2 int h_p) at time t, with the overlap verdict."""
    x0 = S.check_point(np.asarray(x0, dtype=float))
    if n_paths < 2:
        raise DomainError("need at least two paths")
    if not t > 0:
        raise DomainError("t must be positive")
    st = run_chunks(partial(_sandwich_chunk, S, x0, float(p), t, dt, seed), n_paths, workers)
    vals = {}
    for k in ("lower", "middle", "upper"):
        m, lo, hi = st[k].confidence()
        vals[k] = (float(m[0]), (float(lo[0]), float(hi[0])))
    cens = max(int(st[k].censored[0]) for k in st)
    passed = vals["middle"][1][1] >= vals["lower"][1][0] and vals["middle"][1][0] <= vals["upper"][1][1]
    notes = [
        f"upper constant n = dim M = {S.dim}",
        "middle uses the maximum of |v_t|^p over an orthonormal initial frame",
    ]
    unreliable = cens / n_paths > CENSOR_LIMIT
    if unreliable:
        notes.append(f"{cens} of {n_paths} paths censored")
    return SandwichResult(
        p=float(p),
        t=float(t),
        n=S.dim,
        lower=vals["lower"][0],
        lower_ci=vals["lower"][1],
        middle=vals["middle"][0],
        middle_ci=vals["middle"][1],
        upper=vals["upper"][0],
        upper_ci=vals["upper"][1],
        passed=bool(passed),
        n_paths=n_paths,
        n_censored=cens,
        unreliable=unreliable,
        notes=notes,
    )


# -- positivity ----------------------------------------------------------------------
@dataclass
class PositivityResult(_Result):
    functional: str
    points: list
    rates: list
    rate_cis: list
    sup_rate: float
    sup_rate_ci: tuple
    strongly_positive: bool
    n_paths: int


def stochastic_positivity_rate(S, region_sample, f, T, n_paths, seed, p=1.0, dt=1e-3, grid=0.1, fit_window=0.5, workers=1):
    """Decay rate of E exp(-1/2 int f(x_s) ds) from each sample point.

    Point k uses path keys k * n_paths ... (k + 1) * n_paths - 1.
    """
    pts = np.atleast_2d(np.asarray(region_sample, dtype=float))
    if len(pts) == 0:
        raise DomainError("region sample is empty")
    pts = S.check_point(pts)
    rates, cis = [], []
    for k, x in enumerate(pts):
        est = exponential_functional(
            S, x, f, -0.5, T, n_paths, seed, p=p, dt=dt, grid=grid, fit_window=fit_window, workers=workers,
            path_offset=k * n_paths,
        )
        rates.append(est.fitted_rate)
        cis.append(est.fitted_rate_ci)
    j = int(np.argmax(rates))
    name = f if isinstance(f, str) else getattr(f, "__name__", "user")
    return PositivityResult(
        functional=name,
        points=pts.tolist(),
        rates=rates,
        rate_cis=cis,
        sup_rate=rates[j],
        sup_rate_ci=cis[j],
        strongly_positive=bool(rates[j] < 0 and cis[j][1] < 0),
        n_paths=n_paths,
    )


# -- integrability and volume ---------------------------------------------------------
def endpoint_rate_bound(times, ci_lo, ci_hi, window_fraction):
    """Largest decay rate compatible with the pointwise CIs at the ends of the fit window.

    The grid values of a sample-mean curve share their paths, so their errors
    are strongly correlated and the regression CI alone is too narrow.
    """
    start = int(math.floor(len(times) * (1 - window_fraction)))
    span = times[-1] - times[start]
    if not (ci_lo[start] > 0 and ci_hi[-1] > 0 and span > 0):
        return math.inf
    return float((math.log(ci_hi[-1]) - math.log(ci_lo[start])) / span)


def integrability_diagnostic(estimate):
    """int_0^inf E|T_xF_t| dt from a MomentEstimate (observed grid + fitted tail).

    The tail is only trusted when both the regression CI and the endpoint
    bound put the rate below zero.
    """
    times = np.asarray(estimate.time_grid, dtype=float)
    bound = endpoint_rate_bound(times, estimate.ci_lo, estimate.ci_hi, estimate.fit_window)
    lo, hi = estimate.fitted_mu_ci
    return integrability_integral(times, np.asarray(estimate.mean_vp), estimate.fitted_mu, (lo, max(hi, bound)))


@dataclass
class VolumeResult(_Result):
    value: float
    diverged: bool
    radii: list = field(default_factory=list)
    shells: list = field(default_factory=list)
    note: str = ""


def _panels(lo, hi, R, R0):
    """Integration panels for one chart coordinate truncated at radius R."""
    if lo is not None and hi is not None:
        return [(lo, hi)]
    edges = [R0 * 2.0**k for k in range(int(round(math.log2(R / R0))) + 1)]
    if lo is None and hi is None:
        out = [(-R0, R0)]
        out += [(a, b) for a, b in zip(edges, edges[1:])]
        out += [(-b, -a) for a, b in zip(edges, edges[1:])]
        return out
    if lo is not None:
        base = [(lo, lo + R0)] + [(lo + a, lo + b) for a, b in zip(edges, edges[1:])]
        return base
    return [(hi - R0, hi)] + [(hi - b, hi - a) for a, b in zip(edges, edges[1:])]


def _tensor_integral(f, panels_u, panels_w, nodes):
    z, w = roots_legendre(nodes)

    def rule(panels):
        pts = np.concatenate([0.5 * (b - a) * z + 0.5 * (a + b) for a, b in panels])
        wts = np.concatenate([0.5 * (b - a) * w for a, b in panels])
        return pts, wts

    u, wu = rule(panels_u)
    v, wv = rule(panels_w)
    U, V = np.meshgrid(u, v, indexing="ij")
    vals = f(U, V)
    return math.fsum((vals * np.outer(wu, wv)).ravel())


def h_volume(M, h, resolution=64, R0=1.0, max_doublings=12, tol=1e-13):
    """int_M exp(2h) over a 2D chart by tensor Gauss-Legendre quadrature.

    Unbounded chart directions are truncated at radii R0 * 2^k; the integral
    is accepted once a shell adds less than ``tol`` relative, and declared
    divergent once shell contributions stop decreasing under doubling.
    """
    chart = M.chart
    if chart is None:
        raise NotApplicable(f"{M.describe()} has no 2D chart quadrature")

    def integrand(u, w):
        x = chart.param(u, w)
        with np.errstate(over="ignore"):
            return np.exp(2 * h.value(x)) * chart.area(u, w)

    (lu, hu), (lw, hw) = chart.bounds
    bounded = all(b is not None for b in (lu, hu, lw, hw))
    if bounded:
        val = _tensor_integral(integrand, [(lu, hu)], [(lw, hw)], resolution)
        return VolumeResult(val, False, note="compact chart")
    radii, values, shells = [], [], []
    for k in range(max_doublings + 1):
        R = R0 * 2.0**k
        val = _tensor_integral(integrand, _panels(lu, hu, R, R0), _panels(lw, hw, R, R0), resolution)
        radii.append(R)
        values.append(val)
        if not math.isfinite(val):
            return VolumeResult(math.inf, True, radii, shells, "integrand overflowed")
        if k == 0:
            continue
        shell = abs(values[-1] - values[-2])
        shells.append(shell)
        if shell <= tol * max(abs(val), 1e-300):
            return VolumeResult(val, False, radii, shells, "shells converged")
        if len(shells) >= 3 and shells[-1] >= shells[-2] >= shells[-3]:
            return VolumeResult(math.inf, True, radii, shells, "shell contributions do not decrease")
    return VolumeResult(math.inf, True, radii, shells, "no convergence within the doubling budget")
