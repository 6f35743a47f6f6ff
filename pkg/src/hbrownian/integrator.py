"""Stratonovich Heun integration of a system together with its derivative flow.

The pair (x, v) is advanced by one predictor-corrector step of

    dx = X(x) o dB + A(x) dt,       dv = DX(x)[v] o dB + DA(x)[v] dt,

where DX[v] is the ambient derivative of the diffusion fields along v (its
tangential part is the covariant derivative nabla X(v), its normal part
alpha(v, X) keeps v tangent to first order). After the corrector x is
retracted onto the manifold and v projected to the new tangent space.

Along the way the pathwise functionals of the exponential representation

    p log(|v_t| / |v_0|) = M_t - <M>_t / 2 + a_t

are accumulated: the Ito martingale M, its bracket <M>, the drift a, and the
time integrals of h_p and its lower counterpart. The stochastic integral is a
trapezoid (Stratonovich) sum converted to Ito form with the covariation
correction -1/2 sum_i (lifted X^i) G_i dt, evaluated by central differences.
All arrays carry a leading path axis so whole ensembles move together.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .curvature import hp_extrema
from .errors import DomainError, IntegrationError

CHUNK = 256


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    explosion_radius: float = 1e6
    p: float = 1.0
    functionals: bool = True
    track_hp: bool = False
    fd_eps: float = 1e-5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.explosion_radius > 0:
            raise ValueError("explosion_radius must be positive")
        if not self.p >= 1:
            raise ValueError("moment order p must be >= 1")


@dataclass
class FlowState:
    """Batched state: x, v have shape (N, d); the rest shape (N,)."""

    x: np.ndarray
    v: np.ndarray
    t: float
    mart: np.ndarray
    qvar: np.ndarray
    aexp: np.ndarray
    hp_int: np.ndarray
    hp_lower_int: np.ndarray
    alive: np.ndarray
    cache: dict = field(default=None, repr=False, compare=False)

    @classmethod
    def start(cls, S, x0, v0):
        x0 = np.atleast_2d(S.check_point(np.asarray(x0, dtype=float)))
        v0 = np.atleast_2d(np.asarray(v0, dtype=float))
        v0 = np.broadcast_to(v0, x0.shape)
        v0 = S.check_tangent(x0, v0)
        if np.any(np.linalg.norm(v0, axis=-1) == 0):
            raise DomainError("initial vector must be nonzero")
        z = np.zeros(len(x0))
        return cls(x0, v0, 0.0, z, z.copy(), z.copy(), z.copy(), z.copy(), np.ones(len(x0), bool))

    @property
    def n_paths(self):
        return len(self.x)


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _apply(M, w):
    return np.einsum("...ij,...j->...i", M, w)


def _ito_covariation(S, x, v, eps):
    """sum_i d/ds G_i along the lift (X^i(x), DX^i(x)[v]) by central differences."""
    X = S.diffusion(x)
    DX = S.diffusion_jvp(x, v)
    m = X.shape[-1]
    Xi = np.moveaxis(X, -1, 0)  # (m, N, d)
    Di = np.moveaxis(DX, -1, 0)
    xs = np.concatenate([x + eps * Xi, x - eps * Xi])
    xs = S.retract(xs)
    vs = S.project_tangent(xs, np.concatenate([v + eps * Di, v - eps * Di]))
    G = S.log_growth(xs, vs)  # (2m, N, m)
    idx = np.arange(m)
    diff = G[idx, :, idx] - G[m + idx, :, idx]
    return np.sum(diff, axis=0) / (2 * eps)


def _integrands(S, x, v, cfg):
    out = {}
    if cfg.functionals:
        G = S.log_growth(x, v)
        out["G"] = G
        out["G2"] = _dot(G, G)
        out["c"] = _ito_covariation(S, x, v, cfg.fd_eps)
        out["H"] = S.H_form(x, v, cfg.p) / _dot(v, v)
    if cfg.track_hp:
        out["hp"], out["hpl"] = hp_extrema(S, x, cfg.p)
    return out


def step(S, st, dB, cfg):
    """One Heun step of (x, v) and the accumulators; dead paths stay frozen."""
    dB = np.atleast_2d(np.asarray(dB, dtype=float))
    if dB.shape[-1] != S.noise_dim:
        raise DomainError(f"dB needs {S.noise_dim} components")
    dt = cfg.dt
    x, v = st.x, st.v
    cache = st.cache if st.cache is not None else _integrands(S, x, v, cfg)

    X0, A0 = S.diffusion(x), S.drift(x)
    DX0, DA0 = S.diffusion_jvp(x, v), S.drift_jvp(x, v)
    dx0 = _apply(X0, dB) + A0 * dt
    dv0 = _apply(DX0, dB) + DA0 * dt
    xp = S.retract(x + dx0)
    vp = S.project_tangent(xp, v + dv0)
    dx1 = _apply(S.diffusion(xp), dB) + S.drift(xp) * dt
    dv1 = _apply(S.diffusion_jvp(xp, vp), dB) + S.drift_jvp(xp, vp) * dt
    with np.errstate(all="ignore"):
        x1 = S.retract(x + 0.5 * (dx0 + dx1))
        v1 = S.project_tangent(x1, v + 0.5 * (dv0 + dv1))

    alive = st.alive.copy()
    t1 = st.t + dt
    bad = alive & ~(np.all(np.isfinite(x1), -1) & np.all(np.isfinite(v1), -1))
    if np.any(bad):
        raise IntegrationError("non-finite state", t1)
    alive &= S.explosion_norm(x1) <= cfg.explosion_radius
    if np.any(alive & (np.linalg.norm(v1, axis=-1) < 1e-300)):
        raise IntegrationError("derivative vector vanished", t1)
    # frozen paths keep their last finite state before the integrands are evaluated
    x1 = np.where(alive[:, None], x1, x)
    v1 = np.where(alive[:, None], v1, v)
    with np.errstate(all="ignore"):
        new = _integrands(S, x1, v1, cfg)

    p = cfg.p
    mart, qvar, aexp = st.mart, st.qvar, st.aexp
    if cfg.functionals:
        with np.errstate(all="ignore"):
            dm = p * (0.5 * _dot(cache["G"] + new["G"], dB) - 0.25 * (cache["c"] + new["c"]) * dt)
            dq = p * p * 0.5 * (cache["G2"] + new["G2"]) * dt
            da = 0.5 * p * 0.5 * (cache["H"] + new["H"]) * dt
        mart, qvar, aexp = mart + np.where(alive, dm, 0), qvar + np.where(alive, dq, 0), aexp + np.where(alive, da, 0)
        if np.any(alive & ~(np.isfinite(mart) & np.isfinite(qvar) & np.isfinite(aexp))):
            raise IntegrationError("non-finite accumulator", t1)
    hp_int, hpl_int = st.hp_int, st.hp_lower_int
    if cfg.track_hp:
        hp_int = hp_int + np.where(alive, 0.5 * (cache["hp"] + new["hp"]) * dt, 0)
        hpl_int = hpl_int + np.where(alive, 0.5 * (cache["hpl"] + new["hpl"]) * dt, 0)

    keep = alive[:, None]
    x_out = np.where(keep, x1, x)
    v_out = np.where(keep, v1, v)
    merged = {k: np.where(alive.reshape((-1,) + (1,) * (new[k].ndim - 1)), new[k], cache[k]) for k in new}
    return FlowState(x_out, v_out, t1, mart, qvar, aexp, hp_int, hpl_int, alive, merged)


@dataclass
class Trajectory:
    """States on a uniform time grid; arrays have shape (G, N, ...)."""

    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    mart: np.ndarray
    qvar: np.ndarray
    aexp: np.ndarray
    hp_int: np.ndarray
    hp_lower_int: np.ndarray
    alive: np.ndarray

    @property
    def vnorm(self):
        return np.linalg.norm(self.v, axis=-1)

    def path(self, i):
        """Single-path view with the path axis removed."""
        return Trajectory(self.times, *(getattr(self, f)[:, i] for f in _FIELDS))


_FIELDS = ("x", "v", "mart", "qvar", "aexp", "hp_int", "hp_lower_int", "alive")


def n_steps_for(T, dt):
    return int(math.ceil(T / dt - 1e-9))


def simulate_batch(S, x0, v0, T, cfg, streams, record_every=1):
    """Integrate a batch of paths, one increment stream per path.

    Records the state every ``record_every`` steps (and at t = 0).
    """
    if not T > 0:
        raise DomainError("horizon must be positive")
    st = FlowState.start(S, x0, v0)
    if len(streams) != st.n_paths:
        raise DomainError("need one increment stream per path")
    n = n_steps_for(T, cfg.dt)
    rec = [_snapshot(st)]
    done = 0
    while done < n:
        k = min(CHUNK, n - done)
        dBs = rngmod.batch_increments(streams, k)
        for j in range(k):
            st = step(S, st, dBs[:, j], cfg)
            done += 1
            if done % record_every == 0 or done == n:
                rec.append(_snapshot(st))
    times = np.array([r[0] for r in rec])
    arrays = [np.stack([r[1][i] for r in rec]) for i in range(len(_FIELDS))]
    return Trajectory(times, *arrays)


def _snapshot(st):
    return st.t, tuple(np.array(getattr(st, f)) for f in _FIELDS)


def simulate_path(S, x0, v0, T, cfg, seed, path=0, level=0, record_every=1):
    """Single path keyed by (seed, path); ``level`` > 0 refines a base grid of
    step ``cfg.dt * 2**level`` by Brownian-bridge subdivision."""
    stream = rngmod.IncrementStream(seed, path, S.noise_dim, cfg.dt * 2**level, level)
    return simulate_batch(S, x0, v0, T, cfg, [stream], record_every).path(0)


def representation_residual(traj, p):
    """max_t |p log(|v_t|/|v_0|) - (M_t - <M>_t/2 + a_t)| (per path if batched)."""
    if not np.all(traj.alive):
        raise DomainError("trajectory must stay alive")
    vn = traj.vnorm
    lhs = p * np.log(vn / vn[0])
    rhs = traj.mart - 0.5 * traj.qvar + traj.aexp
    return np.max(np.abs(lhs - rhs), axis=0)


def write_trajectory_csv(traj, path):
    """Columns t, x_1..x_d, |v|, mart, qvar, aexp, hp_int, alive (single path)."""
    d = traj.x.shape[-1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *(f"x{i + 1}" for i in range(d)), "vnorm", "mart", "qvar", "aexp", "hp_int", "alive"])
        for k, t in enumerate(traj.times):
            row = [t, *traj.x[k], traj.vnorm[k], traj.mart[k], traj.qvar[k], traj.aexp[k], traj.hp_int[k]]
            w.writerow([f"{float(val):.17g}" for val in row] + [int(traj.alive[k])])


def positions_step(S, x, dB, dt):
    """Heun step of x alone (no derivative flow)."""
    dx0 = _apply(S.diffusion(x), dB) + S.drift(x) * dt
    xp = S.retract(x + dx0)
    dx1 = _apply(S.diffusion(xp), dB) + S.drift(xp) * dt
    return S.retract(x + 0.5 * (dx0 + dx1))


def integrate_functionals(S, x0, T, dt, streams, integrands, record_every=1, explosion_radius=1e6):
    """Time integrals int_0^t f_k(x_s) ds along x-only paths.

    ``integrands`` maps names to batched pointwise functions. Returns
    ``(times, {name: (G, N) array}, alive (G, N))``; exploded paths freeze.
    """
    x = np.atleast_2d(S.check_point(np.asarray(x0, dtype=float)))
    N = len(x)
    acc = {k: np.zeros(N) for k in integrands}
    prev = {k: f(x) for k, f in integrands.items()}
    alive = np.ones(N, bool)
    n = n_steps_for(T, dt)
    times, rec, rec_alive = [0.0], {k: [acc[k].copy()] for k in acc}, [alive.copy()]
    done = 0
    while done < n:
        k = min(CHUNK, n - done)
        dBs = rngmod.batch_increments(streams, k)
        for j in range(k):
            with np.errstate(all="ignore"):
                x1 = positions_step(S, x, dBs[:, j], dt)
            ok = alive & (S.explosion_norm(x1) <= explosion_radius)
            alive = ok
            x = np.where(alive[:, None], x1, x)
            for name, f in integrands.items():
                cur = f(x)
                acc[name] = acc[name] + np.where(alive, 0.5 * (prev[name] + cur) * dt, 0)
                prev[name] = cur
            done += 1
            if done % record_every == 0 or done == n:
                times.append(done * dt)
                for name in acc:
                    rec[name].append(acc[name].copy())
                rec_alive.append(alive.copy())
    return np.array(times), {k: np.stack(v) for k, v in rec.items()}, np.stack(rec_alive)


def with_dt(cfg, dt):
    return replace(cfg, dt=dt)
