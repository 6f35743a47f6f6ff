"""Curvature functionals H_p, h_p, h_p_lower and rho^h, and the sign criteria
built on them.

h_p(x) and its lower counterpart are the extrema of p * H_p(x)(v, v) over
unit tangent vectors. Away from p = 2 the objective is quartic over
quadratic, so the extremum is located by dense sampling of the unit sphere
followed by golden-section coordinate ascent along great circles; at p = 2 (or
without curvature terms) it is an exact symmetric eigenvalue problem.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, NotApplicable

_GOLDEN = (math.sqrt(5) - 1) / 2
_GOLDEN_ITERS = 40
_MAX_SWEEPS = 40


def H_p_form(S, x, v, p):
    """H_p(x)(v, v) for a single point and tangent vector."""
    x = S.check_point(x)
    v = S.check_tangent(x, v)
    if not np.linalg.norm(v) > 0:
        raise DomainError("H_p is undefined at v = 0")
    return float(S.H_form(x, v, p))


def _directions(n):
    if n == 2:
        th = np.arange(512) * (2 * math.pi / 512)
        return np.stack([np.cos(th), np.sin(th)], -1), 2 * math.pi / 512
    if n == 3:
        k = np.arange(4096) + 0.5
        z = 1 - 2 * k / 4096
        r = np.sqrt(1 - z * z)
        phi = math.pi * (3 - math.sqrt(5)) * k
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], -1), math.sqrt(4 * math.pi / 4096)
    count = 8192
    u = np.random.default_rng(0).standard_normal((count, n))
    return u / np.linalg.norm(u, axis=-1, keepdims=True), 2 * count ** (-1.0 / (n - 1))


def _objective(B, C, p, U):
    """p * H_p at unit coefficient vectors U (..., n) for forms B, C."""
    quad = np.sum(np.matmul(U[..., None, :], B)[..., 0, :] * U, axis=-1)
    if C.shape[-3] == 0 or p == 2:
        return p * quad
    diag = np.sum(np.matmul(U[..., None, None, :], C)[..., 0, :] * U[..., None, :], axis=-1)
    return p * (quad + (p - 2) * np.sum(diag**2, axis=-1))


def _complement(u):
    """Orthonormal basis of u's complement, shape (..., n - 1, n)."""
    n = u.shape[-1]
    M = np.concatenate([u[..., :, None], np.broadcast_to(np.eye(n), u.shape[:-1] + (n, n))], axis=-1)
    Q = np.linalg.qr(M)[0]
    return np.swapaxes(Q[..., :, 1:], -1, -2)


def _ascend(B, C, p, u, width, sign):
    """Golden-section coordinate ascent of sign * f from u along great circles."""
    f = lambda w: sign * _objective(B, C, p, w)  # noqa: E731
    best = f(u)
    for _ in range(_MAX_SWEEPS):
        start = best
        for w in np.moveaxis(_complement(u), -2, 0):
            lo = np.full(u.shape[:-1], -width)
            hi = np.full(u.shape[:-1], width)
            a = hi - _GOLDEN * (hi - lo)
            b = lo + _GOLDEN * (hi - lo)
            arc = lambda t: np.cos(t)[..., None] * u + np.sin(t)[..., None] * w  # noqa: E731
            fa, fb = f(arc(a)), f(arc(b))
            for _ in range(_GOLDEN_ITERS):
                left = fa > fb
                hi = np.where(left, b, hi)
                lo = np.where(left, lo, a)
                t_new = np.where(left, hi - _GOLDEN * (hi - lo), lo + _GOLDEN * (hi - lo))
                f_new = f(arc(t_new))
                a, b, fa, fb = (
                    np.where(left, t_new, b),
                    np.where(left, a, t_new),
                    np.where(left, f_new, fb),
                    np.where(left, fa, f_new),
                )
            t = 0.5 * (lo + hi)
            cand = arc(t)
            fc = f(cand)
            better = fc > best
            u = np.where(better[..., None], cand, u)
            u /= np.linalg.norm(u, axis=-1, keepdims=True)
            best = np.maximum(best, fc)
        if u.shape[-1] == 2 or np.all(best - start <= 1e-14 * (1 + np.abs(best))):
            break
    return sign * best


_CIRCLE_GRID = 512
_NEWTON_STEPS = 3


def _circle_extrema(B, C, p):
    """Exact extrema for n = 2.

    With u = (cos t, sin t) and phi = 2t, both u^T B u and each u^T C_k u are
    first-degree trigonometric in phi, so the objective is
    a0 + a1 cos phi + b1 sin phi + a2 cos 2phi + b2 sin 2phi with closed-form
    coefficients. It is scanned on 512 angles and polished by Newton steps.
    """
    q0 = 0.5 * (B[..., 0, 0] + B[..., 1, 1])
    q1 = 0.5 * (B[..., 0, 0] - B[..., 1, 1])
    q2 = B[..., 0, 1]
    coef = np.stack([q0, q1, q2, np.zeros_like(q0), np.zeros_like(q0)], -1)
    if C.shape[-3] and p != 2:
        al = 0.5 * (C[..., 0, 0] + C[..., 1, 1])
        be = 0.5 * (C[..., 0, 0] - C[..., 1, 1])
        ga = C[..., 0, 1]
        quart = np.stack(
            [
                np.sum(al * al + 0.5 * (be * be + ga * ga), -1),
                np.sum(2 * al * be, -1),
                np.sum(2 * al * ga, -1),
                np.sum(0.5 * (be * be - ga * ga), -1),
                np.sum(be * ga, -1),
            ],
            -1,
        )
        coef = coef + (p - 2) * quart
    coef = p * coef
    grid = np.arange(_CIRCLE_GRID) * (2 * math.pi / _CIRCLE_GRID)
    basis = np.stack([np.ones_like(grid), np.cos(grid), np.sin(grid), np.cos(2 * grid), np.sin(2 * grid)])
    dense = coef @ basis

    def derivs(phi):
        c1, s1, c2, s2 = np.cos(phi), np.sin(phi), np.cos(2 * phi), np.sin(2 * phi)
        a0, a1, b1, a2, b2 = np.moveaxis(coef, -1, 0)
        f = a0 + a1 * c1 + b1 * s1 + a2 * c2 + b2 * s2
        d1 = -a1 * s1 + b1 * c1 - 2 * a2 * s2 + 2 * b2 * c2
        d2 = -a1 * c1 - b1 * s1 - 4 * a2 * c2 - 4 * b2 * s2
        return f, d1, d2

    out = []
    for idx, sign in ((np.argmax(dense, -1), 1.0), (np.argmin(dense, -1), -1.0)):
        phi = grid[idx]
        best = np.take_along_axis(dense, idx[..., None], -1)[..., 0]
        for _ in range(_NEWTON_STEPS):
            f, d1, d2 = derivs(phi)
            best = sign * np.maximum(sign * best, sign * f)
            ok = sign * d2 < 0
            phi = np.where(ok, phi - d1 / np.where(ok, d2, 1.0), phi)
        best = sign * np.maximum(sign * best, sign * derivs(phi)[0])
        out.append(best)
    return out[0], out[1]


def hp_extrema(S, x, p):
    """(h_p, h_p_lower) at points x (batched): sup and inf of p * H_p over unit tangents."""
    x = np.asarray(x, dtype=float)
    _, B, C = S.curvature_forms(x)
    n = B.shape[-1]
    if n == 1:
        val = _objective(B, C, p, np.ones(x.shape[:-1] + (1,)))
        return val, val.copy()
    if p == 2 or C.shape[-3] == 0 or not np.any(C):
        ev = np.linalg.eigvalsh(B)
        return p * ev[..., -1], p * ev[..., 0]
    if n == 2:
        return _circle_extrema(B, C, p)
    U, width = _directions(n)
    vals = _objective(B[..., None, :, :], C[..., None, :, :, :], p, U)
    out = []
    for sign, idx in ((1.0, np.argmax(vals, axis=-1)), (-1.0, np.argmin(vals, axis=-1))):
        u0 = U[idx]
        out.append(_ascend(B, C, p, u0, 2 * width, sign))
    return out[0], out[1]


def h_p_sup(S, x, p):
    x = S.check_point(x)
    return float(hp_extrema(S, x, p)[0])


def h_p_inf(S, x, p):
    x = S.check_point(x)
    return float(hp_extrema(S, x, p)[1])


def rho_h_values(S, x):
    """rho^h = -lambda_min(Ric - 2 Hess h) at points x (batched)."""
    _, R = S.rho_form(np.asarray(x, dtype=float))
    return -np.linalg.eigvalsh(R)[..., 0]


def rho_h(S, x):
    x = S.check_point(x)
    return float(rho_h_values(S, x))


@dataclass
class CurvatureReport:
    """Sup/inf of the pointwise functionals over a finite sample and the sign flags.

    A finite sample can only under-estimate a supremum; ``sample_size`` is
    reported so the reader can judge.
    """

    system: str
    p: float
    sample_size: int
    sup_hp: float
    inf_hp_lower: float
    sup_rho_h: float = None
    moment_stable_sufficient: bool = False
    pi1_vanishing_sufficient: bool = False
    bakry_nonexplosion: bool = False
    notes: list = field(default_factory=list)

    schema_version = 1

    def to_dict(self):
        d = asdict(self)
        d["schema_version"] = self.schema_version
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self):
        rows = [
            ("system", self.system),
            ("p", f"{self.p:g}"),
            ("sample size", str(self.sample_size)),
            ("sup h_p", f"{self.sup_hp:.10g}"),
            ("inf h_p lower", f"{self.inf_hp_lower:.10g}"),
            ("sup rho^h", "n/a" if self.sup_rho_h is None else f"{self.sup_rho_h:.10g}"),
            ("moment stable (sup h_p < 0)", str(self.moment_stable_sufficient)),
            ("pi_1 vanishing (p = 1, sup h_1 < 0)", str(self.pi1_vanishing_sufficient)),
            ("rho^h bounded above on sample", str(self.bakry_nonexplosion)),
        ]
        w = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{w}}  {v}" for k, v in rows)


def criterion_report(S, region_sample, p):
    pts = np.asarray(region_sample, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise DomainError("region sample must be a nonempty list of points")
    pts = S.check_point(pts)
    sup, inf = hp_extrema(S, pts, p)
    try:
        rho = float(np.max(rho_h_values(S, pts)))
        notes = []
    except NotApplicable as exc:
        rho = None
        notes = [str(exc)]
    sup_hp, inf_low = float(np.max(sup)), float(np.min(inf))
    return CurvatureReport(
        system=S.describe(),
        p=float(p),
        sample_size=len(pts),
        sup_hp=sup_hp,
        inf_hp_lower=inf_low,
        sup_rho_h=rho,
        moment_stable_sufficient=sup_hp < 0,
        pi1_vanishing_sufficient=(p == 1 and sup_hp < 0),
        bakry_nonexplosion=rho is not None and math.isfinite(rho),
        notes=notes,
    )
