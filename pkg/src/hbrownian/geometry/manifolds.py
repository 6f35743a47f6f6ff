"""Catalog of isometrically embedded manifolds.

All pointwise operators are batched: a point array ``x`` has shape ``(..., m)``
and tangent vectors share that shape. Every catalog entry is either flat
(codimension 0) or a hypersurface ``{g = 0}`` with unit normal
``nu = grad g / |grad g|``. For hypersurfaces the second fundamental form is

    alpha_x(u, v) = -<W u, v> nu,      W = Hess g / |grad g|,

which follows from differentiating ``<grad g, c'> = 0`` along curves ``c``
in the surface.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, qmc

from ..errors import DomainError, NotApplicable


def dot(a, b):
    return np.sum(a * b, axis=-1)


def _norm(a):
    return np.sqrt(dot(a, a))


@dataclass(frozen=True)
class ChartQuadrature:
    """2D parametrization ``param(u, w) -> x`` with area element ``area(u, w)``.

    ``bounds`` holds ``(lo, hi)`` per coordinate; ``None`` marks an unbounded end.
    """

    param: object
    area: object
    bounds: tuple


class EmbeddedManifold:
    """Base class: an ``dim``-dimensional submanifold of ``R^ambient_dim``."""

    name = "manifold"
    compact = False
    membership_tolerance = 1e-6
    retraction_iterations = 20

    def __init__(self, dim, ambient_dim, params=None):
        if dim < 1 or ambient_dim < dim:
            raise ValueError("need 1 <= dim <= ambient_dim")
        self.dim = dim
        self.ambient_dim = ambient_dim
        self.params = dict(params or {})

    # -- identity ---------------------------------------------------------
    @property
    def codim(self):
        return self.ambient_dim - self.dim

    @property
    def is_hypersurface(self):
        return self.codim == 1

    def describe(self):
        args = ",".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.name}({args})"

    def __repr__(self):
        return self.describe()

    # -- membership -------------------------------------------------------
    def distance(self, x):
        """Distance (or a first-order estimate of it) from ``x`` to the manifold."""
        raise NotImplementedError

    def retract(self, x):
        raise NotImplementedError

    def check_point(self, x, tol=None):
        """Return ``x`` re-projected onto the manifold, or raise if too far off."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.ambient_dim:
            raise DomainError(f"point has {x.shape[-1]} components, expected {self.ambient_dim}")
        tol = self.membership_tolerance if tol is None else tol
        d = np.max(np.abs(self.distance(x)))
        if not np.isfinite(d) or d > tol:
            raise DomainError(f"point is {d:.3g} away from {self.describe()}")
        return self.retract(x)

    def check_tangent(self, x, v, tol=1e-6):
        """Return ``v`` re-projected to T_xM, or raise if its normal part is too large."""
        v = np.asarray(v, dtype=float)
        normal = v - self.project_tangent(x, v)
        scale = np.maximum(_norm(v), 1.0)
        if np.max(_norm(normal) / scale) > tol:
            raise DomainError("vector is not tangent to the manifold")
        return self.project_tangent(x, v)

    # -- first order ------------------------------------------------------
    def normal_frame(self, x):
        """Orthonormal normal basis, shape ``(..., codim, m)``."""
        raise NotImplementedError

    def projector(self, x):
        nu = self.normal_frame(x)
        eye = np.eye(self.ambient_dim)
        return eye - np.einsum("...ki,...kj->...ij", nu, nu)

    def project_tangent(self, x, v):
        nu = self.normal_frame(x)
        return v - np.einsum("...k,...ki->...i", np.einsum("...ki,...i->...k", nu, v), nu)

    def tangent_basis(self, x):
        """Orthonormal tangent basis, shape ``(..., dim, m)``."""
        _, vecs = np.linalg.eigh(self.projector(x))
        return np.swapaxes(vecs[..., :, self.codim:], -1, -2)

    # -- second order -----------------------------------------------------
    def weingarten(self, x):
        """Symmetric ambient matrix W with alpha(u, v) = -<W u, v> nu."""
        raise NotImplementedError

    def sff(self, x, u, v):
        """Second fundamental form alpha_x(u, v), a normal vector."""
        if self.codim == 0:
            return np.zeros(np.broadcast_shapes(np.shape(u), np.shape(v)))
        W = self.weingarten(x)
        nu = self.normal_frame(x)[..., 0, :]
        return -np.einsum("...i,...ij,...j->...", u, W, v)[..., None] * nu

    def shape_operator(self, x, v, w):
        """Shape operator A_x(v, w) for tangent v and normal w.

        Defined by <alpha_x(v, u), w> = <A_x(v, w), u> for all tangent u.
        """
        if self.codim == 0:
            return np.zeros(np.broadcast_shapes(np.shape(v), np.shape(w)))
        W = self.weingarten(x)
        nu = self.normal_frame(x)[..., 0, :]
        Wv = self.project_tangent(x, np.einsum("...ij,...j->...i", W, v))
        return -dot(nu, w)[..., None] * Wv

    def projector_derivative(self, x, v):
        """Directional derivative DP(x)[v] of the tangent projector, shape ``(..., m, m)``.

        Column i is the ambient derivative of the field X^i = P e_i along v:
        its tangential part is nabla X^i(v), its normal part alpha(v, X^i).
        """
        if self.codim == 0:
            shape = np.broadcast_shapes(np.shape(x), np.shape(v))[:-1]
            return np.zeros(shape + (self.ambient_dim, self.ambient_dim))
        W = self.weingarten(x)
        nu = self.normal_frame(x)[..., 0, :]
        Wv = self.project_tangent(x, np.einsum("...ij,...j->...i", W, v))
        return -(Wv[..., :, None] * nu[..., None, :] + nu[..., :, None] * Wv[..., None, :])

    def gauss_ricci(self, x, u, v):
        """Ricci form assembled from alpha by the Gauss equation."""
        if self.codim == 0:
            return np.zeros(np.broadcast_shapes(np.shape(u), np.shape(v))[:-1])
        W = self.weingarten(x)
        E = self.tangent_basis(x)
        WE = np.einsum("...ij,...aj->...ai", W, E)
        trace = np.einsum("...ai,...ai->...", E, WE)
        Wu = self.project_tangent(x, np.einsum("...ij,...j->...i", W, u))
        Wv = self.project_tangent(x, np.einsum("...ij,...j->...i", W, v))
        return trace * dot(Wu, v) - dot(Wu, Wv)

    def ricci(self, x, u, v):
        return self.gauss_ricci(x, u, v)

    # -- global data ------------------------------------------------------
    injectivity_radius = None

    def injectivity_radius_bound(self, region=None):
        """Lower bound for the injectivity radius on a compact region."""
        if self.injectivity_radius is None:
            raise NotApplicable(f"{self.describe()} has no injectivity-radius bound")
        return self.injectivity_radius

    def sample(self, count, rng):
        """Random points on the manifold (on a bounded window if noncompact)."""
        raise NotImplementedError

    def region_sample(self, count):
        """Low-discrepancy points covering the catalog's reference compact region."""
        raise NotImplementedError

    chart = None

    def base_point(self):
        """A canonical starting point."""
        raise NotImplementedError


def _halton(count, d):
    return qmc.Halton(d=d, scramble=False).random(count + 1)[1:]


# ---------------------------------------------------------------------------
# flat space


class Flat(EmbeddedManifold):
    """R^n embedded identically in itself."""

    name = "flat"
    injectivity_radius = math.inf
    window = 2.0

    def __init__(self, dim=2):
        super().__init__(dim, dim, {"dim": dim})

    def distance(self, x):
        return np.zeros(np.shape(x)[:-1])

    def retract(self, x):
        return np.array(x, dtype=float)

    def normal_frame(self, x):
        return np.zeros(np.shape(x)[:-1] + (0, self.dim))

    def projector(self, x):
        return np.broadcast_to(np.eye(self.dim), np.shape(x)[:-1] + (self.dim, self.dim)).copy()

    def project_tangent(self, x, v):
        return np.array(np.broadcast_to(v, np.broadcast_shapes(np.shape(x), np.shape(v))), dtype=float)

    def tangent_basis(self, x):
        return np.broadcast_to(np.eye(self.dim), np.shape(x)[:-1] + (self.dim, self.dim)).copy()

    def weingarten(self, x):
        return np.zeros(np.shape(x)[:-1] + (self.dim, self.dim))

    def ricci(self, x, u, v):
        return np.zeros(np.broadcast_shapes(np.shape(u), np.shape(v))[:-1])

    def sample(self, count, rng):
        return rng.uniform(-self.window, self.window, size=(count, self.dim))

    def region_sample(self, count):
        return (2 * _halton(count, self.dim) - 1) * self.window

    def base_point(self):
        return np.zeros(self.dim)

    @property
    def chart(self):
        if self.dim != 2:
            return None
        return ChartQuadrature(
            param=lambda u, w: np.stack([u, w], axis=-1),
            area=lambda u, w: np.ones(np.broadcast_shapes(np.shape(u), np.shape(w))),
            bounds=((None, None), (None, None)),
        )


# ---------------------------------------------------------------------------
# hypersurfaces


class Hypersurface(EmbeddedManifold):
    """Level set ``{g = 0}`` with analytic first and second derivatives of g."""

    def __init__(self, dim, params=None):
        super().__init__(dim, dim + 1, params)

    def g(self, x):
        raise NotImplementedError

    def dg(self, x):
        raise NotImplementedError

    def d2g(self, x):
        raise NotImplementedError

    def distance(self, x):
        return self.g(x) / _norm(self.dg(x))

    def retract(self, x):
        """Newton iteration along grad g, capped at ``retraction_iterations``."""
        x = np.array(x, dtype=float)
        active = np.ones(x.shape[:-1], dtype=bool)
        for _ in range(self.retraction_iterations):
            gx = self.g(x)
            grad = self.dg(x)
            step = (gx / dot(grad, grad))[..., None] * grad
            # converged points are left alone so each result is independent of its batch
            x = np.where(active[..., None], x - step, x)
            active &= _norm(step) > 1e-13 * (1.0 + _norm(x))
            if not np.any(active):
                break
        return x

    def normal_frame(self, x):
        grad = self.dg(x)
        return (grad / _norm(grad)[..., None])[..., None, :]

    def projector(self, x):
        nu = self.normal_frame(x)[..., 0, :]
        return np.eye(self.ambient_dim) - nu[..., :, None] * nu[..., None, :]

    def project_tangent(self, x, v):
        nu = self.normal_frame(x)[..., 0, :]
        return v - dot(nu, v)[..., None] * nu

    def weingarten(self, x):
        return self.d2g(x) / _norm(self.dg(x))[..., None, None]


class Sphere(Hypersurface):
    """Round sphere S^n of the given radius, centred at the origin."""

    name = "sphere"
    compact = True

    def __init__(self, dim=2, radius=1.0):
        super().__init__(dim, {"dim": dim, "radius": radius})
        self.radius = float(radius)
        self.injectivity_radius = math.pi * self.radius

    def g(self, x):
        return dot(x, x) - self.radius**2

    def dg(self, x):
        return 2 * np.asarray(x, dtype=float)

    def d2g(self, x):
        return np.broadcast_to(2 * np.eye(self.ambient_dim), np.shape(x)[:-1] + (self.ambient_dim,) * 2)

    def distance(self, x):
        return _norm(x) - self.radius

    def retract(self, x):
        x = np.asarray(x, dtype=float)
        return self.radius * x / _norm(x)[..., None]

    def normal_frame(self, x):
        return (np.asarray(x, dtype=float) / _norm(x)[..., None])[..., None, :]

    def weingarten(self, x):
        eye = np.eye(self.ambient_dim) / _norm(x)[..., None, None]
        return eye

    def ricci(self, x, u, v):
        return (self.dim - 1) / self.radius**2 * dot(u, v)

    def sample(self, count, rng):
        z = rng.standard_normal((count, self.ambient_dim))
        return self.retract(z)

    def region_sample(self, count):
        z = norm.ppf(_halton(count, self.ambient_dim))
        return self.retract(z)

    def base_point(self):
        x = np.zeros(self.ambient_dim)
        x[-1] = self.radius
        return x

    @property
    def chart(self):
        if self.dim != 2:
            return None
        r = self.radius
        return ChartQuadrature(
            param=lambda th, ph: r * np.stack(
                [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th) + 0 * ph], axis=-1
            ),
            area=lambda th, ph: r**2 * np.sin(th) + 0 * ph,
            bounds=((0.0, math.pi), (0.0, 2 * math.pi)),
        )


class Ellipsoid(Hypersurface):
    """x^2/a^2 + y^2/b^2 + z^2/c^2 = 1."""

    name = "ellipsoid"
    compact = True

    def __init__(self, a=1.0, b=1.0, c=1.5):
        super().__init__(2, {"a": a, "b": b, "c": c})
        self.axes = np.array([a, b, c], dtype=float)
        inv2 = 1.0 / self.axes**2
        self._inv2 = inv2
        a, b, c = self.axes
        # Gauss curvature peaks at a vertex; pi / sqrt(K_max) bounds the
        # injectivity radius of a positively curved simply connected surface.
        kmax = max(a**2 / (b * c) ** 2, b**2 / (a * c) ** 2, c**2 / (a * b) ** 2)
        self.injectivity_radius = math.pi / math.sqrt(kmax)

    def g(self, x):
        return dot(x * x, self._inv2) - 1.0

    def dg(self, x):
        return 2 * np.asarray(x, dtype=float) * self._inv2

    def d2g(self, x):
        return np.broadcast_to(2 * np.diag(self._inv2), np.shape(x)[:-1] + (3, 3))

    def gauss_curvature(self, x):
        a, b, c = self.axes
        s = dot(x * x, self._inv2**2)
        return 1.0 / ((a * b * c) ** 2 * s**2)

    def ricci(self, x, u, v):
        return self.gauss_curvature(x) * dot(u, v)

    def _param(self, th, ph):
        a, b, c = self.axes
        return np.stack([a * np.sin(th) * np.cos(ph), b * np.sin(th) * np.sin(ph), c * np.cos(th) + 0 * ph], -1)

    def _area(self, th, ph):
        a, b, c = self.axes
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        xt = np.stack([a * ct * cp, b * ct * sp, -c * st + 0 * ph], -1)
        xp = np.stack([-a * st * sp, b * st * cp, 0 * th + 0 * ph], -1)
        return _norm(np.cross(xt, xp))

    def sample(self, count, rng):
        z = rng.standard_normal((count, 3))
        z /= _norm(z)[..., None]
        return self.retract(z * self.axes)

    def region_sample(self, count):
        z = norm.ppf(_halton(count, 3))
        z /= _norm(z)[..., None]
        return self.retract(z * self.axes)

    def base_point(self):
        return np.array([0.0, 0.0, self.axes[2]])

    @property
    def chart(self):
        return ChartQuadrature(self._param, self._area, ((0.0, math.pi), (0.0, 2 * math.pi)))


class Cylinder(Hypersurface):
    """S^1 x R: x^2 + y^2 = r^2 in R^3."""

    name = "cylinder"
    window = 2.0

    def __init__(self, radius=1.0):
        super().__init__(2, {"radius": radius})
        self.radius = float(radius)
        self.injectivity_radius = math.pi * self.radius

    def g(self, x):
        return x[..., 0] ** 2 + x[..., 1] ** 2 - self.radius**2

    def dg(self, x):
        out = 2 * np.array(x, dtype=float)
        out[..., 2] = 0.0
        return out

    def d2g(self, x):
        return np.broadcast_to(np.diag([2.0, 2.0, 0.0]), np.shape(x)[:-1] + (3, 3))

    def distance(self, x):
        return np.hypot(x[..., 0], x[..., 1]) - self.radius

    def retract(self, x):
        x = np.array(x, dtype=float)
        rho = np.hypot(x[..., 0], x[..., 1])
        x[..., :2] *= (self.radius / rho)[..., None]
        return x

    def ricci(self, x, u, v):
        return np.zeros(np.broadcast_shapes(np.shape(u), np.shape(v))[:-1])

    def sample(self, count, rng):
        ph = rng.uniform(0, 2 * math.pi, count)
        z = rng.uniform(-self.window, self.window, count)
        return np.stack([self.radius * np.cos(ph), self.radius * np.sin(ph), z], -1)

    def region_sample(self, count):
        u = _halton(count, 2)
        ph = 2 * math.pi * u[:, 0]
        z = (2 * u[:, 1] - 1) * self.window
        return np.stack([self.radius * np.cos(ph), self.radius * np.sin(ph), z], -1)

    def base_point(self):
        return np.array([self.radius, 0.0, 0.0])

    @property
    def chart(self):
        r = self.radius
        return ChartQuadrature(
            param=lambda ph, z: np.stack([r * np.cos(ph) + 0 * z, r * np.sin(ph) + 0 * z, z + 0 * ph], -1),
            area=lambda ph, z: r + 0 * ph + 0 * z,
            bounds=((0.0, 2 * math.pi), (None, None)),
        )


class Paraboloid(Hypersurface):
    """z = kappa (x^2 + y^2) / 2."""

    name = "paraboloid"
    window = 1.5

    def __init__(self, kappa=1.0):
        super().__init__(2, {"kappa": kappa})
        self.kappa = float(kappa)
        # K <= kappa^2 with equality at the apex
        self.injectivity_radius = math.pi / self.kappa

    def g(self, x):
        return 0.5 * self.kappa * (x[..., 0] ** 2 + x[..., 1] ** 2) - x[..., 2]

    def dg(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([self.kappa * x[..., 0], self.kappa * x[..., 1], -np.ones(x.shape[:-1])], -1)

    def d2g(self, x):
        return np.broadcast_to(np.diag([self.kappa, self.kappa, 0.0]), np.shape(x)[:-1] + (3, 3))

    def gauss_curvature(self, x):
        rho2 = x[..., 0] ** 2 + x[..., 1] ** 2
        return self.kappa**2 / (1 + self.kappa**2 * rho2) ** 2

    def ricci(self, x, u, v):
        return self.gauss_curvature(x) * dot(u, v)

    def _lift(self, xy):
        z = 0.5 * self.kappa * np.sum(xy**2, axis=-1)
        return np.concatenate([xy, z[..., None]], axis=-1)

    def sample(self, count, rng):
        return self._lift(rng.uniform(-self.window, self.window, size=(count, 2)))

    def region_sample(self, count):
        return self._lift((2 * _halton(count, 2) - 1) * self.window)

    def base_point(self):
        return np.zeros(3)

    @property
    def chart(self):
        k = self.kappa
        return ChartQuadrature(
            param=lambda rho, ph: np.stack([rho * np.cos(ph), rho * np.sin(ph), 0.5 * k * rho**2 + 0 * ph], -1),
            area=lambda rho, ph: rho * np.sqrt(1 + (k * rho) ** 2) + 0 * ph,
            bounds=((0.0, None), (0.0, 2 * math.pi)),
        )


class ImplicitSurface(Hypersurface):
    """Generic surface {g = 0} in R^3 from a named built-in constraint.

    Normal, second fundamental form and retraction come from the derivatives
    of g; Ricci curvature comes from the Gauss equation. The injectivity
    radius bound has to be supplied by the caller.
    """

    name = "implicit"

    def __init__(self, constraint, injectivity_radius=None):
        super().__init__(2, {"constraint": constraint.describe(), "inj": injectivity_radius})
        self.constraint = constraint
        self.injectivity_radius = injectivity_radius
        self.compact = constraint.compact

    def g(self, x):
        return self.constraint.g(x)

    def dg(self, x):
        return self.constraint.dg(x)

    def d2g(self, x):
        return self.constraint.d2g(x)

    def sample(self, count, rng):
        return self.retract(self.constraint.param(*self.constraint.random_params(count, rng)))

    def region_sample(self, count):
        return self.retract(self.constraint.param(*self.constraint.qmc_params(count)))

    def base_point(self):
        return self.retract(self.constraint.param(np.array(0.0), np.array(0.0)))

    @property
    def chart(self):
        c = self.constraint
        return ChartQuadrature(c.param, c.area, c.bounds)


class TorusConstraint:
    """(sqrt(x^2 + y^2) - R)^2 + z^2 - r^2 = 0, with its angle parametrization."""

    compact = True

    def __init__(self, R=2.0, r=0.5):
        if not R > r > 0:
            raise ValueError("torus needs R > r > 0")
        self.R, self.r = float(R), float(r)
        self.bounds = ((0.0, 2 * math.pi), (0.0, 2 * math.pi))

    def describe(self):
        return f"torus(R={self.R!r}, r={self.r!r})"

    def g(self, x):
        rho = np.hypot(x[..., 0], x[..., 1])
        return (rho - self.R) ** 2 + x[..., 2] ** 2 - self.r**2

    def dg(self, x):
        x = np.asarray(x, dtype=float)
        rho = np.hypot(x[..., 0], x[..., 1])
        f = 2 * (rho - self.R) / rho
        return np.stack([f * x[..., 0], f * x[..., 1], 2 * x[..., 2]], -1)

    def d2g(self, x):
        x = np.asarray(x, dtype=float)
        X, Y = x[..., 0], x[..., 1]
        rho = np.hypot(X, Y)
        a = 2 * (rho - self.R) / rho
        b = 2 * self.R / rho**3
        out = np.zeros(x.shape[:-1] + (3, 3))
        out[..., 0, 0] = a + b * X * X
        out[..., 1, 1] = a + b * Y * Y
        out[..., 0, 1] = out[..., 1, 0] = b * X * Y
        out[..., 2, 2] = 2.0
        return out

    def param(self, th, ph):
        th, ph = np.broadcast_arrays(th, ph)
        w = self.R + self.r * np.cos(th)
        return np.stack([w * np.cos(ph), w * np.sin(ph), self.r * np.sin(th)], -1)

    def area(self, th, ph):
        return self.r * (self.R + self.r * np.cos(th)) + 0 * ph

    def random_params(self, count, rng):
        return rng.uniform(0, 2 * math.pi, count), rng.uniform(0, 2 * math.pi, count)

    def qmc_params(self, count):
        u = _halton(count, 2) * 2 * math.pi
        return u[:, 0], u[:, 1]
