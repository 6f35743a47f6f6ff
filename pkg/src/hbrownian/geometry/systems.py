"""Stochastic systems dx = X(x) o dB + A(x) dt consumed by the integrator.

Two families share one batched interface:

* ``SDESystem``: the gradient h-Brownian system of an embedded manifold,
  X(x) e = P(x) e and A = grad h (+ an optional extra tangent drift).
* ``FlatFieldSystem``: arbitrary smooth fields on R^d with ordinary
  derivatives, e.g. the Brownian system X = (sin x, cos x) on the line.

Shapes: points ``(..., d)``, diffusion matrices ``(..., d, m)`` whose column i
is the field X^i, and curvature forms expressed in an orthonormal tangent
basis ``E`` of shape ``(..., n, d)``.
"""

import numpy as np

from ..errors import NotApplicable
from .manifolds import Flat, dot
from .potentials import Zero


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


class _SystemBase:
    def log_growth(self, x, v):
        """Vector (<nabla X^i(v), v> / |v|^2)_i, the integrand of log|v_t|'s martingale part."""
        nX = self.nabla_X(x, v)
        return np.einsum("...ji,...j->...i", nX, v) / dot(v, v)[..., None]

    def H_form(self, x, v, p):
        """H_p(x)(v, v) for tangent v (batched)."""
        E, B, C = self.curvature_forms(x)
        c = np.einsum("...aj,...j->...a", E, v)
        quad = np.einsum("...a,...ab,...b->...", c, B, c)
        diag = np.einsum("...a,...kab,...b->...k", c, C, c)
        return quad + (p - 2) * np.sum(diag**2, axis=-1) / dot(c, c)

    def explosion_norm(self, x):
        return np.sqrt(dot(x, x))


class SDESystem(_SystemBase):
    """Gradient h-Brownian system on an embedded manifold.

    ``diffusion_scale`` multiplies every diffusion field; 1 gives generator
    (1/2) Delta + grad h, 0 gives the deterministic gradient flow.
    """

    def __init__(self, manifold, potential=None, extra_drift=None, diffusion_scale=1.0):
        self.manifold = manifold
        self.potential = Zero() if potential is None else potential
        self.extra_drift = extra_drift
        self.diffusion_scale = float(diffusion_scale)

    def describe(self):
        parts = [self.manifold.describe(), f"h={self.potential.describe()}"]
        if self.extra_drift is not None:
            parts.append(f"extra={self.extra_drift.describe()}")
        if self.diffusion_scale != 1.0:
            parts.append(f"sigma={self.diffusion_scale!r}")
        return "SDESystem(" + ", ".join(parts) + ")"

    __repr__ = describe

    @property
    def dim(self):
        return self.manifold.dim

    @property
    def state_dim(self):
        return self.manifold.ambient_dim

    @property
    def noise_dim(self):
        return self.manifold.ambient_dim

    @property
    def is_gradient(self):
        return self.extra_drift is None

    # -- manifold passthrough ----------------------------------------------
    def retract(self, x):
        return self.manifold.retract(x)

    def project_tangent(self, x, v):
        return self.manifold.project_tangent(x, v)

    def check_point(self, x):
        return self.manifold.check_point(x)

    def check_tangent(self, x, v):
        return self.manifold.check_tangent(x, v)

    # -- potential ------------------------------------------------------------
    def h(self, x):
        return self.potential.value(x)

    def grad_h(self, x):
        return self.manifold.project_tangent(x, self.potential.grad(x))

    def hess_h(self, x, u, v):
        """Hess h(u, v) = <D^2 H u, v> + <grad H, alpha(u, v)>."""
        amb = np.einsum("...i,...ij,...j->...", u, self.potential.hess(x), v)
        return amb + dot(self.potential.grad(x), self.manifold.sff(x, u, v))

    # -- coefficients -----------------------------------------------------------
    def _ambient_drift(self, x):
        c = self.potential.grad(x)
        if self.extra_drift is not None:
            c = c + self.extra_drift.value(x)
        return c

    def _ambient_drift_jacobian(self, x):
        J = self.potential.hess(x)
        if self.extra_drift is not None:
            J = J + self.extra_drift.jacobian(x)
        return J

    def drift(self, x):
        return self.manifold.project_tangent(x, self._ambient_drift(x))

    def drift_jvp(self, x, v):
        """Ambient derivative of the drift field P(x) c(x) along tangent v."""
        c = self._ambient_drift(x)
        Dc = np.einsum("...ij,...j->...i", self._ambient_drift_jacobian(x), v)
        dP = self.manifold.projector_derivative(x, v)
        return self.manifold.project_tangent(x, Dc) + np.einsum("...ij,...j->...i", dP, c)

    def nabla_drift(self, x, v):
        """Covariant derivative nabla A(v): tangential part of ``drift_jvp``."""
        return self.manifold.project_tangent(x, self.drift_jvp(x, v))

    def diffusion(self, x):
        return self.diffusion_scale * self.manifold.projector(x)

    def diffusion_jvp(self, x, v):
        """Ambient derivatives of the fields X^i along v (column i)."""
        return self.diffusion_scale * self.manifold.projector_derivative(x, v)

    def nabla_X(self, x, v):
        """Covariant derivatives nabla X^i(v) = A_x(v, Y(x) e_i), column i."""
        dP = self.manifold.projector_derivative(x, v)
        P = self.manifold.projector(x)
        return self.diffusion_scale * np.einsum("...jk,...ki->...ji", P, dP)

    # -- curvature -----------------------------------------------------------------
    def curvature_forms(self, x):
        """(E, B, C) with H_p(v, v) = c^T B c + (p - 2) sum_k (c^T C_k c)^2 / |c|^2 for v = c^T E.

        B collects -Ric + 2 sym(nabla A) + |alpha(v, .)|^2_HS; C_k holds the
        components <nabla X^k(E_a), E_b>.
        """
        M = self.manifold
        x = np.asarray(x, dtype=float)
        E = M.tangent_basis(x)
        n = M.dim
        s2 = self.diffusion_scale**2
        bshape = x.shape[:-1]
        ric = np.empty(bshape + (n, n))
        nabA = np.empty(bshape + (n, n))
        nX = []
        for a in range(n):
            Ea = E[..., a, :]
            nX.append(self.nabla_X(x, Ea))
            dA = self.nabla_drift(x, Ea)
            for b in range(n):
                Eb = E[..., b, :]
                ric[..., a, b] = M.ricci(x, Ea, Eb)
                nabA[..., b, a] = dot(dA, Eb)
        nX = np.stack(nX, axis=-3)  # (..., n, d, m)
        hs = np.einsum("...aji,...bji->...ab", nX, nX)
        B = s2 * (-_sym(ric)) + 2 * _sym(nabA) + _sym(hs)
        C = _sym(np.einsum("...aji,...bj->...iab", nX, E))
        return E, B, C

    def rho_form(self, x):
        """(E, R) with R = Ric - 2 Hess h in the tangent basis E."""
        M = self.manifold
        E = M.tangent_basis(x)
        n = M.dim
        R = np.empty(np.shape(x)[:-1] + (n, n))
        for a in range(n):
            for b in range(n):
                Ea, Eb = E[..., a, :], E[..., b, :]
                R[..., a, b] = M.ricci(x, Ea, Eb) - 2 * self.hess_h(x, Ea, Eb)
        return E, _sym(R)


class FlatFieldSystem(_SystemBase):
    """Smooth fields on R^d with ordinary derivatives.

    Subclasses implement ``X`` (shape (..., d, m)), ``DX`` with
    ``DX[..., j, i, k] = d X^i_j / d x_k``, ``D2X`` (one more trailing axis),
    ``A`` and ``DA``. ``brownian`` marks systems whose generator is (1/2) Delta
    for the Euclidean metric, for which Ric = 0 and h = 0.
    """

    brownian = False

    def __init__(self, dim, noise_dim):
        self.manifold = Flat(dim)
        self._noise_dim = noise_dim

    @property
    def dim(self):
        return self.manifold.dim

    @property
    def state_dim(self):
        return self.manifold.dim

    @property
    def noise_dim(self):
        return self._noise_dim

    is_gradient = False

    def retract(self, x):
        return np.asarray(x, dtype=float)

    def project_tangent(self, x, v):
        return np.asarray(v, dtype=float)

    def check_point(self, x):
        return self.manifold.check_point(x)

    def check_tangent(self, x, v):
        return np.asarray(v, dtype=float)

    def h(self, x):
        return np.zeros(np.shape(x)[:-1])

    def A(self, x):
        return np.zeros(np.shape(x))

    def DA(self, x):
        d = self.dim
        return np.zeros(np.shape(x)[:-1] + (d, d))

    def drift(self, x):
        return self.A(x)

    def drift_jvp(self, x, v):
        return np.einsum("...ij,...j->...i", self.DA(x), v)

    nabla_drift = drift_jvp

    def diffusion(self, x):
        return self.X(x)

    def diffusion_jvp(self, x, v):
        return np.einsum("...jik,...k->...ji", self.DX(x), v)

    nabla_X = diffusion_jvp

    def curvature_forms(self, x):
        """General H_p from first and second derivatives of the fields."""
        x = np.asarray(x, dtype=float)
        d = self.dim
        E = np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d))
        X, J, J2 = self.X(x), self.DX(x), self.D2X(x)
        Ji = np.moveaxis(J, -2, -3)  # (..., m, d, d): J_i[j, k]
        second = np.einsum("...jiab,...ai->...jb", J2, X)
        composed = np.einsum("...ijk,...ikl->...jl", Ji, Ji)
        hs = np.einsum("...ijk,...ijl->...kl", Ji, Ji)
        B = 2 * _sym(self.DA(x)) + _sym(second) + _sym(composed) + hs
        C = _sym(Ji)
        return E, B, C

    def rho_form(self, x):
        if not self.brownian:
            raise NotApplicable("rho^h needs a Brownian system")
        d = self.dim
        return np.broadcast_to(np.eye(d), np.shape(x)[:-1] + (d, d)), np.zeros(np.shape(x)[:-1] + (d, d))


class LineSinCos(FlatFieldSystem):
    """Brownian system on R^1 driven by X(x) = (sin x, cos x) with two noises."""

    brownian = True

    def __init__(self):
        super().__init__(1, 2)

    def describe(self):
        return "LineSinCos()"

    __repr__ = describe

    def X(self, x):
        t = np.asarray(x, dtype=float)[..., 0]
        return np.stack([np.sin(t), np.cos(t)], -1)[..., None, :]

    def DX(self, x):
        t = np.asarray(x, dtype=float)[..., 0]
        return np.stack([np.cos(t), -np.sin(t)], -1)[..., None, :, None]

    def D2X(self, x):
        t = np.asarray(x, dtype=float)[..., 0]
        return np.stack([-np.sin(t), -np.cos(t)], -1)[..., None, :, None, None]
