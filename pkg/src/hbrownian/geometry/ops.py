"""Pointwise geometric operations with input validation, plus the invariant
suite behind ``geometry-check``."""

import numpy as np

from ..errors import DomainError, NotApplicable
from .manifolds import dot


def gradient_diffusion_fields(M, x):
    """Matrix of e -> P(x) e; column i is the field X^i(x) = P(x) e_i."""
    x = M.check_point(x)
    return M.projector(x)


def nabla_X(M, x, v):
    """Covariant derivatives nabla X^i(v) = A_x(v, Y(x) e_i) for i = 1..m.

    Returns an array of shape ``(m, m)`` (one row per i) built from the shape
    operator, with Y(x) the orthogonal projection onto the normal space.
    """
    x = M.check_point(x)
    v = M.check_tangent(x, v)
    Y = np.eye(M.ambient_dim) - M.projector(x)
    return np.stack([M.shape_operator(x, v, Y[:, i]) for i in range(M.ambient_dim)])


def second_fundamental_norms(M, x, v, via="sff"):
    """(|alpha(v, .)|^2_HS, |alpha(v, v)|^2).

    ``via="sff"`` evaluates alpha on an orthonormal tangent basis;
    ``via="fields"`` sums |nabla X^i(v)|^2 and <nabla X^i(v), v>^2 over the
    diffusion fields.
    """
    x = M.check_point(x)
    v = M.check_tangent(x, v)
    if not np.linalg.norm(v) > 0:
        raise DomainError("v must be nonzero")
    if via == "fields":
        fields = nabla_X(M, x, v)
        return float(np.sum(fields**2)), float(np.sum((fields @ v) ** 2))
    E = M.tangent_basis(x)
    hs = sum(float(dot(a, a)) for a in (M.sff(x, v, e) for e in E))
    a = M.sff(x, v, v)
    return hs, float(dot(a, a))


def h_gradient_and_hessian(S, x):
    """Riemannian gradient of h and its Hessian as a matrix in the tangent basis.

    Returns ``(grad, E, hess)``: ``hess[a, b] = Hess h(E_a, E_b)``.
    """
    x = S.check_point(x)
    E = S.manifold.tangent_basis(x)
    n = len(E)
    hess = np.array([[S.hess_h(x, E[a], E[b]) for b in range(n)] for a in range(n)])
    return S.grad_h(x), E, hess


def gauss_ricci_residual(M, x):
    """max_j |Ric(e_j, e_j) - sum_k [<alpha(e_j,e_j), alpha(e_k,e_k)> - |alpha(e_j,e_k)|^2]|.

    Computed from alpha directly (not through the Weingarten shortcut) and
    compared with the catalog's own Ricci form.
    """
    if not M.is_hypersurface and M.codim != 0:
        raise NotApplicable("Gauss residual is implemented for hypersurfaces")
    x = M.check_point(x)
    E = M.tangent_basis(x)
    worst = 0.0
    # rotated frame as well, so off-diagonal Ricci entries are exercised
    Q = np.linalg.qr(np.arange(1, len(E) ** 2 + 1).reshape(len(E), len(E)) + np.eye(len(E)))[0]
    for frame in (E, Q.T @ E):
        for v in frame:
            gauss = sum(dot(M.sff(x, v, v), M.sff(x, e, e)) - dot(M.sff(x, v, e), M.sff(x, v, e)) for e in E)
            worst = max(worst, abs(float(M.ricci(x, v, v) - gauss)))
    return worst


def invariant_report(M, points, rng):
    """Worst-case violations of the manifold invariants over ``points``.

    Keys map to ``(worst value, tolerance)``.
    """
    points = np.asarray(points, dtype=float)
    P = M.projector(points)
    nu = M.normal_frame(points)
    E = M.tangent_basis(points)
    u = M.project_tangent(points, rng.standard_normal(points.shape))
    w = M.project_tangent(points, rng.standard_normal(points.shape))
    a_uw, a_wu = M.sff(points, u, w), M.sff(points, w, u)
    r = {
        "projector_idempotent": (np.max(np.abs(P @ P - P)), 1e-10),
        "projector_symmetric": (np.max(np.abs(P - np.swapaxes(P, -1, -2))), 1e-10),
        "projector_rank": (np.max(np.abs(np.trace(P, axis1=-2, axis2=-1) - M.dim)), 1e-8),
        "normal_orthogonal": (
            np.max(np.abs(np.einsum("...ij,...kj->...ik", P, nu))) if M.codim else 0.0,
            1e-10,
        ),
        "tangent_basis_orthonormal": (
            np.max(np.abs(np.einsum("...ai,...bi->...ab", E, E) - np.eye(M.dim))),
            1e-10,
        ),
        "sff_symmetric": (np.max(np.abs(a_uw - a_wu)), 1e-10),
        "sff_normal": (np.max(np.abs(np.einsum("...ij,...j->...i", P, a_uw))), 1e-10),
        "membership": (np.max(np.abs(M.distance(points))), 1e-10),
        "retraction_idempotent": (np.max(np.abs(M.retract(M.retract(points)) - M.retract(points))), 1e-10),
        "retraction_moves_on_manifold_points": (np.max(np.abs(M.retract(points) - points)), M.membership_tolerance),
    }
    if M.codim <= 1:
        r["gauss_residual"] = (max(gauss_ricci_residual(M, x) for x in points), 1e-8)
    # second_fundamental_norms two ways
    worst = 0.0
    for x, v in zip(points, u):
        if np.linalg.norm(v) < 1e-12:
            continue
        a = np.array(second_fundamental_norms(M, x, v))
        b = np.array(second_fundamental_norms(M, x, v, via="fields"))
        worst = max(worst, float(np.max(np.abs(a - b))))
    r["sff_norms_consistent"] = (worst, 1e-9)
    return {k: (float(val), tol) for k, (val, tol) in r.items()}
