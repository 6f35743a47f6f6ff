"""Ambient functions H: R^m -> R whose restrictions give the drift potential h,
plus ambient vector fields used as optional extra drift."""

import numpy as np


class Potential:
    """Ambient extension H with exact gradient and Hessian (batched)."""

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    def describe(self):
        return self.name

    def __repr__(self):
        return self.describe()

    def __add__(self, other):
        return Combination([(1.0, self), (1.0, other)])

    def __rmul__(self, scale):
        return Combination([(float(scale), self)])


class Zero(Potential):
    name = "zero"

    def value(self, x):
        return np.zeros(np.shape(x)[:-1])

    def grad(self, x):
        return np.zeros(np.shape(x))

    def hess(self, x):
        m = np.shape(x)[-1]
        return np.zeros(np.shape(x)[:-1] + (m, m))


class Height(Potential):
    """H(x) = scale * x[axis]; ``axis=None`` means the last coordinate."""

    name = "height"

    def __init__(self, scale=1.0, axis=None):
        self.scale = float(scale)
        self.axis = axis

    def describe(self):
        return f"height(scale={self.scale!r}, axis={self.axis!r})"

    def _axis(self, m):
        return m - 1 if self.axis is None else int(self.axis)

    def value(self, x):
        return self.scale * np.asarray(x)[..., self._axis(np.shape(x)[-1])]

    def grad(self, x):
        out = np.zeros(np.shape(x))
        out[..., self._axis(np.shape(x)[-1])] = self.scale
        return out

    def hess(self, x):
        m = np.shape(x)[-1]
        return np.zeros(np.shape(x)[:-1] + (m, m))


class QuadraticRadial(Potential):
    """H(x) = -scale * |x|^2 / 2. With scale 1 on flat R^n, e^{2h} is the Gaussian e^{-|x|^2}."""

    name = "quadratic"

    def __init__(self, scale=1.0):
        self.scale = float(scale)

    def describe(self):
        return f"quadratic(scale={self.scale!r})"

    def value(self, x):
        return -0.5 * self.scale * np.sum(np.asarray(x) ** 2, axis=-1)

    def grad(self, x):
        return -self.scale * np.asarray(x, dtype=float)

    def hess(self, x):
        m = np.shape(x)[-1]
        return np.broadcast_to(-self.scale * np.eye(m), np.shape(x)[:-1] + (m, m))


class Combination(Potential):
    """Linear combination sum_k c_k H_k."""

    def __init__(self, terms):
        flat = []
        for c, pot in terms:
            if isinstance(pot, Combination):
                flat.extend((c * c2, p2) for c2, p2 in pot.terms)
            else:
                flat.append((float(c), pot))
        self.terms = flat

    def describe(self):
        return " + ".join(f"{c!r}*{p.describe()}" for c, p in self.terms)

    def value(self, x):
        return sum(c * p.value(x) for c, p in self.terms)

    def grad(self, x):
        return sum(c * p.grad(x) for c, p in self.terms)

    def hess(self, x):
        return sum(c * p.hess(x) for c, p in self.terms)


class Rotation:
    """Ambient linear field x -> omega * J x rotating the first two coordinates.

    Tangent to spheres and cylinders centred on the z-axis; used for
    non-gradient drift experiments.
    """

    def __init__(self, omega=1.0):
        self.omega = float(omega)

    def describe(self):
        return f"rotation(omega={self.omega!r})"

    def _matrix(self, m):
        J = np.zeros((m, m))
        J[0, 1], J[1, 0] = -self.omega, self.omega
        return J

    def value(self, x):
        return np.einsum("ij,...j->...i", self._matrix(np.shape(x)[-1]), x)

    def jacobian(self, x):
        m = np.shape(x)[-1]
        return np.broadcast_to(self._matrix(m), np.shape(x)[:-1] + (m, m))
