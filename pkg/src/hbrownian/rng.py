"""Counter-based random streams.

Every path owns a Philox stream keyed by ``(seed, path, purpose, level)``, so
the numbers a path sees never depend on how paths are grouped into batches or
distributed over workers. Finer time grids are obtained from coarser ones by
Brownian-bridge subdivision, which keeps the underlying Brownian path fixed
under dt-refinement.
"""

import numpy as np

_INCREMENTS = 0
_INITIAL = 1


def generator(seed, path, purpose=_INCREMENTS, level=0):
    """Philox generator for one ``(seed, path, purpose, level)`` key."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path), int(purpose), int(level)))
    return np.random.Generator(np.random.Philox(ss))


def initial_generator(seed, path):
    """Stream used for per-path initial data (e.g. the starting direction)."""
    return generator(seed, path, purpose=_INITIAL)


class IncrementStream:
    """Sequential Brownian increments for one path at refinement ``level``.

    Level 0 draws N(0, dt0) increments directly. Level L > 0 splits each
    level L-1 increment ``dB`` over ``h`` into ``dB/2 + sqrt(h)/2 * Z`` and its
    complement, with ``Z`` from the level-L stream. Draws are sequential, so
    asking for 10 steps then 20 steps yields the same numbers as asking for 30.
    """

    def __init__(self, seed, path, dim, dt0, level=0):
        self.dim = dim
        self.level = level
        self.dt0 = dt0
        self._gens = [generator(seed, path, level=k) for k in range(level + 1)]
        self._pending = np.empty((0, dim))

    @property
    def dt(self):
        return self.dt0 / 2**self.level

    def _coarse(self, k, count):
        # ``count`` increments at level k
        if k == 0:
            return self._gens[0].standard_normal((count, self.dim)) * np.sqrt(self.dt0)
        n_parent = count // 2
        parent = self._coarse(k - 1, n_parent)
        h = self.dt0 / 2 ** (k - 1)
        z = self._gens[k].standard_normal((n_parent, self.dim))
        first = 0.5 * parent + 0.5 * np.sqrt(h) * z
        out = np.empty((2 * n_parent, self.dim))
        out[0::2] = first
        out[1::2] = parent - first
        return out

    def draw(self, count):
        """Next ``count`` increments, shape ``(count, dim)``."""
        block = 2**self.level
        need = count - len(self._pending)
        if need > 0:
            n_new = -(-need // block) * block
            self._pending = np.concatenate([self._pending, self._coarse(self.level, n_new)])
        out, self._pending = self._pending[:count], self._pending[count:]
        return out


def batch_increments(streams, count):
    """Stack ``count`` increments from each stream, shape ``(n_paths, count, dim)``."""
    return np.stack([s.draw(count) for s in streams])
