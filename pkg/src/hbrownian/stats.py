"""Order-independent ensemble statistics and exponent fitting.

Power sums are kept as exact non-overlapping float expansions (Shewchuk
partials), so merging partial ensembles in any grouping or order gives the
same bits as a single pass. Rounding to a float happens only on read-out.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import DomainError

Z95 = float(sps.norm.ppf(0.975))
KURTOSIS_WARNING = 100.0


def _grow(partials, x):
    i = 0
    for y in partials:
        if abs(x) < abs(y):
            x, y = y, x
        hi = x + y
        lo = y - (hi - x)
        if lo:
            partials[i] = lo
            i += 1
        x = hi
    partials[i:] = [x]


class ExactSum:
    """Exact running sum of floats."""

    __slots__ = ("partials", "special")

    def __init__(self):
        self.partials = []
        self.special = 0.0  # inf/nan contributions, kept apart

    def add(self, values):
        for x in np.ravel(values).tolist():
            if math.isfinite(x):
                _grow(self.partials, x)
            else:
                self.special += x
        return self

    def merge(self, other):
        for x in other.partials:
            _grow(self.partials, x)
        self.special += other.special
        return self

    def value(self):
        return math.fsum(self.partials) + self.special


class EnsembleStats:
    """Per-column power sums (orders 1..4) and censoring counts of a series.

    ``add(values, censored)`` takes arrays of shape (N, G): one row per path,
    one column per grid time.
    """

    ORDERS = 4

    def __init__(self, n_columns):
        self.n_columns = n_columns
        self.count = 0
        self.sums = [[ExactSum() for _ in range(n_columns)] for _ in range(self.ORDERS)]
        self.censored = np.zeros(n_columns, dtype=np.int64)

    def add(self, values, censored=None):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != self.n_columns:
            raise DomainError("values must have shape (paths, columns)")
        self.count += len(values)
        power = np.ones_like(values)
        for k in range(self.ORDERS):
            power = power * values
            for j in range(self.n_columns):
                self.sums[k][j].add(power[:, j])
        if censored is not None:
            self.censored += np.asarray(censored, dtype=bool).sum(axis=0)
        return self

    def merge(self, other):
        if other.n_columns != self.n_columns:
            raise DomainError("cannot merge ensembles with different grids")
        self.count += other.count
        for k in range(self.ORDERS):
            for j in range(self.n_columns):
                self.sums[k][j].merge(other.sums[k][j])
        self.censored = self.censored + other.censored
        return self

    def power_sum(self, order):
        return np.array([s.value() for s in self.sums[order - 1]])

    def mean(self):
        return self.power_sum(1) / self.count

    def variance(self):
        n = self.count
        mu = self.mean()
        return np.maximum(self.power_sum(2) / n - mu * mu, 0.0) * n / max(n - 1, 1)

    def kurtosis(self):
        """Non-excess sample kurtosis per column (nan where variance vanishes)."""
        n = self.count
        mu = self.mean()
        s1, s2, s3, s4 = (self.power_sum(k) / n for k in (1, 2, 3, 4))
        m2 = s2 - mu * mu
        m4 = s4 - 4 * mu * s3 + 6 * mu * mu * s2 - 3 * mu**4
        with np.errstate(all="ignore"):
            return np.where(m2 > 1e-14 * np.maximum(s2, 1e-300), m4 / (m2 * m2), np.nan)

    def confidence(self):
        """Mean with a 95% normal-approximation interval."""
        mu = self.mean()
        half = Z95 * np.sqrt(self.variance() / self.count)
        return mu, mu - half, mu + half

    def heavy_tailed(self):
        k = self.kurtosis()
        return bool(np.any(np.nan_to_num(k) > KURTOSIS_WARNING))


def fit_exponent(times, values, window_fraction=0.5):
    """OLS slope of log(values) on times over the trailing window, with a 95% CI."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape:
        raise DomainError("times and values differ in length")
    if not 0 < window_fraction <= 1:
        raise DomainError("window_fraction must lie in (0, 1]")
    if np.any(~(values > 0)):
        raise DomainError("values must be positive to fit an exponent")
    start = int(math.floor(len(times) * (1 - window_fraction)))
    t, y = times[start:], np.log(values[start:])
    if len(t) < 4:
        raise DomainError("need at least 4 points in the fit window")
    res = sps.linregress(t, y)
    half = float(sps.t.ppf(0.975, len(t) - 2)) * res.stderr
    return float(res.slope), (float(res.slope - half), float(res.slope + half))


def trapezoid(y, t):
    y, t = np.asarray(y, dtype=float), np.asarray(t, dtype=float)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


@dataclass
class IntegrabilityResult:
    value: float
    diverged: bool
    observed: float
    tail: float

    def to_dict(self):
        return {
            "value": None if self.diverged else self.value,
            "diverged": self.diverged,
            "observed": self.observed,
            "tail": self.tail,
        }


def integrability_integral(times, mean, fitted_mu, fitted_mu_ci):
    """int_0^inf of a moment curve: trapezoid on the grid plus the fitted
    exponential tail; diverged unless the fitted rate is negative with a CI
    excluding zero."""
    observed = trapezoid(mean, times)
    if not (fitted_mu < 0 and fitted_mu_ci[1] < 0):
        return IntegrabilityResult(math.inf, True, observed, math.inf)
    tail = float(mean[-1]) / abs(fitted_mu)
    return IntegrabilityResult(observed + tail, False, observed, tail)
