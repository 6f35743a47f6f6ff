import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hbrownian.errors import DomainError
from hbrownian.stats import EnsembleStats, ExactSum, fit_exponent, integrability_integral

floats = st.floats(-1e12, 1e12, allow_nan=False)


def test_fit_exact_exponential():
    t = np.arange(0, 4.0001, 0.1)
    mu, ci = fit_exponent(t, 3 * np.exp(-0.7 * t))
    assert abs(mu + 0.7) < 1e-9 and ci[0] <= mu <= ci[1]


def test_fit_constant():
    t = np.linspace(0, 2, 21)
    mu, _ = fit_exponent(t, np.full_like(t, 5.0))
    assert abs(mu) < 1e-12


def test_fit_perturbed():
    gen = np.random.default_rng(0)
    t = np.linspace(0, 8, 81)
    mu, ci = fit_exponent(t, np.exp(-0.5 * t) * np.exp(0.01 * gen.standard_normal(t.size)))
    assert abs(mu + 0.5) < 0.02 and ci[0] < -0.5 < ci[1]


def test_fit_errors():
    with pytest.raises(DomainError):
        fit_exponent([0, 1, 2, 3], [1, 0, 1, 1])
    with pytest.raises(DomainError):
        fit_exponent([0, 1, 2], [1, 1, 1])


@given(values=st.lists(floats, min_size=1, max_size=60), seed=st.integers(0, 1000))
def test_exact_sum_is_order_independent(values, seed):
    perm = np.random.default_rng(seed).permutation(len(values))
    a = ExactSum().add(values).value()
    b = ExactSum().add([values[i] for i in perm]).value()
    assert a == b == math.fsum(values)


@given(values=st.lists(floats, min_size=3, max_size=60), cuts=st.tuples(st.integers(0, 60), st.integers(0, 60)))
def test_three_way_merge_is_associative(values, cuts):
    i, j = sorted(c % (len(values) + 1) for c in cuts)
    parts = [values[:i], values[i:j], values[j:]]

    def stats(v):
        return EnsembleStats(1).add(np.array(v, dtype=float).reshape(-1, 1))

    left = stats(parts[0]).merge(stats(parts[1])).merge(stats(parts[2]))
    right = stats(parts[0]).merge(stats(parts[1]).merge(stats(parts[2])))
    whole = stats(values)
    for k in (1, 2, 3, 4):
        assert np.array_equal(left.power_sum(k), right.power_sum(k))
        assert np.array_equal(left.power_sum(k), whole.power_sum(k))


def test_moments_match_numpy(gen):
    x = gen.standard_normal((1000, 3))
    st_ = EnsembleStats(3).add(x)
    assert np.allclose(st_.mean(), x.mean(0))
    assert np.allclose(st_.variance(), x.var(0, ddof=1))
    mu, lo, hi = st_.confidence()
    assert np.all(lo < mu) and np.all(mu < hi)
    assert np.allclose(st_.kurtosis(), 3, atol=0.5)


def test_integrability_synthetic():
    # int_0^inf 3 e^{-0.7 t} dt = 4.2857...
    t = np.arange(0, 5.0001, 0.05)
    res = integrability_integral(t, 3 * np.exp(-0.7 * t), -0.7, (-0.72, -0.68))
    assert not res.diverged and abs(res.value / (3 / 0.7) - 1) < 0.02


def test_integrability_diverged_when_rate_not_negative():
    t = np.linspace(0, 1, 11)
    assert integrability_integral(t, np.ones(11), 0.0, (-0.1, 0.1)).diverged
    assert integrability_integral(t, np.ones(11), -0.1, (-0.2, 0.01)).to_dict()["value"] is None
