import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hbrownian.curvature import H_p_form, criterion_report, h_p_inf, h_p_sup, hp_extrema, rho_h, rho_h_values
from hbrownian.errors import DomainError
from hbrownian.geometry import make_system


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0])
def test_sphere_closed_form(n, p, gen):
    S = make_system(f"sphere:{n}")
    x = S.manifold.sample(5, gen)
    for xi in x:
        v = S.manifold.project_tangent(xi, gen.standard_normal(n + 1))
        assert H_p_form(S, xi, v / np.linalg.norm(v), p) == pytest.approx(p - n, abs=1e-12)
    up, lo = hp_extrema(S, x, p)
    assert np.allclose(up, p * (p - n), atol=1e-10)
    assert np.allclose(lo, p * (p - n), atol=1e-10)


def test_flat_is_zero():
    S = make_system("flat:3")
    assert h_p_sup(S, np.ones(3), 1.5) == 0
    assert h_p_inf(S, np.ones(3), 1.5) == 0


@pytest.mark.parametrize("c", [2.0, 10.0, 0.5])
def test_form_is_2_homogeneous(c, gen):
    S = make_system("ellipsoid:1,1,1.5", "height")
    x = S.manifold.sample(1, gen)[0]
    v = S.manifold.project_tangent(x, gen.standard_normal(3))
    assert H_p_form(S, x, c * v, 1.3) == pytest.approx(c * c * H_p_form(S, x, v, 1.3), rel=1e-12)


def test_zero_vector_rejected():
    S = make_system("sphere:2")
    with pytest.raises(DomainError):
        H_p_form(S, np.array([0, 0, 1.0]), np.zeros(3), 1.0)


@given(seed=st.integers(0, 2**32 - 1), p=st.floats(1.0, 4.0))
def test_extrema_bracket_random_directions(seed, p):
    S = make_system("ellipsoid:1,1,1.5", "height+0.5*quadratic")
    gen = np.random.default_rng(seed)
    x = S.manifold.sample(1, gen)[0]
    up, lo = hp_extrema(S, x[None], p)
    for _ in range(50):
        v = S.manifold.project_tangent(x, gen.standard_normal(3))
        val = p * H_p_form(S, x, v / np.linalg.norm(v), p)
        assert lo[0] - 1e-9 <= val <= up[0] + 1e-9


def test_extrema_match_brute_force_on_ellipsoid(gen):
    S = make_system("ellipsoid:1,1,1.5")
    M = S.manifold
    for x in M.sample(10, gen):
        E = M.tangent_basis(x)
        th = np.linspace(0, 2 * math.pi, 20001)
        vals = [1.7 * H_p_form(S, x, np.cos(t) * E[0] + np.sin(t) * E[1], 1.7) for t in th[::20]]
        up, lo = hp_extrema(S, x[None], 1.7)
        assert up[0] >= max(vals) - 1e-12 and up[0] - max(vals) < 1e-4
        assert lo[0] <= min(vals) + 1e-12 and min(vals) - lo[0] < 1e-4


def test_extrema_in_three_dimensions_bracket_samples(gen):
    S = make_system("sphere:3", "height+0.5*quadratic")
    M = S.manifold
    x = M.sample(1, gen)[0]
    up, lo = hp_extrema(S, x[None], 1.5)
    for _ in range(500):
        v = M.project_tangent(x, gen.standard_normal(4))
        val = 1.5 * H_p_form(S, x, v / np.linalg.norm(v), 1.5)
        assert lo[0] - 1e-8 <= val <= up[0] + 1e-8


def test_monotone_in_p_where_forms_allow(gen):
    # on S^n, h_p = p (p - n) is increasing for p >= n / 2
    S = make_system("sphere:2")
    vals = [h_p_sup(S, np.array([0, 0, 1.0]), p) for p in (1.0, 1.5, 2.0, 3.0)]
    assert vals == sorted(vals)


def test_isotropy_on_sphere(gen):
    S = make_system("sphere:3")
    x = S.manifold.sample(20, gen)
    up, lo = hp_extrema(S, x, 1.0)
    assert np.ptp(up) < 1e-9 and np.ptp(lo) < 1e-9


def test_rho_h_examples():
    S = make_system("sphere:2", "height")
    assert rho_h(S, np.array([0.0, 0.0, 1.0])) == pytest.approx(-3.0, abs=1e-12)
    assert rho_h(make_system("sphere:2"), np.array([1.0, 0, 0])) == pytest.approx(-1.0)
    assert rho_h(make_system("flat:2", "quadratic:1"), np.zeros(2)) == pytest.approx(-2.0)


def test_rho_h_is_minimum_over_tangents(gen):
    S = make_system("ellipsoid:1,1,1.5", "height")
    M = S.manifold
    x = M.sample(1, gen)[0]
    r = rho_h(S, x)
    V = M.project_tangent(np.broadcast_to(x, (100000, 3)), gen.standard_normal((100000, 3)))
    V /= np.linalg.norm(V, axis=-1, keepdims=True)
    forms = np.array([M.ricci(x, v, v) - 2 * S.hess_h(x, v, v) for v in V[:2000]])
    assert -forms.min() <= r + 1e-12
    assert -forms.min() > r - 1e-4


def test_criterion_report_examples():
    S2 = make_system("sphere:2")
    rep = criterion_report(S2, S2.manifold.region_sample(64), 1.0)
    assert rep.sup_hp == pytest.approx(-1.0) and rep.moment_stable_sufficient and rep.pi1_vanishing_sufficient
    rep = criterion_report(make_system("sphere:1"), make_system("sphere:1").manifold.region_sample(16), 1.0)
    assert rep.sup_hp == pytest.approx(0.0, abs=1e-12) and not rep.moment_stable_sufficient
    rep = criterion_report(S2, S2.manifold.region_sample(16), 2.0)
    assert not rep.pi1_vanishing_sufficient
    data = json.loads(rep.to_json())
    assert data["sample_size"] == 16 and "sup h_p" in rep.table()


def test_criterion_report_rejects_empty_sample():
    with pytest.raises(DomainError):
        criterion_report(make_system("sphere:2"), np.empty((0, 3)), 1.0)


def test_rho_values_batched(gen):
    S = make_system("sphere:2", "height")
    x = S.manifold.sample(7, gen)
    assert rho_h_values(S, x).shape == (7,)
