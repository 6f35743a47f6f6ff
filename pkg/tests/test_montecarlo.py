import math

import numpy as np
import pytest

from hbrownian.errors import DomainError, EstimationError, NotApplicable
from hbrownian.geometry import make_manifold, make_potential, make_system
from hbrownian.montecarlo import (
    estimate_moment,
    estimate_moments,
    exponential_functional,
    h_volume,
    integrability_diagnostic,
    path_chunks,
    sandwich_check,
    stochastic_positivity_rate,
)

POLE = np.array([0.0, 0.0, 1.0])
FAST = dict(dt=1e-2, grid=0.1)


def test_path_chunks_cover_range():
    chunks = path_chunks(600, 256)
    assert chunks == [(0, 256), (256, 512), (512, 600)]


def test_flat_moments_are_exactly_one():
    S = make_system("flat:2")
    est = estimate_moment(S, np.zeros(2), 1.5, 1.0, 16, seed=42, **FAST)
    # unit initial vectors are normalized in floating point, so only to rounding
    assert np.allclose(est.mean_vp, 1.0, rtol=0, atol=1e-14)
    assert abs(est.fitted_mu) < 1e-13


def test_moments_scale_homogeneously():
    S = make_system("sphere:2")
    a = estimate_moment(S, POLE, 1.5, 0.5, 32, seed=1, fit_window=1.0, **FAST)
    b = estimate_moment(S, POLE, 1.5, 0.5, 32, seed=1, v0_scale=3.0, fit_window=1.0, **FAST)
    assert np.allclose(np.array(b.mean_vp) / np.array(a.mean_vp), 3.0**1.5, rtol=1e-12)


def test_moment_grid_and_csv():
    S = make_system("sphere:2")
    est = estimate_moment(S, POLE, 1.0, 0.5, 8, seed=0, fit_window=1.0, **FAST)
    header, rows = est.csv_rows()
    assert est.time_grid == pytest.approx([0, 0.1, 0.2, 0.3, 0.4, 0.5])
    assert header[0] == "t" and len(rows) == 6
    assert est.to_dict()["kind"] == "MomentEstimate"


def test_bad_grid_is_rejected():
    S = make_system("sphere:2")
    with pytest.raises(DomainError):
        estimate_moment(S, POLE, 1.0, 1.0, 8, seed=0, dt=1e-2, grid=0.015)
    with pytest.raises(DomainError):
        estimate_moment(S, POLE, 0.5, 1.0, 8, seed=0, **FAST)


def test_sphere_moment_decay_and_integrability():
    # E|v_t| = exp(-t/2) on S^2, so the integral over [0, inf) is 2
    S = make_system("sphere:2")
    est = estimate_moment(S, POLE, 1.0, 3.0, 1024, seed=42, **FAST)
    assert est.fitted_mu == pytest.approx(-0.5, abs=0.1)
    res = integrability_diagnostic(est)
    assert not res.diverged and res.value == pytest.approx(2.0, rel=0.1)


def test_circle_integrability_diverges():
    S = make_system("sphere:1")
    est = estimate_moment(S, np.array([1.0, 0.0]), 1.0, 2.0, 256, seed=42, **FAST)
    assert integrability_diagnostic(est).diverged


def test_frame_sup_bounds_single_vector():
    S = make_system("ellipsoid:1,1,1.5")
    est = estimate_moment(S, S.manifold.base_point(), 1.0, 0.5, 64, seed=3, frame_sup=True, fit_window=1.0, **FAST)
    assert est.frame_mean_vp is not None
    # every unit vector is at most sqrt(n) times the frame maximum
    assert all(m <= math.sqrt(2) * f + 1e-12 for m, f in zip(est.mean_vp, est.frame_mean_vp))


def test_workers_do_not_change_results():
    S = make_system("ellipsoid:1,1,1.5", "height")
    x0 = S.manifold.base_point()
    kw = dict(dt=1e-2, grid=0.1, fit_window=1.0)
    a = estimate_moments(S, x0, (1.0, 2.0), 0.3, 600, seed=9, workers=1, **kw)
    b = estimate_moments(S, x0, (1.0, 2.0), 0.3, 600, seed=9, workers=2, **kw)
    assert [e.to_json() for e in a] == [e.to_json() for e in b]


def test_all_censored_raises():
    S = make_system("flat:1")
    with pytest.raises(EstimationError):
        estimate_moment(S, np.zeros(1), 1.0, 1.0, 8, seed=0, explosion_radius=1e-6, **FAST)


def test_constant_functional():
    S = make_system("sphere:2")
    est = exponential_functional(S, POLE, "const:-1", 1.0, 1.0, 4, seed=0, **FAST)
    assert est.mean[-1] == pytest.approx(math.exp(-1), rel=1e-12)
    assert est.fitted_rate == pytest.approx(-1.0, abs=1e-9)
    assert est.jensen_ok


def test_hp_functional_on_sphere():
    S = make_system("sphere:2")
    est = exponential_functional(S, POLE, "h_p", 0.5, 1.0, 8, seed=0, **FAST)
    assert est.mean[-1] == pytest.approx(math.exp(-0.5), rel=1e-9)


def test_random_functional_respects_jensen():
    S = make_system("ellipsoid:1,1,1.5")
    est = exponential_functional(S, S.manifold.base_point(), lambda x: x[..., 2], 1.0, 1.0, 64, seed=0, **FAST)
    assert est.jensen_ok and est.functional == "<lambda>"


def test_unknown_functional():
    S = make_system("sphere:2")
    with pytest.raises(DomainError):
        exponential_functional(S, POLE, "bogus", 1.0, 1.0, 4, seed=0, **FAST)


def test_positivity_constant_rate():
    S = make_system("sphere:2")
    res = stochastic_positivity_rate(S, S.manifold.region_sample(3), "const:0.8", 1.0, 4, seed=0, **FAST)
    assert res.sup_rate == pytest.approx(-0.4, abs=1e-9)
    assert res.strongly_positive


def test_positivity_fails_on_circle():
    S = make_system("sphere:1")
    res = stochastic_positivity_rate(S, S.manifold.region_sample(2), "-h_p", 1.0, 4, seed=0, **FAST)
    assert res.sup_rate == pytest.approx(0.0, abs=1e-12)
    assert not res.strongly_positive


def test_flat_sandwich():
    S = make_system("flat:2")
    res = sandwich_check(S, np.zeros(2), 1.0, 0.5, 8, seed=0, dt=1e-2)
    assert (res.lower, res.middle, res.upper) == (1.0, 1.0, 2.0)
    assert res.passed and res.n == 2


def test_sandwich_ordering_on_ellipsoid():
    S = make_system("ellipsoid:1,1,1.5")
    res = sandwich_check(S, S.manifold.base_point(), 2.0, 0.5, 64, seed=0, dt=1e-2)
    assert res.lower <= res.upper
    assert res.n_censored == 0


def test_sandwich_rejects_bad_input():
    S = make_system("sphere:2")
    with pytest.raises(DomainError):
        sandwich_check(S, POLE, 1.0, 0.0, 8, seed=0)


def test_volume_examples():
    S2 = h_volume(make_manifold("sphere:2"), make_potential("zero"))
    assert S2.value == pytest.approx(4 * math.pi, rel=1e-12)
    gauss = h_volume(make_manifold("flat:2"), make_potential("quadratic:1"))
    assert gauss.value == pytest.approx(math.pi, rel=1e-12)
    assert h_volume(make_manifold("flat:2"), make_potential("zero")).diverged
    assert h_volume(make_manifold("cylinder:1"), make_potential("zero")).diverged
    torus = h_volume(make_manifold("torus:2,0.5"), make_potential("zero"))
    assert torus.value == pytest.approx(4 * math.pi**2 * 2 * 0.5, rel=1e-12)


def test_volume_without_chart():
    with pytest.raises(NotApplicable):
        h_volume(make_manifold("sphere:3"), make_potential("zero"))
