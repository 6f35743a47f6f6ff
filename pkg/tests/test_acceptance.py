"""One test per acceptance criterion, all with seed 42 fixed in advance."""

import json
import math
import time

import numpy as np
import pytest

from hbrownian import rng
from hbrownian.cli import main
from hbrownian.curvature import criterion_report, h_p_sup, rho_h
from hbrownian.geometry import CATALOG_EXAMPLES, invariant_report, make_manifold, make_potential, make_system
from hbrownian.integrator import IntegratorConfig, representation_residual, simulate_batch
from hbrownian.loops import make_loop, mean_length_curve
from hbrownian.montecarlo import estimate_moments, h_volume, initial_vector, sandwich_check
from hbrownian.stats import EnsembleStats

SEED = 42
POLE = np.array([0.0, 0.0, 1.0])


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


# -- 1. geometry oracles ---------------------------------------------------------------
def test_c1_geometry_invariants_on_catalog():
    t0 = time.perf_counter()
    failures = {}
    for name in CATALOG_EXAMPLES:
        M = make_manifold(name)
        gen = np.random.default_rng(SEED)
        report = invariant_report(M, M.sample(100, gen), gen)
        bad = {k: v for k, (v, tol) in report.items() if not v <= tol}
        if bad:
            failures[name] = bad
    assert not failures
    assert time.perf_counter() - t0 < 10


# -- 2. sphere rates -------------------------------------------------------------------
@pytest.fixture(scope="module")
def sphere_moments():
    S = make_system("sphere:2")
    return timed(estimate_moments, S, POLE, (1.0, 2.0), 4.0, 4096, SEED, dt=1e-3)


def test_c2_sphere_rate_p1(sphere_moments):
    (est, _), elapsed = sphere_moments
    assert abs(est.fitted_mu - (-0.5)) <= 0.05
    assert elapsed < 120


def test_c2_sphere_rate_p2(sphere_moments):
    (_, est), elapsed = sphere_moments
    assert abs(est.fitted_mu - 0.0) <= 0.05
    assert elapsed < 120


# -- 3. sandwich -----------------------------------------------------------------------
@pytest.fixture(scope="module")
def sandwich_runtime():
    return {}


def test_c3_sandwich_sphere(sandwich_runtime):
    S = make_system("sphere:2")
    res, elapsed = timed(sandwich_check, S, POLE, 1.0, 2.0, 4096, SEED, dt=2e-3)
    sandwich_runtime["sphere"] = elapsed
    assert res.lower == pytest.approx(math.exp(-1), abs=1e-4)
    assert res.upper == pytest.approx(2 * math.exp(-1), abs=1e-4)
    assert res.passed and res.n_censored / res.n_paths < 0.01


def test_c3_sandwich_ellipsoid(sandwich_runtime):
    S = make_system("ellipsoid:1,1,1.5")
    res, elapsed = timed(sandwich_check, S, S.manifold.base_point(), 2.0, 1.0, 4096, SEED, dt=2e-3)
    sandwich_runtime["ellipsoid"] = elapsed
    assert res.passed and res.n_censored / res.n_paths < 0.01
    assert sum(sandwich_runtime.values()) < 120


# -- 4. pathwise representation ------------------------------------------------------
def _median_residual(dt0, level, n=64, T=1.0):
    S = make_system("sphere:2")
    streams = [rng.IncrementStream(SEED, k, 3, dt0, level) for k in range(n)]
    v0 = np.stack([initial_vector(S, POLE, SEED, k) for k in range(n)])
    tr = simulate_batch(S, np.tile(POLE, (n, 1)), v0, T, IntegratorConfig(dt=dt0 / 2**level), streams)
    return float(np.median(representation_residual(tr, 1.0)))


def test_c4_residual_decreases_under_refinement():
    med = [_median_residual(1e-2, level) for level in (0, 1, 2)]
    assert med[0] > med[1] > med[2]


def test_c4_residual_small_at_fine_step():
    assert _median_residual(1e-3, 0) < 1e-2


# -- 5. topological obstruction ------------------------------------------------------
@pytest.fixture(scope="module")
def circle_moment():
    S = make_system("sphere:1")
    return estimate_moments(S, np.array([1.0, 0.0]), (1.0,), 4.0, 4096, SEED, dt=1e-3)[0]


def test_c5_circle_rate(circle_moment):
    assert abs(circle_moment.fitted_mu) <= 0.05


def test_c5_circle_report_has_no_vanishing_verdict():
    S = make_system("sphere:1")
    rep = criterion_report(S, S.manifold.region_sample(256), 1.0)
    assert rep.sup_hp == pytest.approx(0.0, abs=1e-12)
    assert not rep.pi1_vanishing_sufficient


def test_c5_line_sincos_rate():
    S = make_system("line-sincos")
    est = estimate_moments(S, np.zeros(1), (1.0,), 4.0, 4096, SEED, dt=1e-3)[0]
    assert est.fitted_mu >= -0.05


# -- 6. loop flow -------------------------------------------------------------------
def test_c6_sphere_loop_shrinks_and_contracts():
    S = make_system("sphere:2")
    loop = make_loop(S.manifold, "equator", 256)
    t0 = time.perf_counter()
    curve = mean_length_curve(S, loop, 10.0, 256, SEED, dt=1e-2, grid=0.1)
    k3 = int(np.argmin(np.abs(np.array(curve.time_grid) - 3.0)))
    assert curve.mean_length[k3] < 0.5 * curve.initial_length
    assert curve.contractible_fraction[-1] > 0.25
    test_c6_sphere_loop_shrinks_and_contracts.elapsed = time.perf_counter() - t0


def test_c6_cylinder_waist_systole():
    S = make_system("cylinder:1")
    loop = make_loop(S.manifold, "waist", 256)
    t0 = time.perf_counter()
    curve = mean_length_curve(S, loop, 3.0, 256, SEED, dt=1e-2, grid=0.1)
    assert curve.min_length >= 2 * math.pi - 0.05
    elapsed = time.perf_counter() - t0 + getattr(test_c6_sphere_loop_shrinks_and_contracts, "elapsed", 0.0)
    assert elapsed < 300


# -- 7. curvature closed forms --------------------------------------------------------
def test_c7_closed_forms():
    S2 = make_system("sphere:2")
    gen = np.random.default_rng(SEED)
    x = S2.manifold.sample(1, gen)[0]
    assert h_p_sup(S2, x, 1.0) == pytest.approx(-1.0, abs=1e-6)
    assert rho_h(S2, x) == pytest.approx(-1.0, abs=1e-9)
    assert rho_h(make_system("sphere:2", "height"), POLE) == pytest.approx(-3.0, abs=1e-6)
    assert h_volume(make_manifold("sphere:2"), make_potential("zero")).value == pytest.approx(4 * math.pi, abs=1e-6)
    gauss = h_volume(make_manifold("flat:2"), make_potential("quadratic:1"))
    assert gauss.value == pytest.approx(math.pi, abs=1e-6)


# -- 8. determinism and merging -------------------------------------------------------
def test_c8_workers_byte_identical(tmp_path):
    args = ["moments", "--manifold", "ellipsoid:1,1,1.5", "--h", "height", "--p", "1.5",
            "--dt", "0.01", "--T", "1", "--n-paths", "2048", "--seed", str(SEED), "--frame-sup"]
    outs = []
    for w in (1, 8):
        out = tmp_path / f"w{w}"
        assert main([*args, "--workers", str(w), "--out", str(out)]) == 0
        outs.append(out)
    for name in ("result.json", "moments.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    hashes = {json.loads((o / "manifest.json").read_text())["config_hash"] for o in outs}
    assert len(hashes) == 1


def test_c8_three_way_merge_associative():
    S = make_system("ellipsoid:1,1,1.5", "height")
    x0 = S.manifold.base_point()
    n = 96
    streams = [rng.IncrementStream(SEED, k, 3, 1e-2) for k in range(n)]
    v0 = np.stack([initial_vector(S, x0, SEED, k) for k in range(n)])
    tr = simulate_batch(S, np.tile(x0, (n, 1)), v0, 1.0, IntegratorConfig(dt=1e-2), streams, record_every=10)
    vals = tr.vnorm.T ** 1.5
    cuts = ((0, 17), (17, 60), (60, n))

    def part(i):
        a, b = cuts[i]
        return EnsembleStats(vals.shape[1]).add(vals[a:b])

    left = part(0).merge(part(1)).merge(part(2))
    right = part(0).merge(part(1).merge(part(2)))
    swapped = part(2).merge(part(0)).merge(part(1))
    single = EnsembleStats(vals.shape[1]).add(vals)
    for k in (1, 2, 3, 4):
        ref = single.power_sum(k)
        for st in (left, right, swapped):
            assert np.array_equal(st.power_sum(k), ref)
    assert left.count == n
