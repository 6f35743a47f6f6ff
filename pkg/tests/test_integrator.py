import csv

import numpy as np
import pytest

from hbrownian import rng
from hbrownian.errors import DomainError, IntegrationError
from hbrownian.geometry import make_system
from hbrownian.integrator import (
    FlowState,
    IntegratorConfig,
    representation_residual,
    simulate_batch,
    simulate_path,
    step,
    write_trajectory_csv,
)

POLE = np.array([0.0, 0.0, 1.0])
EAST = np.array([1.0, 0.0, 0.0])


def test_flat_flow_keeps_v_and_zero_functionals():
    S = make_system("flat:2")
    tr = simulate_path(S, np.zeros(2), np.array([1.0, 2.0]), 0.5, IntegratorConfig(dt=1e-2), seed=1)
    assert np.array_equal(tr.v, np.broadcast_to([1.0, 2.0], tr.v.shape))
    assert np.all(tr.mart == 0) and np.all(tr.qvar == 0) and np.all(tr.aexp == 0)


def test_single_sphere_step_stays_on_manifold():
    S = make_system("sphere:2")
    st = FlowState.start(S, POLE, EAST)
    st = step(S, st, np.array([0.03, -0.02, 0.01]), IntegratorConfig(dt=1e-3))
    assert abs(np.linalg.norm(st.x[0]) - 1) < 1e-10
    assert abs(st.x[0] @ st.v[0]) < 1e-10


def test_sphere_p2_has_no_drift_term():
    S = make_system("sphere:2")
    cfg = IntegratorConfig(dt=1e-3, p=2.0)
    st = FlowState.start(S, POLE, EAST)
    for dB in np.random.default_rng(0).standard_normal((10, 3)) * 0.03:
        st = step(S, st, dB, cfg)
    assert np.allclose(st.aexp, 0, atol=1e-12)


def test_sphere_growth_rate_matches_closed_form():
    # |v_t| = exp(W_t - t) |v_0|; the drift part contributes -t/2 at p = 1, the rest is -<M>/2.
    S = make_system("sphere:2")
    tr = simulate_path(S, POLE, EAST, 1.0, IntegratorConfig(dt=1e-3), seed=3)
    assert tr.aexp[-1] == pytest.approx(-0.5, abs=1e-9)
    assert tr.qvar[-1] == pytest.approx(1.0, abs=1e-9)


def test_same_seed_same_path():
    S = make_system("ellipsoid:1,1,1.5", "height")
    cfg = IntegratorConfig(dt=1e-3)
    x0 = S.manifold.base_point()
    v0 = S.manifold.tangent_basis(x0)[0]
    a = simulate_path(S, x0, v0, 0.2, cfg, seed=42, path=7)
    b = simulate_path(S, x0, v0, 0.2, cfg, seed=42, path=7)
    for f in ("x", "v", "mart", "qvar", "aexp"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


@pytest.mark.parametrize("name", ["sphere:2", "ellipsoid:1,1,1.5", "torus:2,0.5"])
def test_representation_residual_small(name):
    S = make_system(name, "height")
    x0 = S.manifold.base_point()
    v0 = S.manifold.tangent_basis(x0)[0]
    streams = [rng.IncrementStream(42, k, S.noise_dim, 1e-3) for k in range(8)]
    tr = simulate_batch(S, np.tile(x0, (8, 1)), v0, 1.0, IntegratorConfig(dt=1e-3), streams)
    assert np.median(representation_residual(tr, 1.0)) < 1e-2


def test_accumulators_and_membership_along_paths():
    S = make_system("ellipsoid:1,1,1.5", "height")
    x0 = S.manifold.base_point()
    streams = [rng.IncrementStream(0, k, 3, 1e-3) for k in range(4)]
    tr = simulate_batch(S, np.tile(x0, (4, 1)), S.manifold.tangent_basis(x0)[0], 0.5, IntegratorConfig(dt=1e-3), streams)
    assert np.all(np.diff(tr.qvar, axis=0) >= 0)
    assert np.max(np.abs(S.manifold.distance(tr.x))) < 1e-8
    assert np.all(tr.alive)


def test_alive_is_monotone_and_dead_paths_freeze():
    S = make_system("flat:1")
    cfg = IntegratorConfig(dt=1e-2, explosion_radius=0.3)
    streams = [rng.IncrementStream(0, k, 1, 1e-2) for k in range(16)]
    tr = simulate_batch(S, np.zeros((16, 1)), np.ones(1), 2.0, cfg, streams)
    assert np.all(tr.alive[1:] <= tr.alive[:-1])
    dead = ~tr.alive[-1]
    assert dead.any()
    k = np.argmin(tr.alive[:, dead], axis=0)
    assert np.array_equal(tr.x[-1, dead], tr.x[k, np.flatnonzero(dead)])


def test_nonfinite_state_raises():
    S = make_system("sphere:2")
    st = FlowState.start(S, POLE, EAST)
    with pytest.raises(IntegrationError):
        step(S, st, np.array([np.nan, 0.0, 0.0]), IntegratorConfig())


def test_bad_inputs():
    S = make_system("sphere:2")
    st = FlowState.start(S, POLE, EAST)
    with pytest.raises(DomainError):
        step(S, st, np.zeros(2), IntegratorConfig())
    with pytest.raises(DomainError):
        FlowState.start(S, POLE, np.zeros(3))
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0)
    with pytest.raises(ValueError):
        IntegratorConfig(p=0.5)


def test_refined_levels_share_the_brownian_path():
    S = make_system("sphere:2")
    cfg = IntegratorConfig(dt=1e-2 / 8)
    fine = simulate_path(S, POLE, EAST, 0.5, cfg, seed=5, level=3, record_every=8)
    coarse = simulate_path(S, POLE, EAST, 0.5, IntegratorConfig(dt=1e-2), seed=5)
    assert np.max(np.abs(fine.x - coarse.x)) < 0.05


def test_trajectory_csv(tmp_path):
    S = make_system("sphere:2")
    tr = simulate_path(S, POLE, EAST, 0.05, IntegratorConfig(dt=1e-2, track_hp=True), seed=1)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(tr, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "x1", "x2", "x3", "vnorm", "mart", "qvar", "aexp", "hp_int", "alive"]
    assert len(rows) == 7
    assert float(rows[-1][8]) == pytest.approx(-0.05, abs=1e-12)
