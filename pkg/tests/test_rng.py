import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from hbrownian import rng


def test_same_key_same_numbers():
    a = rng.generator(42, 7).standard_normal(5)
    b = rng.generator(42, 7).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, rng.generator(42, 8).standard_normal(5))
    assert not np.array_equal(a, rng.initial_generator(42, 7).standard_normal(5))


@given(split=st.integers(0, 64))
def test_chunked_draws_equal_single_draw(split):
    whole = rng.IncrementStream(3, 1, 2, 0.01, level=2).draw(64)
    s = rng.IncrementStream(3, 1, 2, 0.01, level=2)
    parts = np.concatenate([s.draw(split), s.draw(64 - split)])
    assert np.array_equal(whole, parts)


@given(level=st.integers(1, 5))
def test_bridge_refinement_preserves_coarse_path(level):
    coarse = rng.IncrementStream(42, 3, 3, 0.01).draw(8)
    fine = rng.IncrementStream(42, 3, 3, 0.01, level=level).draw(8 * 2**level)
    summed = fine.reshape(8, 2**level, 3).sum(axis=1)
    assert np.allclose(summed, coarse, atol=1e-14)


def test_increment_variance():
    s = rng.IncrementStream(1, 0, 1, 0.25, level=3)
    dB = s.draw(200000)
    assert abs(dB.var() / s.dt - 1) < 0.02


def test_batch_increments_stack():
    streams = [rng.IncrementStream(5, k, 2, 0.1) for k in range(3)]
    out = rng.batch_increments(streams, 4)
    assert out.shape == (3, 4, 2)
    assert np.array_equal(out[1], rng.IncrementStream(5, 1, 2, 0.1).draw(4))
