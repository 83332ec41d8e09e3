import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from loglaplace.errors import BadGrid
from loglaplace.noise import (BrownianPath, coarsen, refine, refine_to, reversed_path,
                              sample_path, stream, truncated, wz_rate)


def test_sampling_is_deterministic():
    a, b = sample_path(1.0, 0.25, 7), sample_path(1.0, 0.25, 7)
    np.testing.assert_array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, sample_path(1.0, 0.25, 8).increments)


def test_step_count():
    assert sample_path(1.0, 0.5, 0).n_steps == 2
    with pytest.raises(BadGrid):
        sample_path(1.0, 0.3, 0)


def test_values_are_cumulative_sums():
    p = sample_path(1.0, 0.01, 3)
    np.testing.assert_allclose(p.values[1:], np.cumsum(p.increments), rtol=0, atol=1e-15)
    assert p.values[0] == 0.0 and p.at(0.5) == p.values[50]


def test_increment_law_over_many_paths():
    # 1e5 unit paths with one step each
    d = np.array([sample_path(1.0, 1.0, s).increments[0] for s in range(100_000)])
    assert abs(d.mean()) <= 3 * np.sqrt(1e-5)
    assert abs(d.var() - 1.0) <= 0.05


def test_increment_shape_moments():
    d = sample_path(1.0, 1e-6, 11).increments / np.sqrt(1e-6)
    assert d.size == 1_000_000
    assert abs(stats.skew(d)) < 0.05
    assert abs(stats.kurtosis(d)) < 0.1


def test_refine_consistency():
    p = sample_path(1.0, 0.125, 5)
    r = refine(p)
    assert r.dt == p.dt / 2 and r.n_steps == 2 * p.n_steps
    np.testing.assert_allclose(r.increments.reshape(-1, 2).sum(axis=1), p.increments, atol=1e-12)
    rr = refine(r)
    np.testing.assert_allclose(rr.increments.reshape(-1, 4).sum(axis=1), p.increments, atol=1e-12)
    np.testing.assert_allclose(coarsen(rr, 4).increments, p.increments, atol=1e-12)
    np.testing.assert_array_equal(refine(p).increments, r.increments)
    np.testing.assert_array_equal(refine_to(p, p.dt / 4).increments, rr.increments)


def test_bridge_midpoint_variance():
    dt = 0.1
    p = sample_path(10_000.0, dt, 1)         # 1e5 coarse increments
    r = refine(p)
    dev = r.increments[0::2] - 0.5 * p.increments
    assert dev.size == 100_000
    assert abs(dev.var() / (dt / 4) - 1.0) <= 0.05


def test_wz_rate_definition():
    p = BrownianPath(0.5, 0.25, [0.1, 0.2])
    rate = wz_rate(p, 0.5)
    assert rate.values.tolist() == pytest.approx([0.6])
    assert np.all(wz_rate(BrownianPath(1.0, 0.25, np.zeros(4)), 0.5).values == 0)
    with pytest.raises(BadGrid):
        wz_rate(sample_path(1.0, 0.25, 0), 0.75)


@given(seed=st.integers(0, 2 ** 32), k=st.integers(0, 5))
@settings(max_examples=25, deadline=None)
def test_wz_rate_telescopes(seed, k):
    p = sample_path(1.0, 1 / 64, seed)
    rate = wz_rate(p, 2.0 ** -k)
    assert rate.values.sum() * rate.epsilon == pytest.approx(p.values[-1], abs=1e-12)
    np.testing.assert_allclose(rate.values * rate.epsilon,
                               p.increments.reshape(-1, rate.block_steps).sum(axis=1), atol=1e-12)
    assert rate.as_path().values[-1] == pytest.approx(p.values[-1], abs=1e-12)


def test_reversal():
    p = BrownianPath(1.0, 0.25, [1.0, 2.0, 3.0, 4.0])
    r = reversed_path(p, 0.75)
    assert r.increments.tolist() == [3.0, 2.0, 1.0]
    np.testing.assert_array_equal(reversed_path(r, 0.75).increments, truncated(p, 0.75).increments)
    assert r.values[-1] == p.at(0.75)
    with pytest.raises(BadGrid):
        reversed_path(p, 1.5)


def test_csv_round_trip(tmp_path):
    p = sample_path(1.0, 0.125, 9)
    f = tmp_path / "w.csv"
    p.to_csv(f)
    assert f.read_text().splitlines()[0] == "t,dW"
    q = BrownianPath.from_csv(f)
    np.testing.assert_array_equal(q.increments, p.increments)
    assert q.dt == p.dt and q.T == p.T


def test_streams_are_keyed():
    a = stream(1, 2, 3).random(4)
    np.testing.assert_array_equal(a, stream(1, 2, 3).random(4))
    assert not np.array_equal(a, stream(1, 2, 4).random(4))
