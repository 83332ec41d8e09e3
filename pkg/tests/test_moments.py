import math

import numpy as np
import pytest

from loglaplace.lle_solver import SolverParams, auto_grid
from loglaplace.model import (GaussianMeasure, const_coefficients, gaussian_bump,
                              zero_c_coefficients, zero_function)
from loglaplace.moments import (MomentEstimate, conditional_moments, duality_path, first_moment,
                                moments_via_duality, second_moment, sim_L1, sim_L2)
from oracles import first_moment_const, second_moment_const

MU = GaussianMeasure()
BUMP = gaussian_bump(1.0, 0.25)
N = 100_000


def _mu_f():
    """<mu, f> for the default bump and Gaussian mu: both have variance 1/4."""
    return math.sqrt(0.25 / 0.5)


def test_sim_L1_at_time_zero():
    assert sim_L1(0.3, 0.0, const_coefficients(), 0.01, 0) == 0.3
    np.testing.assert_array_equal(sim_L1(np.array([1.0, 2.0]), 0.0, const_coefficients(), 0.01, 0),
                                  [1.0, 2.0])


def test_sim_L1_zero_c_variance():
    z = sim_L1(np.zeros(N), 0.5, zero_c_coefficients(), 0.01, 1)
    assert z.var(ddof=1) == pytest.approx(0.5, rel=0.03)


def test_sim_L1_constant_drift():
    z = sim_L1(np.full(N, 0.2), 0.5, const_coefficients(b0=0.5), 0.01, 2)
    assert abs(z.mean() - (0.2 + 0.25)) <= 3 * z.std(ddof=1) / math.sqrt(N)


def test_sim_L2_at_time_zero():
    s = sim_L2(0.1, -0.4, 0.0, const_coefficients(), 0.01, 0)
    assert s.z1.tolist() == [0.1] and s.z2.tolist() == [-0.4]


def test_sim_L2_zero_c_is_uncorrelated():
    s = sim_L2(np.zeros(N), np.zeros(N), 0.5, zero_c_coefficients(), 0.01, 3)
    r = np.corrcoef(s.z1, s.z2)[0, 1]
    assert abs(r) <= 3 / math.sqrt(N)


def test_sim_L2_const_covariance():
    s = sim_L2(np.zeros(N), np.zeros(N), 0.5, const_coefficients(), 0.01, 4)
    assert np.cov(s.z1, s.z2)[0, 1] == pytest.approx(0.5, rel=0.05)


def test_two_point_marginals_match_one_point():
    co = const_coefficients(b0=0.2)
    a = sim_L1(np.zeros(N), 0.5, co, 0.01, 5)
    s = sim_L2(np.zeros(N), np.zeros(N), 0.5, co, 0.01, 6)
    for z in (s.z1, s.z2):
        se = math.hypot(a.std(ddof=1), z.std(ddof=1)) / math.sqrt(N)
        assert abs(a.mean() - z.mean()) <= 3 * se
        # variance of the sample variance of a Gaussian is 2 sigma^4 / (N - 1)
        se_var = math.hypot(a.var(), z.var()) * math.sqrt(2 / (N - 1))
        assert abs(a.var(ddof=1) - z.var(ddof=1)) <= 3 * se_var


def test_first_moment_at_time_zero():
    est = first_moment(MU, BUMP, 0.0, const_coefficients(), 10_000, 0.01, 0)
    assert abs(est.value - _mu_f()) <= 3 * est.std_err


def test_first_moment_of_zero_function():
    est = first_moment(MU, zero_function(), 0.25, const_coefficients(), 1000, 0.01, 0)
    assert est.value == 0.0 and est.std_err == 0.0


def test_first_moment_closed_form():
    est = first_moment(MU, BUMP, 0.25, const_coefficients(), N, 0.0025, 1)
    assert abs(est.value - first_moment_const(0.25)) <= 3 * est.std_err


def test_second_moment_at_time_zero():
    est = second_moment(MU, BUMP, 0.0, const_coefficients(), 10_000, 0.01, 0)
    assert abs(est.value - _mu_f() ** 2) <= 3 * est.std_err


def test_second_moment_of_zero_function():
    est = second_moment(MU, zero_function(), 0.25, const_coefficients(), 1000, 0.01, 0)
    assert est.value == 0.0


@pytest.mark.parametrize("strata", [1, 16])
def test_second_moment_closed_form(strata):
    est = second_moment(MU, BUMP, 0.25, const_coefficients(), N, 0.0025, 2, strata=strata)
    assert abs(est.value - second_moment_const(0.25)) <= 3 * est.std_err


def test_stratification_reduces_error():
    a = second_moment(MU, BUMP, 0.25, const_coefficients(), N, 0.0025, 3)
    b = second_moment(MU, BUMP, 0.25, const_coefficients(), N, 0.0025, 3, strata=16)
    assert b.std_err < a.std_err


def test_variance_is_nonnegative():
    co = const_coefficients()
    m1 = first_moment(MU, BUMP, 0.25, co, N, 0.0025, 4)
    m2 = second_moment(MU, BUMP, 0.25, co, N, 0.0025, 5)
    assert m2.value >= m1.value ** 2 - 3 * math.hypot(m2.std_err, 2 * m1.value * m1.std_err)


def _params(co, t=0.25):
    return SolverParams(auto_grid(BUMP, co, t, 0.02))


def test_duality_of_zero_function():
    co = const_coefficients()
    a, b = moments_via_duality(MU, zero_function(), 0.25, co, 3, _params(co), 0, 0.0025)
    assert (a.value, b.value, a.std_err, b.std_err) == (0.0, 0.0, 0.0, 0.0)


def test_duality_without_common_noise_has_no_path_variance():
    co = zero_c_coefficients()
    a, b = moments_via_duality(MU, BUMP, 0.25, co, 4, _params(co), 0, 0.0025)
    assert a.std_err == 0.0 and b.std_err == 0.0
    z, h2 = conditional_moments(MU, BUMP, duality_path(0, 0, 0.25, 0.0025), 0.25, co, _params(co))
    assert a.value == z and b.value == h2 and h2 > z * z


def test_duality_matches_closed_forms():
    co = const_coefficients()
    a, b = moments_via_duality(MU, BUMP, 0.25, co, 200, _params(co), 1, 0.0025)
    assert abs(a.value - first_moment_const(0.25)) <= 3 * a.std_err + 2e-3
    assert abs(b.value - second_moment_const(0.25)) <= 3 * b.std_err + 2e-3


def test_duality_requires_two_paths():
    co = const_coefficients()
    with pytest.raises(ValueError):
        moments_via_duality(MU, BUMP, 0.25, co, 1, _params(co), 0, 0.0025)


def test_estimate_plumbing():
    est = MomentEstimate.from_samples([1.0, 2.0, 3.0])
    assert est.value == 2.0 and est.n_samples == 3
    assert est.std_err == pytest.approx(1 / math.sqrt(3))
    total = est + MomentEstimate(1.0, est.std_err, 10)
    assert total.value == 3.0 and total.std_err == pytest.approx(math.sqrt(2 / 3))
    assert est.to_json("fk", "abc") == {"estimator": "fk", "value": 2.0,
                                        "std_err": est.std_err, "n_samples": 3,
                                        "config_hash": "abc"}
    with pytest.raises(ValueError):
        MomentEstimate.from_samples([1.0])


def test_time_continuity():
    co = const_coefficients()
    a = first_moment(MU, BUMP, 0.25, co, N, 0.0025, 6)
    b = first_moment(MU, BUMP, 0.2525, co, N, 0.0025, 7)
    assert abs(a.value - b.value) <= 5 * math.hypot(a.std_err, b.std_err)
