import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loglaplace.errors import EmptyMeasure, MissingDerivative, ValidationFailed
from loglaplace.model import (CoefficientSet, DiracMeasure, GaussianMeasure, UniformMeasure,
                              check_measure, const_coefficients, derived_a,
                              derived_a_derivatives, gaussian_bump, parse_model, plateau,
                              representation_drifts, smooth_coefficients, stratonovich_coeffs,
                              validate_bc, zero_c_coefficients, zero_function)
from loglaplace.grid import Grid1D
from oracles import central_difference, smooth_eval

PROBE = np.linspace(-10, 10, 2001)
PRESETS = [const_coefficients(), zero_c_coefficients(), smooth_coefficients(),
           smooth_coefficients(c0=1.0, b0=0.3)]


def test_derived_a_constants():
    assert derived_a(const_coefficients(c0=1.0), 0.3) == 1.0
    assert derived_a(zero_c_coefficients(), -2.0) == 0.5


def test_smooth_a_at_origin_and_symbolic_derivatives():
    co = smooth_coefficients(c0=1.0, e0=1.0)
    assert derived_a(co, 0.0) == pytest.approx(1.0, abs=1e-15)
    x = np.linspace(-3, 3, 61)
    da, d2a = derived_a_derivatives(co, x)
    np.testing.assert_allclose(da, smooth_eval("da", x, c0=1.0), atol=1e-12)
    np.testing.assert_allclose(d2a, smooth_eval("d2a", x, c0=1.0), atol=1e-12)
    # and against finite differences of a itself
    np.testing.assert_allclose(da, central_difference(co.a, x), atol=1e-6)
    np.testing.assert_allclose(d2a, central_difference(co.da, x), atol=1e-6)


def test_stratonovich_presets():
    x = np.linspace(-2, 2, 5)
    bb, ba = stratonovich_coeffs(const_coefficients(), x)
    assert np.all(bb == 0) and np.all(ba == 0.5)
    z = zero_c_coefficients(b0=0.3)
    bb, ba = stratonovich_coeffs(z, x)
    np.testing.assert_array_equal(bb, z.b(x))
    np.testing.assert_array_equal(ba, z.a(x))
    s = smooth_coefficients()
    bb, ba = stratonovich_coeffs(s, 1.0)
    assert bb == pytest.approx(float(smooth_eval("bar_b", 1.0)), abs=1e-14)
    assert ba == pytest.approx(float(smooth_eval("bar_a", 1.0)), abs=1e-14)


@pytest.mark.parametrize("co", PRESETS, ids=lambda c: c.name)
def test_a_splits_exactly(co):
    a = np.broadcast_to(co.a(PROBE), PROBE.shape)
    rest = np.broadcast_to(co.bar_a(PROBE), PROBE.shape) + 0.5 * np.broadcast_to(co.c(PROBE), PROBE.shape) ** 2
    assert np.max(np.abs(a - rest)) <= 1e-12


def test_representation_drifts_presets():
    assert representation_drifts(const_coefficients(), 0.7) == (0.0, 0.0)
    assert representation_drifts(zero_c_coefficients(), -0.2) == (0.0, 0.0)
    s = smooth_coefficients()
    pos, w = representation_drifts(s, 0.5)
    assert pos == pytest.approx(float(smooth_eval("pos_drift", 0.5)), abs=1e-12)
    assert w == pytest.approx(float(smooth_eval("weight_drift", 0.5)), abs=1e-12)
    # finite-difference route: differentiate a, b, c numerically
    fd_pos = 2 * central_difference(s.a, 0.5) - s.b(0.5) - s.c(0.5) * central_difference(s.c, 0.5)
    fd_w = (s.a(0.5 + 1e-4) - 2 * s.a(0.5) + s.a(0.5 - 1e-4)) / 1e-8 - central_difference(s.b, 0.5)
    assert pos == pytest.approx(fd_pos, abs=1e-6)
    assert w == pytest.approx(fd_w, abs=1e-6)


def test_missing_second_derivative():
    co = const_coefficients()
    bare = CoefficientSet(co.b, co.db, co.c, co.dc, co.d2c, co.d3c, co.e, co.de, co.K, co.e_min)
    with pytest.raises(MissingDerivative):
        representation_drifts(bare, 0.0)
    assert derived_a_derivatives(bare, 0.0)[1] is None


@pytest.mark.parametrize("co", PRESETS, ids=lambda c: c.name)
@pytest.mark.parametrize("name,parent", [("db", "b"), ("dc", "c"), ("d2c", "dc"),
                                         ("d3c", "d2c"), ("de", "e")])
def test_analytic_derivatives_match_differences(co, name, parent):
    x = np.linspace(-6, 6, 241)
    exact = np.broadcast_to(getattr(co, name)(x), x.shape)
    fd = central_difference(getattr(co, parent), x)
    scale = np.maximum(np.abs(exact), 1.0)
    assert np.max(np.abs(exact - fd) / scale) <= 1e-5


def test_validate_bc_const_passes():
    rep = validate_bc(const_coefficients(), PROBE)
    assert rep.passed and rep.min_e == 1.0


def test_validate_bc_rejects_vanishing_e():
    co = const_coefficients()
    bad = CoefficientSet(co.b, co.db, co.c, co.dc, co.d2c, co.d3c,
                         lambda x: np.exp(-x * x), lambda x: -2 * x * np.exp(-x * x),
                         K=1.0, e_min=0.05, name="vanishing")
    with pytest.raises(ValidationFailed) as info:
        validate_bc(bad, PROBE)
    assert "e_min" in str(info.value)
    assert not info.value.report.passed
    assert not validate_bc(bad, PROBE, strict=False).passed


def test_validate_bc_smooth_matches_dense_scan():
    s = smooth_coefficients()
    rep = validate_bc(s, PROBE)
    dense = np.linspace(-10, 10, 2_000_001)
    for name in ("b", "db", "c", "dc", "d2c", "d3c"):
        true_max = float(np.max(np.abs(smooth_eval(name, dense))))
        assert rep.maxima[name] == pytest.approx(true_max, abs=1e-3)
    assert rep.passed


@given(c0=st.floats(-1.0, 1.0))
@settings(max_examples=30, deadline=None)
def test_validate_bc_const_any_c0(c0):
    assert validate_bc(const_coefficients(c0=c0), PROBE).passed


def test_test_functions():
    f = gaussian_bump(1.0, 0.25)
    r = f.support_radius
    assert f(r) <= 1e-12 * f.f_sup * 1.0001
    assert f(0.0) == f.f_sup == 1.0
    p = plateau(1.0, 4.0, 1.0)
    assert p(0.0) == 1.0 and p(3.9) == 1.0 and p(5.0) == 0.0 and 0 < p(4.5) < 1
    # this grid avoids the curvature jumps at |x| = 4, 5, where differences are O(step)
    x = np.linspace(-6, 6, 1200)
    assert np.all(p(x) >= 0)
    np.testing.assert_allclose(p.df(x), central_difference(p.f, x), atol=1e-6)
    z = zero_function()
    assert z.f_sup == 0 and np.all(z(x) == 0)
    s = f.scaled(2.0)
    assert s.f_sup == 2.0 and s(0.3) == 2 * f(0.3)


def test_measures():
    rng = np.random.default_rng(0)
    g = Grid1D(-6, 6, 1200)
    ones = g.field(1.0)
    assert GaussianMeasure(2.0).integrate(ones) == pytest.approx(2.0, abs=1e-9)
    assert DiracMeasure(1.5, 0.25).integrate(g.sample(lambda x: x)) == pytest.approx(0.375)
    assert UniformMeasure(1.0, 0, 1).integrate(g.sample(lambda x: x)) == pytest.approx(0.5, abs=1e-6)
    assert np.all(DiracMeasure(1.0, 0.0).sample(rng, 4) == 0)
    with pytest.raises(EmptyMeasure):
        check_measure(GaussianMeasure(0.0))


def test_parse_model():
    p = parse_model("CONST:c0=0.5")
    assert p.name == "CONST" and p.coefficients.c(0.0) == 0.5
    assert parse_model(p.spec).spec == p.spec
    assert parse_model("smooth").coefficients.name == "SMOOTH"
    assert parse_model("ZERO_C:f_height=0").initial.f_sup == 0
    with pytest.raises(KeyError):
        parse_model("NOPE")
    with pytest.raises(KeyError):
        parse_model("ZERO_C:c0=1")
