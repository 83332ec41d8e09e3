"""Coefficient sets, test functions, initial measures and model presets.

Coefficients are analytic families with hand-coded derivatives. Every
callable is vectorised: it accepts a float or an ndarray and returns the
same shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid

from .errors import EmptyMeasure, MissingDerivative, ValidationFailed

Func = Callable[[np.ndarray], np.ndarray]


def _const(v: float) -> Func:
    return lambda x: np.full(np.shape(x), float(v)) if np.ndim(x) else float(v)


def _zero(x):
    return np.zeros(np.shape(x)) if np.ndim(x) else 0.0


@dataclass(frozen=True)
class CoefficientSet:
    """Drift ``b``, common-noise amplitude ``c`` and individual amplitude ``e``.

    ``d2e`` is optional; without it ``a''`` (and hence the weight drift of
    the particle representation) is unavailable.
    """

    b: Func
    db: Func
    c: Func
    dc: Func
    d2c: Func
    d3c: Func
    e: Func
    de: Func
    K: float
    e_min: float
    d2e: Func | None = None
    name: str = "custom"

    # a = (e^2 + c^2) / 2 and its derivatives
    def a(self, x):
        e, c = self.e(x), self.c(x)
        return 0.5 * (e * e + c * c)

    def da(self, x):
        return self.e(x) * self.de(x) + self.c(x) * self.dc(x)

    def d2a(self, x):
        if self.d2e is None:
            raise MissingDerivative(f"coefficient set {self.name!r} has no e''")
        de, dc = self.de(x), self.dc(x)
        return de * de + self.e(x) * self.d2e(x) + dc * dc + self.c(x) * self.d2c(x)

    def bar_b(self, x):
        return self.b(x) - 0.5 * self.c(x) * self.dc(x)

    def bar_a(self, x):
        e = self.e(x)
        return 0.5 * e * e


def derived_a(coeffs: CoefficientSet, x):
    return coeffs.a(x)


def derived_a_derivatives(coeffs: CoefficientSet, x):
    """Return ``(a', a'')``; ``a''`` is None when the preset lacks ``e''``."""
    try:
        d2 = coeffs.d2a(x)
    except MissingDerivative:
        d2 = None
    return coeffs.da(x), d2


def stratonovich_coeffs(coeffs: CoefficientSet, x):
    """Itô-to-Stratonovich corrected pair ``(b - c c'/2, e^2/2)``."""
    return coeffs.bar_b(x), coeffs.bar_a(x)


def representation_drifts(coeffs: CoefficientSet, x):
    """Position drift ``2a' - b - cc'`` and weight drift ``a'' - b'``."""
    pos = 2.0 * coeffs.da(x) - coeffs.b(x) - coeffs.c(x) * coeffs.dc(x)
    weight = coeffs.d2a(x) - coeffs.db(x)
    return pos, weight


@dataclass
class BCReport:
    maxima: dict[str, float]
    min_e: float
    K: float
    e_min: float
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


_BC_FIELDS = ("b", "db", "c", "dc", "d2c", "d3c", "e", "de")


def validate_bc(coeffs: CoefficientSet, probe_grid, strict: bool = True) -> BCReport:
    """Scan ``probe_grid`` for violations of the boundedness condition.

    With ``strict`` a failing report raises :class:`ValidationFailed`
    naming the first violated bound.
    """
    x = np.asarray(probe_grid, dtype=float)
    if x.size == 0:
        raise ValueError("probe grid is empty")
    maxima = {}
    violations = []
    for name in _BC_FIELDS:
        vals = np.abs(np.broadcast_to(getattr(coeffs, name)(x), x.shape))
        maxima[name] = float(vals.max())
        if maxima[name] > coeffs.K:
            violations.append(f"|{name}| = {maxima[name]:.6g} exceeds K = {coeffs.K:.6g}")
    min_e = float(np.min(np.broadcast_to(coeffs.e(x), x.shape)))
    if min_e < coeffs.e_min:
        violations.append(f"min e = {min_e:.6g} below e_min = {coeffs.e_min:.6g}")
    report = BCReport(maxima=maxima, min_e=min_e, K=coeffs.K, e_min=coeffs.e_min,
                      violations=violations)
    if strict and violations:
        raise ValidationFailed(violations[0], report)
    return report


# -- test functions -----------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """Nonnegative, (numerically) compactly supported test function."""

    __test__ = False  # keep pytest from collecting this class

    f: Func
    df: Func
    support_radius: float
    f_sup: float
    name: str = "f"

    def __call__(self, x):
        return self.f(x)

    def scaled(self, alpha: float) -> "TestFunction":
        f, df = self.f, self.df
        return TestFunction(lambda x: alpha * f(x), lambda x: alpha * df(x),
                            self.support_radius, abs(alpha) * self.f_sup,
                            f"{alpha:g}*{self.name}")


def zero_function() -> TestFunction:
    return TestFunction(_zero, _zero, 1.0, 0.0, "zero")


def gaussian_bump(height: float = 1.0, var: float = 0.25, center: float = 0.0) -> TestFunction:
    """``height * exp(-(x-center)^2 / (2 var))``; numerically compact."""

    def f(x):
        return height * np.exp(-((x - center) ** 2) / (2.0 * var))

    def df(x):
        return -(x - center) / var * f(x)

    radius = np.sqrt(2.0 * var * np.log(1e12))
    return TestFunction(f, df, float(radius), float(height), f"bump(h={height:g},v={var:g})")


def plateau(height: float = 1.0, half_width: float = 4.0, taper: float = 1.0) -> TestFunction:
    """Flat top on ``[-half_width, half_width]`` with a C^1 cosine-squared taper."""

    def f(x):
        r = np.abs(x) - half_width
        u = np.clip(r / taper, 0.0, 1.0)
        return np.where(u < 1.0, height * np.cos(0.5 * np.pi * u) ** 2, 0.0)

    def df(x):
        r = np.abs(x) - half_width
        inside = (r > 0) & (r < taper)
        return np.where(inside, -height * np.pi / (2 * taper)
                        * np.sin(np.pi * np.clip(r / taper, 0.0, 1.0)) * np.sign(x), 0.0)

    return TestFunction(f, df, half_width + taper, float(height),
                        f"plateau(h={height:g},L={half_width:g})")


# -- initial measures -----------------------------------------------------------


class InitialMeasure:
    """Finite measure mu on the line: sampling and integration against fields."""

    total: float

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` points from mu / total."""
        raise NotImplementedError

    def integrate(self, field) -> float:
        """``<mu, field>`` for a grid field."""
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianMeasure(InitialMeasure):
    total: float = 1.0
    mean: float = 0.0
    var: float = 0.25

    def sample(self, rng, n):
        return rng.normal(self.mean, np.sqrt(self.var), size=n)

    def density(self, x):
        return self.total * np.exp(-((x - self.mean) ** 2) / (2 * self.var)) / np.sqrt(
            2 * np.pi * self.var)

    def integrate(self, field):
        x = field.grid.nodes
        w = np.full(x.size, field.grid.h)
        w[0] = w[-1] = 0.5 * field.grid.h
        return float(np.sum(w * self.density(x) * field.values))


@dataclass(frozen=True)
class DiracMeasure(InitialMeasure):
    total: float = 1.0
    loc: float = 0.0

    def sample(self, rng, n):
        return np.full(n, self.loc)

    def integrate(self, field):
        return self.total * float(np.interp(self.loc, field.grid.nodes, field.values))


@dataclass(frozen=True)
class UniformMeasure(InitialMeasure):
    total: float = 1.0
    lo: float = 0.0
    hi: float = 1.0

    def sample(self, rng, n):
        return rng.uniform(self.lo, self.hi, size=n)

    def integrate(self, field):
        # fine resampling keeps the indicator edges from dominating the error
        x = np.linspace(self.lo, self.hi, 4001)
        v = np.interp(x, field.grid.nodes, field.values)
        return self.total * float(trapezoid(v, x)) / (self.hi - self.lo)


def check_measure(mu: InitialMeasure) -> None:
    if not mu.total > 0:
        raise EmptyMeasure(f"initial measure has total mass {mu.total}")


# -- presets --------------------------------------------------------------------


@dataclass(frozen=True)
class ModelPreset:
    name: str
    coefficients: CoefficientSet
    initial: TestFunction
    mu: InitialMeasure
    spec: str = ""


def const_coefficients(c0: float = 1.0, b0: float = 0.0, e0: float = 1.0) -> CoefficientSet:
    K = max(abs(b0), abs(c0), abs(e0))
    return CoefficientSet(
        b=_const(b0), db=_zero, c=_const(c0), dc=_zero, d2c=_zero, d3c=_zero,
        e=_const(e0), de=_zero, d2e=_zero, K=K, e_min=e0, name="CONST")


def zero_c_coefficients(b0: float = 0.0, e0: float = 1.0) -> CoefficientSet:
    return replace(const_coefficients(0.0, b0, e0), name="ZERO_C")


def _sup_third_derivative_factor() -> float:
    x = np.linspace(-6.0, 6.0, 2_400_001)
    return float(np.max(np.abs(24 * x * (1 - x * x) / (1 + x * x) ** 4)))


_D3C_FACTOR = _sup_third_derivative_factor()


def smooth_coefficients(c0: float = 0.5, b0: float = 0.1, e0: float = 1.0) -> CoefficientSet:
    """``c = c0 / (1 + x^2)``, ``b = b0 sin x``, constant ``e = e0``."""

    def c(x):
        return c0 / (1 + x * x)

    def dc(x):
        return -2 * c0 * x / (1 + x * x) ** 2

    def d2c(x):
        return c0 * (6 * x * x - 2) / (1 + x * x) ** 3

    def d3c(x):
        return c0 * 24 * x * (1 - x * x) / (1 + x * x) ** 4

    sup_dc = abs(c0) * 3 * np.sqrt(3) / 8
    K = max(abs(b0), abs(c0), sup_dc, 2 * abs(c0), abs(c0) * _D3C_FACTOR, abs(e0)) * (1 + 1e-9)
    return CoefficientSet(
        b=lambda x: b0 * np.sin(x), db=lambda x: b0 * np.cos(x),
        c=c, dc=dc, d2c=d2c, d3c=d3c,
        e=_const(e0), de=_zero, d2e=_zero, K=float(K), e_min=e0, name="SMOOTH")


_COEFF_FACTORIES = {
    "CONST": (const_coefficients, {"c0", "b0", "e0"}),
    "ZERO_C": (zero_c_coefficients, {"b0", "e0"}),
    "SMOOTH": (smooth_coefficients, {"c0", "b0", "e0"}),
}

# initial data keys shared by every preset
_SHARED_KEYS = {"f_height", "f_var", "mu_total", "mu_mean", "mu_var"}

PRESET_NAMES = tuple(_COEFF_FACTORIES)


def parse_model(text: str) -> ModelPreset:
    """Build a preset from ``NAME`` or ``NAME:key=value,key=value``."""
    name, _, rest = text.strip().partition(":")
    name = name.strip().upper()
    if name not in _COEFF_FACTORIES:
        raise KeyError(f"unknown model preset {name!r}; known: {', '.join(PRESET_NAMES)}")
    factory, keys = _COEFF_FACTORIES[name]
    params: dict[str, float] = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in keys | _SHARED_KEYS:
            raise KeyError(f"bad parameter {item!r} for preset {name}")
        params[key] = float(value)
    coeff_params = {k: v for k, v in params.items() if k in keys}
    f = gaussian_bump(params.get("f_height", 1.0), params.get("f_var", 0.25))
    mu = GaussianMeasure(params.get("mu_total", 1.0), params.get("mu_mean", 0.0),
                         params.get("mu_var", 0.25))
    canonical = name + "".join(
        (":" if i == 0 else ",") + f"{k}={params[k]!r}" for i, k in enumerate(sorted(params)))
    return ModelPreset(name, factory(**coeff_params), f, mu, canonical)
