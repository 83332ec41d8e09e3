"""Monte Carlo estimators of the first and second moments of ``<X_t, f>``.

Integrals against the transition densities of the one-point motion
(generator ``b d + a d^2``) and the two-point motion (adds the cross term
``c(x1) c(x2) d_1 d_2``) are realised by simulating those diffusions; the
densities themselves are never formed. ``moments_via_duality`` gets the
same quantities from the linear equations for ``z`` and ``h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lle_solver import SolverParams, solve_h, solve_linear
from .model import CoefficientSet, InitialMeasure
from .noise import BrownianPath, reversed_path, sample_path, stream

_TAG = 0x40E


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    std_err: float
    n_samples: int

    @classmethod
    def from_samples(cls, samples) -> "MomentEstimate":
        s = np.asarray(samples, dtype=float)
        if s.size < 2:
            raise ValueError("need at least two samples")
        return cls(float(s.mean()), float(s.std(ddof=1) / math.sqrt(s.size)), int(s.size))

    def __add__(self, other: "MomentEstimate") -> "MomentEstimate":
        return MomentEstimate(self.value + other.value, math.hypot(self.std_err, other.std_err),
                              min(self.n_samples, other.n_samples))

    def to_json(self, estimator: str, config_hash: str = "") -> dict:
        return {"estimator": estimator, "value": self.value, "std_err": self.std_err,
                "n_samples": self.n_samples, "config_hash": config_hash}


@dataclass(frozen=True)
class TwoPointSample:
    z1: np.ndarray
    z2: np.ndarray


def _n_steps(duration_max: float, dt: float) -> int:
    return max(1, math.ceil(duration_max / dt - 1e-9))


def _one_point(x, durations, coeffs, dt, rng):
    """Euler endpoints of ``dZ = b dt + e dB + c dW'`` with independent B, W'."""
    x = np.array(x, dtype=float)
    dur = np.broadcast_to(np.asarray(durations, dtype=float), x.shape)
    if not np.any(dur > 0):
        return x
    steps = _n_steps(float(dur.max()), dt)
    h = dur / steps
    sq = np.sqrt(h)
    for _ in range(steps):
        g = rng.standard_normal((2,) + x.shape)
        x = x + coeffs.b(x) * h + coeffs.e(x) * sq * g[0] + coeffs.c(x) * sq * g[1]
    return x


def _two_point(x1, x2, durations, coeffs, dt, rng):
    """Pair motion: shared W, independent B_1, B_2."""
    x1 = np.array(x1, dtype=float)
    x2 = np.array(x2, dtype=float)
    dur = np.broadcast_to(np.asarray(durations, dtype=float), x1.shape)
    if not np.any(dur > 0):
        return x1, x2
    steps = _n_steps(float(dur.max()), dt)
    h = dur / steps
    sq = np.sqrt(h)
    for _ in range(steps):
        g = rng.standard_normal((3,) + x1.shape) * sq
        x1, x2 = (x1 + coeffs.b(x1) * h + coeffs.c(x1) * g[0] + coeffs.e(x1) * g[1],
                  x2 + coeffs.b(x2) * h + coeffs.c(x2) * g[0] + coeffs.e(x2) * g[2])
    return x1, x2


def sim_L1(x, t: float, coeffs: CoefficientSet, dt: float, seed: int):
    """Endpoint(s) of the one-point motion started at ``x`` (scalar or array)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    out = _one_point(np.atleast_1d(x), t, coeffs, dt, stream(seed, _TAG, 1))
    return out if np.ndim(x) else float(out[0])


def sim_L2(x1, x2, t: float, coeffs: CoefficientSet, dt: float, seed: int) -> TwoPointSample:
    if t < 0:
        raise ValueError("t must be nonnegative")
    x1a, x2a = np.broadcast_arrays(np.atleast_1d(np.asarray(x1, float)),
                                   np.atleast_1d(np.asarray(x2, float)))
    z1, z2 = _two_point(x1a, x2a, t, coeffs, dt, stream(seed, _TAG, 2))
    return TwoPointSample(z1, z2)


def first_moment(mu: InitialMeasure, f, t: float, coeffs: CoefficientSet, M: int, dt: float,
                 seed: int) -> MomentEstimate:
    """``E <X_t, f> = mu_total * E f(Z_t)``, ``Z_0 ~ mu / mu_total``."""
    rng = stream(seed, _TAG, 3)
    x = mu.sample(rng, M)
    z = _one_point(x, t, coeffs, dt, rng)
    return MomentEstimate.from_samples(mu.total * np.asarray(f(z), dtype=float))


def _time_points(rng, t, M, strata):
    u = rng.random(M)
    if strata <= 1:
        return t * u
    k = np.arange(M) % strata
    return t * (k + u) / strata


def second_moment(mu: InitialMeasure, f, t: float, coeffs: CoefficientSet, M: int, dt: float,
                  seed: int, strata: int = 1) -> MomentEstimate:
    """Pair term over ``mu x mu`` plus twice the branch-point term.

    The branch-point term samples the split time ``s`` uniformly on
    ``[0, t]``: one particle runs for ``t - s`` from ``x ~ mu``, then two
    particles run as a pair for ``s`` from the common point.
    """
    rng = stream(seed, _TAG, 4)
    x1, x2 = mu.sample(rng, M), mu.sample(rng, M)
    z1, z2 = _two_point(x1, x2, t, coeffs, dt, rng)
    pair = MomentEstimate.from_samples(mu.total ** 2 * f(z1) * f(z2))
    if t == 0:
        return pair + MomentEstimate(0.0, 0.0, M)
    s = _time_points(rng, t, M, strata)
    y = _one_point(mu.sample(rng, M), t - s, coeffs, dt, rng)
    z1, z2 = _two_point(y, y, s, coeffs, dt, rng)
    samples = 2.0 * t * mu.total * f(z1) * f(z2)
    if strata > 1:
        # stratified mean; standard error pooled within strata
        k = np.arange(M) % strata
        means = np.array([samples[k == j].mean() for j in range(strata)])
        var = np.array([samples[k == j].var(ddof=1) / np.sum(k == j) for j in range(strata)])
        branch = MomentEstimate(float(means.mean()), float(np.sqrt(var.sum()) / strata), M)
    else:
        branch = MomentEstimate.from_samples(samples)
    return pair + branch


def conditional_moments(mu: InitialMeasure, f, path: BrownianPath, t: float,
                        coeffs: CoefficientSet, params: SolverParams) -> tuple[float, float]:
    """``E[<X_t,f> | W]`` and ``E[<X_t,f>^2 | W]`` from ``z`` and ``h``.

    Both equations are run backward in time (forward on the reversed
    increments), which is the convention under which the identities hold
    path by path.
    """
    rev = reversed_path(path, t)
    z = solve_linear(f, coeffs, rev, params, store_every=1)
    h = solve_h(z, coeffs, rev, params).final
    first = mu.integrate(z.final)
    return first, first * first - mu.integrate(h)


def duality_path(seed: int, j: int, t: float, dt: float) -> BrownianPath:
    """The ``j``-th environment path used by :func:`moments_via_duality`."""
    return sample_path(t, dt, int(stream(seed, _TAG, 5, j).integers(2 ** 62)))


def moments_via_duality(mu: InitialMeasure, f, t: float, coeffs: CoefficientSet, M_paths: int,
                        params: SolverParams, seed: int, dt: float):
    """Average the conditional moments over ``M_paths`` sampled environments."""
    if M_paths < 2:
        raise ValueError("need at least two paths")
    firsts, seconds = [], []
    for j in range(M_paths):
        a, b = conditional_moments(mu, f, duality_path(seed, j, t, dt), t, coeffs, params)
        firsts.append(a)
        seconds.append(b)
    return MomentEstimate.from_samples(firsts), MomentEstimate.from_samples(seconds)
