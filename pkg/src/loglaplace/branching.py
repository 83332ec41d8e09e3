"""Branching particle system in a random environment.

Particles move by ``d eta = b dt + c dW + e dB_i`` with one shared W and
undergo critical binary branching at rate ``lam``: on each event the
particle dies or splits in two with probability 1/2.

Two samplers are provided:

``direct``
    per-step Euler motion plus branching with probability
    ``1 - exp(-lam dt)``; needs ``dt <= 0.1 / lam``.
``reduced``
    samples the reduced genealogy (lineages that have descendants alive at
    the final time). Branching does not depend on position, so this tree
    is a time-inhomogeneous Yule process with split rate
    ``(lam/2) / (1 + (lam/2)(t - s))`` and the law of ``X_t`` is exact up
    to the Euler motion. Cost scales with ``n log(lam t)`` instead of
    ``n lam t``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import CoefficientSet, InitialMeasure, check_measure
from .noise import BrownianPath, WZRate, stream

# Particle mass times branching rate. Critical binary branching contributes
# lam * beta * <X, phi^2> per unit time to the quadratic variation; the
# quadratic term -y^2 of the log-Laplace equation and the factor 2 of the
# second-moment formula both require lam * beta = 2.
RATE_TIMES_MASS = 2.0

_STREAM_TAG = 0xB4A
DEFAULT_BATCH = 256


@dataclass(frozen=True)
class BranchConfig:
    rate: float
    rng_seed: int = 0

    @classmethod
    def for_population(cls, mu_total: float, n: int, seed: int = 0) -> "BranchConfig":
        return cls(RATE_TIMES_MASS * n / mu_total, seed)


@dataclass
class PopulationState:
    positions: np.ndarray
    beta: float
    n: int
    time: float = 0.0

    @property
    def count(self) -> int:
        return int(self.positions.size)

    def integral(self, phi) -> float:
        """``<X, phi>``."""
        if self.positions.size == 0:
            return 0.0
        return self.beta * float(np.sum(phi(self.positions)))

    @property
    def mass(self) -> float:
        return self.beta * self.positions.size


def init_population(mu: InitialMeasure, n: int, seed: int) -> PopulationState:
    check_measure(mu)
    if n < 1:
        raise ValueError("n must be at least 1")
    pos = mu.sample(stream(seed, _STREAM_TAG, 0), n)
    return PopulationState(np.asarray(pos, dtype=float), mu.total / n, n, 0.0)


def _move(pos, inc, dt, coeffs, drift, rng):
    noise = rng.standard_normal(pos.size) * math.sqrt(dt)
    return pos + drift(pos) * dt + coeffs.c(pos) * inc + coeffs.e(pos) * noise


def _branch(pos, rid, rate, dt, rng):
    p_event = -math.expm1(-rate * dt)
    event = rng.random(pos.size) < p_event
    if not event.any():
        return pos, rid
    split = rng.random(pos.size) < 0.5
    counts = np.where(event, np.where(split, 2, 0), 1)
    return np.repeat(pos, counts), np.repeat(rid, counts)


def step_population(state: PopulationState, coeffs: CoefficientSet, dW: float, dt: float,
                    cfg: BranchConfig, rng: np.random.Generator | None = None) -> PopulationState:
    """Euler move with the shared increment ``dW`` followed by branching."""
    rng = rng if rng is not None else stream(cfg.rng_seed, _STREAM_TAG, 1)
    if dt == 0 or state.count == 0:
        return PopulationState(state.positions.copy(), state.beta, state.n, state.time + dt)
    pos = _move(state.positions, dW, dt, coeffs, coeffs.b, rng)
    pos, _ = _branch(pos, np.zeros(pos.size, dtype=np.intp), cfg.rate, dt, rng)
    return PopulationState(pos, state.beta, state.n, state.time + dt)


def _check_direct_dt(rate, dt):
    if rate * dt > 0.1 + 1e-12:
        raise ConfigError(f"direct branching needs dt <= 0.1/rate = {0.1 / rate:.3g}, got {dt:.3g}")


def _direct_batch(x0, incs, dt, coeffs, drift, rate, rng):
    _check_direct_dt(rate, dt)
    R, n = x0.shape
    pos = x0.ravel().copy()
    rid = np.repeat(np.arange(R), n)
    for k in range(incs.shape[0]):
        pos = _move(pos, incs[k, rid], dt, coeffs, drift, rng)
        pos, rid = _branch(pos, rid, rate, dt, rng)
    return pos, rid


def _reduced_batch(x0, incs, dt, coeffs, drift, rate, rng):
    R, n = x0.shape
    sigma = 0.5 * rate
    steps = incs.shape[0]
    t = steps * dt
    keep = rng.random(x0.shape) < 1.0 / (1.0 + sigma * t)
    rid, col = np.nonzero(keep)
    pos = x0[rid, col]
    for k in range(steps):
        remaining = t - k * dt
        q = (1.0 + sigma * max(remaining - dt, 0.0)) / (1.0 + sigma * remaining)
        if pos.size and q < 1.0:
            counts = rng.geometric(q, size=pos.size)
            if np.any(counts > 1):
                pos, rid = np.repeat(pos, counts), np.repeat(rid, counts)
        pos = _move(pos, incs[k, rid], dt, coeffs, drift, rng)
    return pos, rid


_METHODS = {"direct": _direct_batch, "reduced": _reduced_batch}


@dataclass
class Ensemble:
    """Per-replica functionals of ``X_t``."""

    t: float
    mass: np.ndarray
    integral_f: np.ndarray
    count: np.ndarray

    @property
    def replicas(self) -> int:
        return self.mass.size

    @property
    def laplace(self) -> np.ndarray:
        return np.exp(-self.integral_f)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replica", "t", "mass", "integral_f", "exp_neg_integral_f"])
            for r in range(self.replicas):
                w.writerow([r, f"{self.t:.17g}", f"{self.mass[r]:.17g}",
                            f"{self.integral_f[r]:.17g}", f"{self.laplace[r]:.17g}"])


def _simulate(mu, n, coeffs, increments_for_batch, dt, steps, f, replicas, seed, method,
              drift, batch):
    check_measure(mu)
    if method not in _METHODS:
        raise ValueError(f"unknown method {method!r}")
    beta = mu.total / n
    rate = RATE_TIMES_MASS / beta
    mass = np.zeros(replicas)
    integral = np.zeros(replicas)
    count = np.zeros(replicas, dtype=np.int64)
    for b, start in enumerate(range(0, replicas, batch)):
        R = min(batch, replicas - start)
        rng = stream(seed, _STREAM_TAG, 2, b)
        x0 = np.asarray(mu.sample(rng, R * n), dtype=float).reshape(R, n)
        incs = increments_for_batch(b, R)
        pos, rid = _METHODS[method](x0, incs, dt, coeffs, drift, rate, rng)
        cnt = np.bincount(rid, minlength=R)
        count[start:start + R] = cnt
        mass[start:start + R] = beta * cnt
        if f is not None and pos.size:
            integral[start:start + R] = beta * np.bincount(rid, weights=f(pos), minlength=R)
    return Ensemble(steps * dt, mass, integral, count)


def _steps(path_dt, t):
    k = round(t / path_dt)
    if abs(k * path_dt - t) > 1e-9 * max(t, 1.0):
        raise ConfigError(f"t={t} is not a multiple of dt={path_dt}")
    return k


def conditional_ensemble(mu: InitialMeasure, n: int, coeffs: CoefficientSet,
                         path: BrownianPath, t: float, f, replicas: int, seed: int,
                         method: str = "reduced", batch: int = DEFAULT_BATCH) -> Ensemble:
    """Replicas sharing one environment path, independent branching and B_i."""
    k = _steps(path.dt, t)
    if k > path.n_steps:
        raise ConfigError(f"t={t} beyond path horizon {path.T}")
    inc = path.increments[:k, None]
    return _simulate(mu, n, coeffs, lambda b, R: np.broadcast_to(inc, (k, R)), path.dt, k,
                     f, replicas, seed, method, coeffs.b, batch)


def wz_ensemble(mu: InitialMeasure, n: int, coeffs: CoefficientSet, rate: WZRate, t: float,
                f, replicas: int, seed: int, method: str = "reduced",
                batch: int = DEFAULT_BATCH) -> Ensemble:
    """Replicas of the Wong-Zakai system: drift ``bar_b + c * rate``, noise ``e dB``."""
    k = _steps(rate.dt, t)
    inc = rate.increments()[:k, None]
    return _simulate(mu, n, coeffs, lambda b, R: np.broadcast_to(inc, (k, R)), rate.dt, k,
                     f, replicas, seed, method, coeffs.bar_b, batch)


def unconditional_ensemble(mu: InitialMeasure, n: int, coeffs: CoefficientSet, t: float,
                           dt: float, f, replicas: int, seed: int, method: str = "reduced",
                           batch: int = DEFAULT_BATCH) -> Ensemble:
    """Replicas each with its own environment path."""
    k = _steps(dt, t)

    def incs(b, R):
        return stream(seed, _STREAM_TAG, 3, b).normal(0.0, math.sqrt(dt), size=(k, R))

    return _simulate(mu, n, coeffs, incs, dt, k, f, replicas, seed, method, coeffs.b, batch)


def _single(mu, n, coeffs, incs, dt, seed, method, drift):
    check_measure(mu)
    beta = mu.total / n
    rng = stream(seed, _STREAM_TAG, 4)
    x0 = np.asarray(mu.sample(rng, n), dtype=float).reshape(1, n)
    pos, _ = _METHODS[method](x0, incs[:, None], dt, coeffs, drift, RATE_TIMES_MASS / beta, rng)
    return PopulationState(pos, beta, n, incs.size * dt)


def run_conditional(mu: InitialMeasure, n: int, coeffs: CoefficientSet, path: BrownianPath,
                    t: float, seed: int, method: str = "reduced") -> PopulationState:
    """One realisation of ``X_t`` given the environment ``path``."""
    k = _steps(path.dt, t)
    return _single(mu, n, coeffs, path.increments[:k], path.dt, seed, method, coeffs.b)


def run_wz(mu: InitialMeasure, n: int, coeffs: CoefficientSet, rate: WZRate, t: float,
           seed: int, method: str = "reduced") -> PopulationState:
    k = _steps(rate.dt, t)
    return _single(mu, n, coeffs, rate.increments()[:k], rate.dt, seed, method, coeffs.bar_b)
