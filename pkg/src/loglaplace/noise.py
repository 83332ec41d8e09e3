"""The common Brownian path W: sampling, bridge refinement, Wong-Zakai rates
and time reversal."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadGrid

_GRID_TOL = 1e-9


def _steps(T: float, dt: float) -> int:
    if not dt > 0:
        raise BadGrid(f"dt must be positive, got {dt}")
    n = round(T / dt)
    if n < 1 or abs(n * dt - T) > _GRID_TOL * max(T, 1.0):
        raise BadGrid(f"T={T} is not an integer multiple of dt={dt}")
    return n


def stream(*key: int) -> np.random.Generator:
    """Generator keyed on a tuple of integers (seed, level, index, ...).

    ``SeedSequence`` hashes the key, so streams are reproducible across runs
    and platforms and distinct keys give independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in key]))


@dataclass(frozen=True)
class BrownianPath:
    T: float
    dt: float
    increments: np.ndarray
    seed: int = -1
    level: int = 0

    def __post_init__(self):
        inc = np.array(self.increments, dtype=float)
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)
        if inc.size != _steps(self.T, self.dt):
            raise BadGrid(f"{inc.size} increments do not cover T={self.T} at dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return self.increments.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def values(self) -> np.ndarray:
        """W at the grid times, starting from W_0 = 0."""
        return np.concatenate([[0.0], np.cumsum(self.increments)])

    def at(self, t: float) -> float:
        return float(self.values[_steps(t, self.dt)]) if t > 0 else 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "dW"])
            for k, d in enumerate(self.increments):
                w.writerow([f"{k * self.dt:.17g}", f"{d:.17g}"])

    @classmethod
    def from_csv(cls, path, seed: int = -1) -> "BrownianPath":
        rows = list(csv.DictReader(Path(path).read_text().splitlines()))
        t = np.array([float(r["t"]) for r in rows])
        inc = np.array([float(r["dW"]) for r in rows])
        dt = float(t[1] - t[0]) if t.size > 1 else float("nan")
        if t.size == 1:
            raise BadGrid("a single-row path file does not determine dt")
        return cls(T=dt * t.size, dt=dt, increments=inc, seed=seed)


def sample_path(T: float, dt: float, seed: int) -> BrownianPath:
    n = _steps(T, dt)
    inc = stream(seed, 0).normal(0.0, np.sqrt(dt), size=n)
    return BrownianPath(T, dt, inc, seed, 0)


def refine(path: BrownianPath) -> BrownianPath:
    """Halve dt by inserting Brownian-bridge midpoints.

    Each coarse increment d is split into ``d/2 + s`` and ``d/2 - s`` with
    ``s ~ N(0, dt/4)``, so the children sum back to d.
    """
    level = path.level + 1
    s = stream(path.seed, level).normal(0.0, 0.5 * np.sqrt(path.dt), size=path.n_steps)
    half = 0.5 * path.increments
    fine = np.empty(2 * path.n_steps)
    fine[0::2] = half + s
    fine[1::2] = half - s
    return BrownianPath(path.T, 0.5 * path.dt, fine, path.seed, level)


def refine_to(path: BrownianPath, dt: float) -> BrownianPath:
    """Refine repeatedly until the step equals ``dt`` (must be path.dt / 2^k)."""
    ratio = path.dt / dt
    k = round(np.log2(ratio))
    if k < 0 or abs(2.0 ** k - ratio) > 1e-9 * ratio:
        raise BadGrid(f"dt={dt} is not path.dt / 2^k for path.dt={path.dt}")
    for _ in range(k):
        path = refine(path)
    return path


def coarsen(path: BrownianPath, factor: int) -> BrownianPath:
    """Sum consecutive blocks of ``factor`` increments."""
    if path.n_steps % factor:
        raise BadGrid(f"{path.n_steps} steps not divisible by {factor}")
    inc = path.increments.reshape(-1, factor).sum(axis=1)
    return BrownianPath(path.T, path.dt * factor, inc, path.seed, path.level)


@dataclass(frozen=True)
class WZRate:
    """Piecewise-constant derivative of the polygonal interpolation of W."""

    epsilon: float
    values: np.ndarray
    dt: float

    @property
    def block_steps(self) -> int:
        return round(self.epsilon / self.dt)

    def increments(self) -> np.ndarray:
        """Effective increments ``rate * dt`` on the parent path grid."""
        return np.repeat(self.values * self.dt, self.block_steps)

    def as_path(self) -> BrownianPath:
        inc = self.increments()
        return BrownianPath(inc.size * self.dt, self.dt, inc)


def wz_rate(path: BrownianPath, epsilon: float) -> WZRate:
    m = _steps(epsilon, path.dt)
    if path.n_steps % m:
        raise BadGrid(f"epsilon={epsilon} does not divide T={path.T}")
    blocks = path.increments.reshape(-1, m).sum(axis=1)
    return WZRate(epsilon, blocks / epsilon, path.dt)


def reversed_path(path: BrownianPath, t: float) -> BrownianPath:
    """The path ``tau -> W_t - W_{t - tau}`` on ``[0, t]``."""
    k = _steps(t, path.dt)
    if k > path.n_steps:
        raise BadGrid(f"t={t} exceeds horizon {path.T}")
    return BrownianPath(k * path.dt, path.dt, path.increments[:k][::-1].copy(),
                        path.seed, path.level)


def truncated(path: BrownianPath, t: float) -> BrownianPath:
    k = _steps(t, path.dt)
    if k > path.n_steps:
        raise BadGrid(f"t={t} exceeds horizon {path.T}")
    return BrownianPath(k * path.dt, path.dt, path.increments[:k].copy(), path.seed, path.level)
