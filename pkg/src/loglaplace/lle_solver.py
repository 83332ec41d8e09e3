"""Operator-splitting solvers for the stochastic log-Laplace equation.

All solvers step the Stratonovich form of the equation: drift
``bar_b d_x``, diffusion ``bar_a d_x^2`` and a transport term
``c d_x y o dW`` solved along characteristics. Per noise increment the
split order is reaction, drift, diffusion, transport. Reaction, upwind
drift, implicit diffusion and monotone transport each map ``[0, sup f]``
into itself, so the comparison bound ``0 <= y <= sup f`` holds exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryLeak, CFLViolation, TrajectoryMismatch
from .grid import DiffusionOperator, Field, Grid1D, _sample_index, upwind_drift_step
from .model import CoefficientSet, TestFunction
from .noise import BrownianPath, WZRate, reversed_path

_MAX_DRIFT_SUBSTEPS = 100_000


@dataclass(frozen=True)
class SolverParams:
    grid: Grid1D
    dt: float | None = None           # None: one deterministic substep per noise step
    substep_cfl: float = 0.9
    boundary_tol: float = 1e-8
    interpolation: str = "pchip"
    strang: bool = False
    check_boundary: bool = True

    def __post_init__(self):
        if not 0 < self.substep_cfl <= 1:
            raise ValueError("substep_cfl must lie in (0, 1]")


@dataclass
class Trajectory:
    grid: Grid1D
    times: np.ndarray
    values: np.ndarray          # shape (n_stored, n_nodes)
    stored_every: int = 1
    diagnostics: dict = field(default_factory=dict)

    @property
    def fields(self) -> list[Field]:
        return [Field(self.grid, v) for v in self.values]

    @property
    def final(self) -> Field:
        return Field(self.grid, self.values[-1].copy())

    def at(self, t: float) -> Field:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} not stored")
        return Field(self.grid, self.values[k].copy())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "value"])
            for t, row in zip(self.times, self.values):
                for x, v in zip(self.grid.nodes, row):
                    w.writerow([f"{t:.17g}", f"{x:.17g}", f"{v:.17g}"])


class Splitting:
    """Precomputed coefficient fields and operators for one (coeffs, grid, dt)."""

    def __init__(self, coeffs: CoefficientSet, params: SolverParams, noise_dt: float):
        grid = params.grid
        x = grid.nodes
        shape = x.shape
        self.params = params
        self.grid = grid
        self.coeffs = coeffs
        self.noise_dt = noise_dt
        if params.dt is None:
            self.n_sub = 1
        else:
            self.n_sub = round(noise_dt / params.dt)
            if self.n_sub < 1 or abs(self.n_sub * params.dt - noise_dt) > 1e-9 * noise_dt:
                raise ValueError(f"solver dt {params.dt} must divide noise dt {noise_dt}")
        self.dt_sub = noise_dt / self.n_sub
        self.bar_b = np.broadcast_to(coeffs.bar_b(x), shape).astype(float)
        self.bar_a = np.broadcast_to(coeffs.bar_a(x), shape).astype(float)
        self.c = np.broadcast_to(coeffs.c(x), shape).astype(float)
        self.c_is_zero = not np.any(self.c)
        vmax = float(np.max(np.abs(self.bar_b)))
        n_drift = max(1, math.ceil(vmax * self.dt_sub / (params.substep_cfl * grid.h)))
        if n_drift > _MAX_DRIFT_SUBSTEPS:
            raise CFLViolation(f"drift needs {n_drift} substeps per solver step")
        self.n_drift = n_drift if vmax > 0 else 0
        self.half_diffusion = None
        self.diffusion = DiffusionOperator(grid, self.bar_a, self.dt_sub)
        if params.strang:
            self.half_diffusion = DiffusionOperator(grid, self.bar_a, 0.5 * self.dt_sub)

    def _drift(self, u, dt):
        if self.n_drift:
            d = dt / self.n_drift
            for _ in range(self.n_drift):
                u = upwind_drift_step(u, self.bar_b, d, self.grid.h)
        return u

    def deterministic(self, u, reaction: bool, source=None, half: bool = False):
        """Reaction (or source), drift and diffusion over one solver substep."""
        dt = 0.5 * self.dt_sub if half else self.dt_sub
        if reaction:
            u = u / (1.0 + u * dt)
        if source is not None:
            u = u + source * dt
        u = self._drift(u, dt)
        u = (self.half_diffusion if half else self.diffusion)(u)
        return u

    def transport(self, u, dW: float):
        """Shift along the characteristic of ``dX = c(X) dW`` (one Heun step)."""
        if self.c_is_zero or dW == 0.0:
            return u
        x = self.grid.nodes
        x1 = x + self.c * dW
        foot = x + 0.5 * (self.c + np.asarray(self.coeffs.c(x1), dtype=float)) * dW
        idx = np.arange(x.size, dtype=float) + (foot - x) / self.grid.h
        out = _sample_index(u, idx, self.grid, self.params.interpolation)
        out[0] = out[-1] = 0.0
        return out

    def step(self, u, dW: float, reaction: bool, source=None):
        if self.params.strang:
            for _ in range(self.n_sub):
                u = self.deterministic(u, reaction, source, half=True)
            u = self.transport(u, dW)
            for _ in range(self.n_sub):
                u = self.deterministic(u, reaction, source, half=True)
            return u
        for _ in range(self.n_sub):
            u = self.deterministic(u, reaction, source)
        return self.transport(u, dW)


def _check_boundary(u, scale, params, k):
    if not params.check_boundary or scale <= 0:
        return
    edge = max(abs(u[1]), abs(u[-2]))
    if edge > params.boundary_tol * scale:
        raise BoundaryLeak(
            f"boundary-adjacent value {edge:.3g} exceeds {params.boundary_tol:g} * {scale:.3g} "
            f"at step {k}; enlarge the domain")


def _run(initial: np.ndarray, increments: np.ndarray, noise_dt: float, coeffs, params,
         reaction: bool, store_every: int = 1, sources=None, scale=None) -> Trajectory:
    split = Splitting(coeffs, params, noise_dt)
    u = initial.astype(float).copy()
    u[0] = u[-1] = 0.0
    scale = float(np.max(np.abs(initial))) if scale is None else scale
    times, stored = [0.0], [u.copy()]
    lo, hi = float(u.min()), float(u.max())
    n = increments.size
    for k in range(n):
        src = None if sources is None else sources[k]
        u = split.step(u, float(increments[k]), reaction, src)
        _check_boundary(u, scale, params, k)
        lo, hi = min(lo, float(u.min())), max(hi, float(u.max()))
        if (k + 1) % store_every == 0 or k + 1 == n:
            times.append((k + 1) * noise_dt)
            stored.append(u.copy())
    # extremes over every step, not only the stored ones
    diag = {"min": lo, "max": hi, "steps": n}
    return Trajectory(params.grid, np.array(times), np.array(stored), store_every, diag)


def _horizon(path: BrownianPath, t):
    if t is None:
        return path.increments
    k = round(t / path.dt)
    if abs(k * path.dt - t) > 1e-9 * max(t, 1.0) or k > path.n_steps:
        raise ValueError(f"t={t} is not a grid time of the path (T={path.T}, dt={path.dt})")
    return path.increments[:k]


def solve_forward(f: TestFunction, coeffs: CoefficientSet, path: BrownianPath,
                  params: SolverParams, t: float | None = None,
                  store_every: int = 1) -> Trajectory:
    """Forward log-Laplace equation driven by ``path`` up to ``t``."""
    u0 = np.asarray(f(params.grid.nodes), dtype=float)
    return _run(u0, _horizon(path, t), path.dt, coeffs, params, True, store_every)


def solve_backward(f: TestFunction, coeffs: CoefficientSet, path: BrownianPath, t: float,
                   params: SolverParams) -> Field:
    """``y_{0,t}``: a forward solve driven by the time-reversed increments."""
    rev = reversed_path(path, t)
    return solve_forward(f, coeffs, rev, params, store_every=rev.n_steps).final


def solve_wz(f: TestFunction, coeffs: CoefficientSet, rate: WZRate, params: SolverParams,
             t: float | None = None, store_every: int = 1) -> Trajectory:
    """Wong-Zakai PDE: transport with velocity ``c * rate`` frozen on each block."""
    inc = rate.increments()
    if t is not None:
        inc = inc[:round(t / rate.dt)]
    u0 = np.asarray(f(params.grid.nodes), dtype=float)
    return _run(u0, inc, rate.dt, coeffs, params, True, store_every)


def solve_linear(f: TestFunction, coeffs: CoefficientSet, path: BrownianPath,
                 params: SolverParams, t: float | None = None,
                 store_every: int = 1) -> Trajectory:
    """First-moment equation: the log-Laplace equation without reaction."""
    u0 = np.asarray(f(params.grid.nodes), dtype=float)
    return _run(u0, _horizon(path, t), path.dt, coeffs, params, False, store_every)


def solve_h(z_traj: Trajectory, coeffs: CoefficientSet, path: BrownianPath,
            params: SolverParams) -> Trajectory:
    """Second-derivative field ``h`` with zero data and source ``-2 z^2``.

    ``z_traj`` must be stored at every noise step on the same grid; the
    source over step k uses ``z`` at the start of the step.
    """
    if z_traj.grid != params.grid:
        raise TrajectoryMismatch("z trajectory lives on a different grid")
    n = z_traj.values.shape[0] - 1
    expected = np.arange(n + 1) * path.dt
    if z_traj.stored_every != 1 or n > path.n_steps or not np.allclose(
            z_traj.times, expected, rtol=0, atol=1e-9 * path.dt):
        raise TrajectoryMismatch("z trajectory must be stored at every noise step of the path")
    sources = -2.0 * z_traj.values[:-1] ** 2
    scale = max(float(np.max(np.abs(sources))) * path.dt, 0.0)
    u0 = np.zeros(params.grid.n_cells + 1)
    return _run(u0, path.increments[:n], path.dt, coeffs, params, False, 1,
                sources=sources, scale=scale)


def solve_scaled(alpha: float, f: TestFunction, coeffs: CoefficientSet, path: BrownianPath,
                 params: SolverParams, t: float | None = None,
                 store_every: int = 1) -> Trajectory:
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    return solve_forward(f.scaled(alpha), coeffs, path, params, t, store_every)


def auto_grid(f: TestFunction, coeffs: CoefficientSet, T: float, h: float,
              w_max: float = 4.0, extra: float = 0.0) -> Grid1D:
    """Symmetric domain wide enough for Dirichlet-zero boundaries.

    Half width = support + 6 sqrt(2 a_max T) + c_max * w_max + extra, where
    ``w_max`` bounds ``max |W|`` over the run.
    """
    probe = np.linspace(-50, 50, 20001)
    a_max = float(np.max(np.broadcast_to(coeffs.a(probe), probe.shape)))
    c_max = float(np.max(np.abs(np.broadcast_to(coeffs.c(probe), probe.shape))))
    b_max = float(np.max(np.abs(np.broadcast_to(coeffs.bar_b(probe), probe.shape))))
    half = f.support_radius + 6 * math.sqrt(2 * a_max * T) + c_max * w_max + b_max * T + extra
    half = h * math.ceil(half / h)
    return Grid1D(-half, half, int(round(2 * half / h)))
