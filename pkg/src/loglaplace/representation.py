"""Weighted particle representation of the log-Laplace solution.

Particles ``xi`` move by ``e dB_i + (2a' - b - cc') dt - c dW`` and carry
weights ``m`` with ``dm = m ((a'' - b' - D(xi)) dt - c'(xi) dW)``, where
``D`` is the mollified, mass-capped density of the weighted cloud. The
density ``(1/n) sum m_i delta_{xi_i}`` approximates ``y_t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BandwidthTooSmall, EmptyInitial
from .grid import Field, Grid1D, convolve_kernel, gaussian_kernel, l1_distance
from .lle_solver import Trajectory
from .model import CoefficientSet, TestFunction, representation_drifts
from .noise import BrownianPath, stream

_TAG = 0x5E9


@dataclass(frozen=True)
class RepState:
    xi: np.ndarray
    m: np.ndarray
    eps_kde: float
    mass_cap: float

    @property
    def n(self) -> int:
        return self.xi.size

    @property
    def total_mass(self) -> float:
        return float(self.m.sum() / self.n) if self.n else 0.0


def hat_truncate(mass: float, cap: float) -> float:
    """``min(mass, cap) / mass`` with ``0/0 = 0``."""
    if mass == 0:
        return 0.0
    return min(mass, cap) / mass


def _sample_density(f: TestFunction, n: int, rng: np.random.Generator):
    r = f.support_radius
    x = np.linspace(-r, r, 200_001)
    pdf = np.asarray(f(x), dtype=float)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(x))])
    total = cdf[-1]
    if not total > 0:
        raise EmptyInitial("initial function has zero mass")
    u = rng.random(n) * total
    return np.interp(u, cdf, x), float(total)


def init_rep(f: TestFunction, n: int, seed: int, eps_kde: float | None = None,
             mass_cap: float | None = None) -> RepState:
    """Positions i.i.d. from ``f / <f,1>``, every weight equal to ``<f,1>``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    xi, total = _sample_density(f, n, stream(seed, _TAG, 0))
    eps = n ** (-1.0 / 3.0) if eps_kde is None else eps_kde
    cap = 10.0 * total if mass_cap is None else mass_cap
    return RepState(xi, np.full(n, total), eps, cap)


def _deposit(state: RepState, grid: Grid1D) -> tuple[np.ndarray, float]:
    """Linear (cloud-in-cell) deposit of ``m / n`` onto the nodes, divided by h."""
    out = np.zeros(grid.n_cells + 1)
    if state.n == 0:
        return out, 0.0
    idx = (state.xi - grid.x_min) / grid.h
    inside = (idx >= 0) & (idx < grid.n_cells)
    i0 = np.floor(idx[inside]).astype(np.intp)
    theta = idx[inside] - i0
    w = state.m[inside] / state.n
    out += np.bincount(i0, weights=w * (1 - theta), minlength=out.size)
    out += np.bincount(i0 + 1, weights=w * theta, minlength=out.size)
    lost = float(state.m[~inside].sum() / state.n)
    return out / grid.h, lost


def density(state: RepState, grid: Grid1D) -> Field:
    """``hat * (1/n) sum m_i p_eps(x - xi_i)`` on the grid nodes."""
    if math.sqrt(state.eps_kde) < grid.h:
        raise BandwidthTooSmall(f"sqrt(eps_kde)={math.sqrt(state.eps_kde):.3g} < h={grid.h:.3g}")
    hat = hat_truncate(state.total_mass, state.mass_cap)
    if hat == 0.0:
        return grid.zeros()
    binned, _ = _deposit(state, grid)
    kernel = gaussian_kernel(state.eps_kde, grid.h)
    return Field(grid, hat * convolve_kernel(binned, kernel))


def step_rep(state: RepState, coeffs: CoefficientSet, dW: float, dt: float,
             rng: np.random.Generator, grid: Grid1D, interaction: bool = True,
             dens: Field | None = None) -> RepState:
    """Euler step of positions and exponential-Euler step of weights.

    The interaction density is evaluated before the step. With
    ``interaction=False`` the ``-D`` term is dropped (the dominating twin
    system). The random draws do not depend on ``interaction``.
    """
    if state.n == 0 or (dt == 0 and dW == 0):
        return state
    xi = state.xi
    pos_drift, weight_drift = representation_drifts(coeffs, xi)
    dc = np.broadcast_to(coeffs.dc(xi), xi.shape)
    base = (weight_drift - 0.5 * dc * dc) * dt - dc * dW
    if interaction:
        if dens is None:
            dens = density(state, grid)
        base = base - dens(xi) * dt
    noise = rng.standard_normal(state.n) * math.sqrt(dt)
    new_xi = xi + coeffs.e(xi) * noise + pos_drift * dt - coeffs.c(xi) * dW
    return replace(state, xi=new_xi, m=state.m * np.exp(base))


@dataclass
class RepRun:
    trajectory: Trajectory
    hat_history: np.ndarray
    min_weight: float
    max_weight: float
    boundary_mass: float
    final_state: RepState
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "min_weight": self.min_weight,
            "max_weight": self.max_weight,
            "hat_min": float(self.hat_history.min()) if self.hat_history.size else 1.0,
            "hat_history": self.hat_history.tolist(),
            "boundary_mass": self.boundary_mass,
            "truncation_active_steps": int(np.sum(self.hat_history < 1.0)),
        }


def run_rep(f: TestFunction, n: int, coeffs: CoefficientSet, path: BrownianPath, t: float,
            grid: Grid1D, seed: int, eps_kde: float | None = None,
            mass_cap: float | None = None, store_every: int | None = None,
            interaction: bool = True) -> RepRun:
    """Iterate :func:`step_rep` along ``path`` and record densities."""
    if f.f_sup == 0:
        zero = np.zeros((2, grid.n_cells + 1))
        state = RepState(np.empty(0), np.empty(0), eps_kde or 1.0, mass_cap or 1.0)
        return RepRun(Trajectory(grid, np.array([0.0, t]), zero), np.zeros(0), 0.0, 0.0,
                      0.0, state)
    k_end = round(t / path.dt)
    if abs(k_end * path.dt - t) > 1e-9 * max(t, 1.0) or k_end > path.n_steps:
        raise ValueError(f"t={t} is not a grid time of the path")
    store_every = store_every or k_end or 1
    state = init_rep(f, n, seed, eps_kde, mass_cap)
    rng = stream(seed, _TAG, 1)
    times, stored, hats = [0.0], [density(state, grid).values], []
    min_w, max_w, lost = float(state.m.min()), float(state.m.max()), 0.0
    for k in range(k_end):
        hats.append(hat_truncate(state.total_mass, state.mass_cap))
        dens = density(state, grid) if interaction else None
        state = step_rep(state, coeffs, float(path.increments[k]), path.dt, rng, grid,
                         interaction, dens)
        min_w = min(min_w, float(state.m.min()))
        max_w = max(max_w, float(state.m.max()))
        if (k + 1) % store_every == 0 or k + 1 == k_end:
            d = density(state, grid)
            times.append((k + 1) * path.dt)
            stored.append(d.values)
            lost = max(lost, _deposit(state, grid)[1])
    traj = Trajectory(grid, np.array(times), np.array(stored), store_every)
    return RepRun(traj, np.array(hats), min_w, max_w, lost, state)


def rep_gap(run: RepRun, reference: Field) -> float:
    """L1 distance between the final representation density and a reference."""
    return l1_distance(run.trajectory.final, reference)


def twin_domination(f: TestFunction, n: int, coeffs: CoefficientSet, path: BrownianPath,
                    t: float, grid: Grid1D, seed: int, eps_kde: float | None = None) -> dict:
    """Step the interacting system and its interaction-free twin on shared draws.

    Returns the number of (particle, step) pairs checked and how many broke
    ``m <= m_twin``.
    """
    state = init_rep(f, n, seed, eps_kde)
    twin = state
    rng_a, rng_b = stream(seed, _TAG, 1), stream(seed, _TAG, 1)
    checked = violations = 0
    for k in range(round(t / path.dt)):
        dW = float(path.increments[k])
        state = step_rep(state, coeffs, dW, path.dt, rng_a, grid, True)
        twin = step_rep(twin, coeffs, dW, path.dt, rng_b, grid, False)
        if not np.array_equal(state.xi, twin.xi):
            raise RuntimeError("twin systems lost their shared positions")
        checked += state.n
        violations += int(np.sum(state.m > twin.m))
    return {"checked": checked, "violations": violations}
