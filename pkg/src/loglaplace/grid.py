"""Uniform 1-D grids, fields and the spatial operators used by the solvers."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import solve_banded

from .errors import BandwidthTooSmall, GridMismatch, SingularSystem


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 8:
            raise ValueError(f"need at least 8 cells, got {self.n_cells}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @cached_property
    def nodes(self) -> np.ndarray:
        x = self.x_min + np.arange(self.n_cells + 1) * self.h
        x.setflags(write=False)
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights."""
        w = np.full(self.n_cells + 1, self.h)
        w[0] = w[-1] = 0.5 * self.h
        w.setflags(write=False)
        return w

    @classmethod
    def with_spacing(cls, x_min: float, x_max: float, h: float) -> "Grid1D":
        return cls(x_min, x_max, int(round((x_max - x_min) / h)))

    def field(self, values) -> "Field":
        return Field(self, np.broadcast_to(np.asarray(values, dtype=float),
                                           (self.n_cells + 1,)).copy())

    def sample(self, func) -> "Field":
        return self.field(func(self.nodes))

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.n_cells + 1))


@dataclass
class Field:
    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_cells + 1,):
            raise GridMismatch(
                f"{self.values.shape[0]} values for a grid with {self.grid.n_cells + 1} nodes")

    def __mul__(self, alpha: float) -> "Field":
        return Field(self.grid, alpha * self.values)

    __rmul__ = __mul__

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def mass(self) -> float:
        return float(np.dot(self.grid.weights, self.values))

    def __call__(self, x):
        return np.interp(x, self.grid.nodes, self.values, left=0.0, right=0.0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "value"])
            for x, v in zip(self.grid.nodes, self.values):
                w.writerow([f"{x:.17g}", f"{v:.17g}"])


def _same_grid(a: Field, b: Field) -> Grid1D:
    if a.grid != b.grid:
        raise GridMismatch(f"{a.grid} != {b.grid}")
    return a.grid


def inner(field_a: Field, field_b: Field) -> float:
    grid = _same_grid(field_a, field_b)
    return float(np.sum(grid.weights * field_a.values * field_b.values))


def l2_norm(field: Field) -> float:
    return float(np.sqrt(inner(field, field)))


def l1_distance(field_a: Field, field_b: Field) -> float:
    grid = _same_grid(field_a, field_b)
    return float(np.sum(grid.weights * np.abs(field_a.values - field_b.values)))


def gaussian_kernel(epsilon: float, h: float) -> np.ndarray:
    """Discrete N(0, epsilon) kernel on offsets ``j*h``, ``|j*h| <= 6 sqrt(eps)``.

    Returned as quadrature weights summing to one.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    sd = np.sqrt(epsilon)
    if sd < h:
        raise BandwidthTooSmall(f"kernel sd {sd:.3g} below grid spacing {h:.3g}")
    half = int(np.floor(6.0 * sd / h))
    offsets = np.arange(-half, half + 1) * h
    w = np.exp(-offsets ** 2 / (2.0 * epsilon))
    return w / w.sum()


def convolve_kernel(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Centred convolution with zero data outside the grid."""
    half = kernel.size // 2
    full = np.convolve(values, kernel)
    return full[half:half + values.size]


def mollify(field: Field, epsilon: float) -> Field:
    kernel = gaussian_kernel(epsilon, field.grid.h)
    return Field(field.grid, convolve_kernel(field.values, kernel))


class DiffusionOperator:
    """Backward-Euler step ``(I - dt D) u = rhs`` for ``D u = coef u''``.

    The banded matrix is assembled once; Dirichlet-zero boundaries.
    """

    def __init__(self, grid: Grid1D, coef, dt: float):
        coef = np.broadcast_to(np.asarray(coef, dtype=float), (grid.n_cells + 1,))
        if np.any(coef < 0):
            raise ValueError("diffusion coefficient must be nonnegative")
        r = dt * coef / grid.h ** 2
        n = grid.n_cells + 1
        ab = np.zeros((3, n))
        ab[1] = 1.0 + 2.0 * r
        ab[0, 2:] = -r[1:-1]    # super-diagonal entries (row j, col j+1)
        ab[2, :-2] = -r[1:-1]   # sub-diagonal entries (row j, col j-1)
        ab[1, 0] = ab[1, -1] = 1.0
        ab[0, 1] = 0.0
        ab[2, -2] = 0.0
        self.ab = ab
        self.trivial = not np.any(r)

    def __call__(self, values: np.ndarray) -> np.ndarray:
        if self.trivial:
            return values.copy()
        rhs = values.copy()
        rhs[0] = rhs[-1] = 0.0
        try:
            out = solve_banded((1, 1), self.ab, rhs, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
        # discrete maximum principle holds exactly; clip only roundoff
        return np.clip(out, min(values.min(), 0.0), max(values.max(), 0.0))


def implicit_diffusion_step(field: Field, diffusion_coef, dt: float) -> Field:
    coef = diffusion_coef.values if isinstance(diffusion_coef, Field) else diffusion_coef
    return Field(field.grid, DiffusionOperator(field.grid, coef, dt)(field.values))


def sample_at(values: np.ndarray, grid: Grid1D, foot: np.ndarray,
              method: str = "linear") -> np.ndarray:
    """Interpolate grid data at ``foot`` points; zero outside the domain."""
    idx = (foot - grid.x_min) / grid.h
    return _sample_index(values, idx, grid, method)


def _sample_index(values, idx, grid, method):
    n = values.size - 1
    inside = (idx >= 0.0) & (idx <= n)
    if method == "linear":
        i0 = np.clip(np.floor(idx), 0, n - 1).astype(np.intp)
        theta = idx - i0
        out = (1.0 - theta) * values[i0] + theta * values[i0 + 1]
    elif method == "pchip":
        # subnormal slopes overflow in scipy's harmonic mean; the limit is a zero slope
        with np.errstate(over="ignore"):
            out = PchipInterpolator(np.arange(n + 1.0), values, extrapolate=False)(
                np.clip(idx, 0.0, n))
    else:
        raise ValueError(f"unknown interpolation {method!r}")
    out = np.where(inside, out, 0.0)
    lo, hi = min(values.min(), 0.0), max(values.max(), 0.0)
    return np.clip(out, lo, hi)


def transport_step(field: Field, displacement, method: str = "linear") -> Field:
    """Semi-Lagrangian shift: ``out(x) = in(x - displacement(x))``.

    ``displacement`` is a callable of the node array or an array of node
    values. Both interpolants are range preserving.
    """
    grid = field.grid
    d = displacement(grid.nodes) if callable(displacement) else displacement
    d = np.broadcast_to(np.asarray(d, dtype=float), grid.nodes.shape)
    idx = np.arange(grid.n_cells + 1.0) - d / grid.h
    return Field(grid, _sample_index(field.values, idx, grid, method))


def upwind_drift_step(values: np.ndarray, velocity: np.ndarray, dt: float, h: float) -> np.ndarray:
    """One explicit upwind step of ``u_t = velocity * u_x`` (CFL <= 1 assumed).

    The result is a convex combination of neighbours, so it stays within
    the input range.
    """
    nu = velocity * dt / h
    out = values.copy()
    right = np.clip(nu[1:-1], 0.0, None)
    left = np.clip(-nu[1:-1], 0.0, None)
    out[1:-1] = (values[1:-1] * (1.0 - right - left)
                 + right * values[2:] + left * values[:-2])
    return np.clip(out, min(values.min(), 0.0), max(values.max(), 0.0))
