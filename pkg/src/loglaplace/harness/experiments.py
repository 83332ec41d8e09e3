"""The canned experiments. Each takes an :class:`ExperimentConfig` and
returns a :class:`RunReport` whose rows carry their own verdicts."""

from __future__ import annotations

import math
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from ..branching import conditional_ensemble, unconditional_ensemble
from ..errors import BadGrid, ConfigError
from ..grid import Field, Grid1D, l2_norm
from ..lle_solver import (SolverParams, Trajectory, auto_grid, solve_backward, solve_forward,
                          solve_linear, solve_wz)
from ..model import (const_coefficients, gaussian_bump, parse_model, plateau,
                     smooth_coefficients, zero_c_coefficients)
from ..moments import (MomentEstimate, conditional_moments, duality_path, first_moment,
                       moments_via_duality, second_moment)
from ..noise import refine, refine_to, sample_path, stream, wz_rate
from ..representation import rep_gap, run_rep, twin_domination
from .config import ExperimentConfig
from .report import Row, RunReport

_TAG = 0x4A7


def _child_seed(*key: int) -> int:
    return int(stream(*key).integers(2 ** 62))


class _Clock:
    def __init__(self):
        self.stages: dict[str, float] = {}
        self._t0 = time.perf_counter()

    @contextmanager
    def __call__(self, stage: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.stages[stage] = self.stages.get(stage, 0.0) + time.perf_counter() - t0

    def as_dict(self) -> dict:
        return {"total_s": time.perf_counter() - self._t0, "stages_s": dict(self.stages)}


class _Bounds:
    """Running extremes of every field produced, for the comparison bound."""

    def __init__(self):
        self.low = math.inf
        self.excess = -math.inf
        self.fields = 0

    def check(self, traj: Trajectory, f_sup: float) -> Trajectory:
        lo = min(float(traj.values.min()), traj.diagnostics.get("min", math.inf))
        hi = max(float(traj.values.max()), traj.diagnostics.get("max", -math.inf))
        self.low = min(self.low, lo)
        self.excess = max(self.excess, hi - f_sup)
        self.fields += traj.diagnostics.get("steps", traj.values.shape[0] - 1) + 1
        return traj

    def rows(self) -> list[Row]:
        note = f"{self.fields} fields"
        return [Row.flag("A7 min over fields >= 0", self.low >= 0.0, self.low, note),
                Row.flag("A7 max over fields - sup f <= 0", self.excess <= 0.0, self.excess, note)]


def _start(cfg: ExperimentConfig, experiment: str):
    if cfg.experiment != experiment:
        raise ConfigError(f"config is for {cfg.experiment!r}, not {experiment!r}")
    cfg = cfg.resolve()
    report = RunReport(experiment, cfg.config_hash(), cfg.to_dict())
    return cfg, report, _Clock()


def _grid(cfg: ExperimentConfig, f, coeffs, halvings: int = 0) -> Grid1D:
    """Grid from ``domain``/``grid_n``/``h``; each halving doubles the cell count."""
    h = cfg.h / 2 ** halvings
    if cfg.domain is not None:
        n = cfg.grid_n * 2 ** halvings if cfg.grid_n else round(2 * cfg.domain / h)
        return Grid1D(-cfg.domain, cfg.domain, n)
    g = auto_grid(f, coeffs, cfg.t, cfg.h)
    n = cfg.grid_n * 2 ** halvings if cfg.grid_n else g.n_cells * 2 ** halvings
    return Grid1D(g.x_min, g.x_max, n)


# -- oracle suite ---------------------------------------------------------------


def run_oracles(cfg: ExperimentConfig) -> RunReport:
    """Closed-form solver checks, the comparison bound and the c = 0 degeneracy."""
    cfg, rep, clock = _start(cfg, "oracles")
    bounds = _Bounds()

    with clock("riccati"):
        f = plateau(1.0, 4.0, 1.0)
        path = sample_path(cfg.t, cfg.dt, cfg.seed)
        grid = Grid1D(-12.0, 12.0, round(24.0 / cfg.h))
        traj = bounds.check(solve_forward(f, const_coefficients(), path, SolverParams(grid),
                                          store_every=path.n_steps), f.f_sup)
        y0 = float(traj.final(0.0))
    rep.add(Row.bound("A1 riccati relative error", abs(y0 * (1 + cfg.t) - 1.0), 1e-3,
                      f"y(0,{cfg.t:g})={y0:.7f}, W_t={path.values[-1]:.3f}"))

    with clock("heat"):
        t_heat = 0.5
        f = gaussian_bump(1.0, 0.25)
        grid = Grid1D(-8.0, 8.0, round(16.0 / cfg.h))
        path = sample_path(t_heat, cfg.dt, cfg.seed)
        traj = bounds.check(solve_linear(f, zero_c_coefficients(), path, SolverParams(grid),
                                         store_every=path.n_steps), f.f_sup)
        x = grid.nodes
        exact = math.sqrt(0.25 / (0.25 + t_heat)) * np.exp(-x * x / (2 * (0.25 + t_heat)))
        err = float(np.max(np.abs(traj.final.values - exact)))
    rep.add(Row.bound("A1 heat kernel sup error", err, 2e-3))

    with clock("bounds"):
        t_b, dt_b = 0.5, 0.005
        for name, coeffs in (("CONST", const_coefficients()), ("SMOOTH", smooth_coefficients()),
                             ("ZERO_C", zero_c_coefficients())):
            f = gaussian_bump(1.0, 0.25)
            grid = auto_grid(f, coeffs, t_b, 0.02)
            params = SolverParams(grid)
            for p in range(cfg.paths):
                path = sample_path(t_b, dt_b, _child_seed(cfg.seed, _TAG, 1, p))
                bounds.check(solve_forward(f, coeffs, path, params), f.f_sup)
                bounds.check(solve_forward(f, coeffs, refine(path) if p % 2 else path,
                                           params, store_every=5), f.f_sup)
                bounds.check(solve_wz(f, coeffs, wz_rate(path, t_b / 10), params), f.f_sup)
        smooth = smooth_coefficients()
        f = gaussian_bump(1.0, 0.25)
        path = sample_path(t_b, dt_b, _child_seed(cfg.seed, _TAG, 2))
        twin = twin_domination(f, cfg.particles[0], smooth, path, t_b,
                               auto_grid(f, smooth, t_b, 0.02), cfg.seed)
    rep.rows.extend(bounds.rows())
    rep.add(Row.flag("A7 twin weight domination", twin["violations"] == 0, twin["violations"],
                     f"{twin['checked']} particle-steps"))

    with clock("degeneracy"):
        _degeneracy_rows(cfg, rep)
    rep.wall_clock = clock.as_dict()
    return rep


def _degeneracy_rows(cfg: ExperimentConfig, rep: RunReport) -> None:
    coeffs = zero_c_coefficients()
    f = gaussian_bump(1.0, 0.25)
    t, dt = 0.5, 0.5 / 256
    params = SolverParams(auto_grid(f, coeffs, t, 0.02))
    p1, p2 = sample_path(t, dt, cfg.seed), sample_path(t, dt, cfg.seed + 1)
    y1, y2 = solve_forward(f, coeffs, p1, params), solve_forward(f, coeffs, p2, params)
    rep.add(Row.flag("A8 c=0 trajectories bitwise identical", np.array_equal(y1.values, y2.values)))
    yb = solve_backward(f, coeffs, p1, t, params)
    rep.add(Row.bound("A8 c=0 backward minus forward", float(np.max(np.abs(
        yb.values - y1.final.values))), 1e-10))
    wz_err = max(float(np.max(np.abs(solve_wz(f, coeffs, wz_rate(p1, t / 2 ** k), params)
                                      .final.values - y1.final.values))) for k in range(2, 7))
    rep.add(Row.bound("A8 c=0 Wong-Zakai sup error", wz_err, 1e-10))

    mu = parse_model("ZERO_C").mu
    tb, dtb, n = 0.25, 0.0025, cfg.particles[0]
    ens = [conditional_ensemble(mu, n, coeffs, sample_path(tb, dtb, cfg.seed + i), tb, f,
                                cfg.reps, _child_seed(cfg.seed, _TAG, 3, i)) for i in range(2)]
    for label, power in (("first", 1), ("second", 2)):
        m = [MomentEstimate.from_samples(e.integral_f ** power) for e in ens]
        rep.add(Row.statistical(f"A8 c=0 branching {label} moment across W seeds", m[0].value,
                                m[1].value, math.hypot(m[0].std_err, m[1].std_err),
                                effect_floor=cfg.effect_floor))


# -- Wong-Zakai sweep -----------------------------------------------------------


def _master_path(cfg: ExperimentConfig, r: int):
    seed = _child_seed(cfg.seed, _TAG, 10, r)
    coarse_dt = cfg.eps[-1]
    try:
        return refine_to(sample_path(cfg.t, coarse_dt, seed), cfg.dt)
    except BadGrid:
        return sample_path(cfg.t, cfg.dt, seed)


def run_wz_sweep(cfg: ExperimentConfig) -> RunReport:
    """Mean squared L2 error of the Wong-Zakai solution against the Ito solve."""
    cfg, rep, clock = _start(cfg, "wz-sweep")
    preset = parse_model(cfg.model)
    coeffs, f = preset.coefficients, preset.initial
    params = SolverParams(_grid(cfg, f, coeffs))
    bounds = _Bounds()
    errors = np.zeros((cfg.reps, len(cfg.eps)))
    with clock("solves"):
        for r in range(cfg.reps):
            path = _master_path(cfg, r)
            y = bounds.check(solve_forward(f, coeffs, path, params), f.f_sup).final
            for j, eps in enumerate(cfg.eps):
                ye = bounds.check(solve_wz(f, coeffs, wz_rate(path, eps), params), f.f_sup).final
                errors[r, j] = l2_norm(Field(params.grid, ye.values - y.values)) ** 2
    mean = errors.mean(axis=0)
    se = errors.std(axis=0, ddof=1) / math.sqrt(cfg.reps) if cfg.reps > 1 else np.full_like(mean, np.nan)
    for eps, m, s in zip(cfg.eps, mean, se):
        rep.add(Row.info(f"A4 mean squared error eps={eps:.6g}", m, None if np.isnan(s) else s))
    c_zero = not np.any(np.broadcast_to(coeffs.c(params.grid.nodes), params.grid.nodes.shape))
    if c_zero:
        rep.add(Row.bound("A4 c=0 max error", float(errors.max()), 1e-10))
    else:
        rep.add(Row.flag("A4 errors strictly decreasing in eps", bool(np.all(np.diff(mean) < 0))))
        slope = _loglog_slope(np.array(cfg.eps), mean)
        rep.add(Row.at_least("A4 fitted log-log slope", slope, 0.3))
    rep.rows.extend(bounds.rows())
    rep.wall_clock = clock.as_dict()
    return rep


def _loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    if np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# -- duality --------------------------------------------------------------------


def run_duality_check(cfg: ExperimentConfig) -> RunReport:
    """Branching Monte Carlo of ``E exp(-<X_t,f>)`` against ``exp(-<mu, y_{0,t}>)``.

    Three environment paths (seeds ``seed``, ``seed+1``, ``seed+2``). The
    discretisation tolerance is the change in the backward value when the
    grid spacing and the path step are both halved.
    """
    cfg, rep, clock = _start(cfg, "duality")
    preset = parse_model(cfg.model)
    coeffs, f, mu = preset.coefficients, preset.initial, preset.mu
    params = SolverParams(_grid(cfg, f, coeffs))
    fine = SolverParams(_grid(cfg, f, coeffs, halvings=1))
    for i in range(3):
        s = cfg.seed + i
        path = sample_path(cfg.t, cfg.dt, s)
        with clock("branching"):
            ens = conditional_ensemble(mu, cfg.particles[0], coeffs, path, cfg.t, f, cfg.reps,
                                       _child_seed(s, _TAG, 20))
            mc = MomentEstimate.from_samples(ens.laplace)
        with clock("backward"):
            v = math.exp(-mu.integrate(solve_backward(f, coeffs, path, cfg.t, params)))
            v_fine = math.exp(-mu.integrate(solve_backward(f, coeffs, refine(path), cfg.t, fine)))
        rep.add(Row.statistical(f"A5 duality W seed {s}", mc.value, v, mc.std_err,
                                abs(v - v_fine), cfg.effect_floor,
                                f"half-step value {v_fine:.6f}"))
    rep.wall_clock = clock.as_dict()
    return rep


# -- moments --------------------------------------------------------------------


def _var_row(name: str, first: MomentEstimate, second: MomentEstimate) -> Row:
    gap = second.value - first.value ** 2
    se = math.hypot(second.std_err, 2 * abs(first.value) * first.std_err)
    return Row.flag(name, gap >= -3 * se, gap, f"3 SE = {3 * se:.3g}")


def run_moment_check(cfg: ExperimentConfig) -> RunReport:
    """Three estimators of the first two moments of ``<X_t, f>``.

    Branching Monte Carlo, the transition-density (Feynman-Kac) estimators and
    the conditional-moment equations averaged over environments. The grid
    tolerance for the last one is the paired change under halving ``h`` and
    the path step on the first ``min(paths, 20)`` environments.
    """
    cfg, rep, clock = _start(cfg, "moments")
    preset = parse_model(cfg.model)
    coeffs, f, mu = preset.coefficients, preset.initial, preset.mu
    t, floor = cfg.t, cfg.effect_floor
    with clock("branching"):
        ens = unconditional_ensemble(mu, cfg.particles[0], coeffs, t, cfg.dt, f, cfg.reps,
                                     _child_seed(cfg.seed, _TAG, 30))
        b1 = MomentEstimate.from_samples(ens.integral_f)
        b2 = MomentEstimate.from_samples(ens.integral_f ** 2)
    with clock("feynman-kac"):
        k1 = first_moment(mu, f, t, coeffs, cfg.fk_samples, cfg.dt, _child_seed(cfg.seed, _TAG, 31))
        k2 = second_moment(mu, f, t, coeffs, cfg.fk_samples, cfg.dt,
                           _child_seed(cfg.seed, _TAG, 32))
    dseed = _child_seed(cfg.seed, _TAG, 33)
    with clock("duality"):
        params = SolverParams(_grid(cfg, f, coeffs))
        if cfg.paths >= 2:
            d1, d2 = moments_via_duality(mu, f, t, coeffs, cfg.paths, params, dseed, cfg.dt)
        else:
            d1 = d2 = None
    with clock("grid tolerance"):
        fine = SolverParams(_grid(cfg, f, coeffs, halvings=1))
        diffs = []
        for j in range(min(cfg.paths, 20)):
            path = duality_path(dseed, j, t, cfg.dt)
            a = conditional_moments(mu, f, path, t, coeffs, params)
            b = conditional_moments(mu, f, refine(path), t, coeffs, fine)
            diffs.append((b[0] - a[0], b[1] - a[1]))
        tol1, tol2 = (abs(float(v)) for v in np.mean(diffs, axis=0))

    def pair(name, x, y, tol=0.0):
        return rep.add(Row.statistical(name, x.value, y.value, math.hypot(x.std_err, y.std_err),
                                       tol, floor))

    pair("A2 first moment branching vs feynman-kac", b1, k1)
    if d1 is not None:
        pair("first moment duality vs feynman-kac", d1, k1, tol1)
    pair("A3 second moment branching vs feynman-kac", b2, k2)
    if d2 is not None:
        pair("A3 second moment branching vs duality", b2, d2, tol2)
        pair("A3 second moment feynman-kac vs duality", k2, d2, tol2)
    rep.add(_var_row("A3 variance nonnegative (branching)", b1, b2))
    rep.add(_var_row("A3 variance nonnegative (feynman-kac)", k1, k2))
    if d1 is not None:
        rep.add(_var_row("A3 variance nonnegative (duality)", d1, d2))

    # total mass is a martingale whose variance grows like 2 t mu_total
    mass = ens.mass
    v = float(mass.var(ddof=1))
    m4 = float(np.mean((mass - mass.mean()) ** 4))
    se_v = math.sqrt(max(m4 - v * v, 0.0) / mass.size)
    rep.add(Row.statistical("total mass variance vs 2 t mu_total", v, 2 * t * mu.total, se_v,
                            effect_floor=floor))
    rep.add(Row.info("grid tolerance first moment", tol1))
    rep.add(Row.info("grid tolerance second moment", tol2))
    rep.wall_clock = clock.as_dict()
    return rep


# -- particle representation ----------------------------------------------------


def run_rep_convergence(cfg: ExperimentConfig) -> RunReport:
    """L1 gap between the weighted-particle density and the PDE solution."""
    cfg, rep, clock = _start(cfg, "rep-convergence")
    preset = parse_model(cfg.model)
    coeffs, f = preset.coefficients, preset.initial
    grid = _grid(cfg, f, coeffs)
    params = SolverParams(grid)
    f_mass = grid.sample(f).mass()
    bounds = _Bounds()
    gaps = np.zeros((cfg.paths, len(cfg.particles)))
    hat_min = 1.0
    for p in range(cfg.paths):
        path = sample_path(cfg.t, cfg.dt, _child_seed(cfg.seed, _TAG, 40, p))
        with clock("pde"):
            ref = bounds.check(solve_forward(f, coeffs, path, params), f.f_sup).final
        with clock("particles"):
            for i, n in enumerate(cfg.particles):
                run = run_rep(f, n, coeffs, path, cfg.t, grid, _child_seed(cfg.seed, _TAG, 41, p, n))
                gaps[p, i] = rep_gap(run, ref)
                if run.hat_history.size:
                    hat_min = min(hat_min, float(run.hat_history.min()))
    mean = gaps.mean(axis=0)
    se = gaps.std(axis=0, ddof=1) / math.sqrt(cfg.paths) if cfg.paths > 1 else [None] * len(mean)
    for n, m, s in zip(cfg.particles, mean, se):
        rep.add(Row.info(f"A6 mean L1 gap n={n}", m, s))
    rep.add(Row.flag("A6 L1 gap strictly decreasing in n", bool(np.all(np.diff(mean) < 0))))
    rep.add(Row.bound("A6 final L1 gap", float(mean[-1]), 0.1 * f_mass,
                      f"<f,1> = {f_mass:.6g}"))
    rep.add(Row.info("smallest mass-cap factor", hat_min))
    with clock("twin"):
        path = sample_path(cfg.t, cfg.dt, _child_seed(cfg.seed, _TAG, 40, 0))
        twin = twin_domination(f, cfg.particles[0], coeffs, path, cfg.t, grid, cfg.seed)
    rep.add(Row.flag("A7 twin weight domination", twin["violations"] == 0, twin["violations"],
                     f"{twin['checked']} particle-steps"))
    rep.rows.extend(bounds.rows())
    rep.wall_clock = clock.as_dict()
    return rep


# -- ad-hoc solve ---------------------------------------------------------------


def run_solve(cfg: ExperimentConfig) -> RunReport:
    """One forward solve; writes ``trajectory.csv`` and ``path.csv`` to ``out``."""
    cfg, rep, clock = _start(cfg, "solve")
    preset = parse_model(cfg.model)
    coeffs, f = preset.coefficients, preset.initial
    params = SolverParams(_grid(cfg, f, coeffs))
    path = sample_path(cfg.t, cfg.dt, cfg.seed)
    bounds = _Bounds()
    with clock("solve"):
        traj = bounds.check(solve_forward(f, coeffs, path, params,
                                          store_every=max(1, path.n_steps // 10)), f.f_sup)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    traj.to_csv(out / "trajectory.csv")
    path.to_csv(out / "path.csv")
    final = traj.final
    rep.add(Row.info("final mass <y_t,1>", final.mass()))
    rep.add(Row.info("final sup y_t", final.sup()))
    rep.rows.extend(bounds.rows())
    rep.wall_clock = clock.as_dict()
    return rep


RUNNERS = {
    "oracles": run_oracles,
    "wz-sweep": run_wz_sweep,
    "duality": run_duality_check,
    "moments": run_moment_check,
    "rep-convergence": run_rep_convergence,
    "solve": run_solve,
}
