"""Experiment configuration: flat YAML file, flag overrides and a stable hash."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from ..errors import ConfigError
from ..model import parse_model

EXPERIMENTS = ("oracles", "wz-sweep", "duality", "moments", "rep-convergence", "solve")

# Per-experiment defaults. Anything left as None in a config is filled from
# here by ``resolve``; ``eps`` defaults to T/4, ..., T/64 for the chosen T.
_DEFAULTS = {
    "oracles": dict(model="CONST", t=1.0, dt=1e-3, h=0.01, seed=2, reps=20_000,
                    particles=[100], paths=2),
    "wz-sweep": dict(model="CONST", t=0.5, dt=0.5 / 1024, h=0.02, seed=0, reps=20),
    "duality": dict(model="CONST", t=0.25, dt=0.0025, h=0.02, seed=11, reps=10_000,
                    particles=[1000]),
    "moments": dict(model="CONST", t=0.25, dt=0.0025, h=0.02, seed=0, reps=10_000,
                    particles=[1000], fk_samples=100_000, paths=200),
    "rep-convergence": dict(model="CONST", t=0.5, dt=0.005, h=0.02, seed=0,
                            particles=[100, 1000, 10_000], paths=10),
    "solve": dict(model="CONST", t=0.5, dt=1e-3, h=0.02, seed=0),
}

_FALLBACK = dict(reps=1, particles=[1000], fk_samples=100_000, paths=1, effect_floor=0.1)


@dataclass
class ExperimentConfig:
    experiment: str = "oracles"
    model: str | None = None
    t: float | None = None
    dt: float | None = None
    h: float | None = None
    grid_n: int | None = None
    domain: float | None = None       # half width of a symmetric domain; None = automatic
    seed: int | None = None
    reps: int | None = None
    particles: list[int] | None = None
    fk_samples: int | None = None
    paths: int | None = None
    eps: list[float] | None = None
    effect_floor: float | None = None
    out: str = "out"

    # -- construction -----------------------------------------------------------

    @classmethod
    def defaults(cls, experiment: str) -> "ExperimentConfig":
        return cls(experiment=experiment).resolve()

    def resolve(self) -> "ExperimentConfig":
        """Fill unset fields from the experiment defaults and validate."""
        if self.experiment not in _DEFAULTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; known: {', '.join(EXPERIMENTS)}")
        base = {**_FALLBACK, **_DEFAULTS[self.experiment]}
        vals = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        for k, v in base.items():
            if vals.get(k) is None:
                vals[k] = list(v) if isinstance(v, list) else v
        if vals["eps"] is None:
            vals["eps"] = [vals["t"] / 2 ** k for k in range(2, 7)]
        cfg = ExperimentConfig(**vals)
        cfg._coerce()
        cfg.validate()
        return cfg

    def _coerce(self):
        for name in ("t", "dt", "h", "domain", "effect_floor"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, float(v))
        for name in ("grid_n", "seed", "reps", "fk_samples", "paths"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, int(v))
        self.particles = [int(p) for p in self.particles]
        self.eps = [float(e) for e in self.eps]
        self.model = _parse(self.model).spec

    def validate(self) -> None:
        _parse(self.model)
        for name in ("t", "dt", "h"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not _integral(self.t, self.dt):
            raise ConfigError(f"t={self.t} is not an integer multiple of dt={self.dt}")
        if min(self.reps, self.fk_samples, self.paths) < 1 or min(self.particles) < 1:
            raise ConfigError("counts must be positive")
        if self.grid_n is not None and self.grid_n < 8:
            raise ConfigError("grid_n must be at least 8")
        if self.domain is not None and not self.domain > 0:
            raise ConfigError("domain half width must be positive")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ConfigError("eps list must be strictly descending")
        for e in self.eps if self.experiment == "wz-sweep" else ():
            if not (_integral(self.t, e) and _integral(e, self.dt)):
                raise ConfigError(f"eps={e} must divide t={self.t} and be a multiple of dt={self.dt}")

    # -- file format ------------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict) or any(isinstance(v, dict) for v in data.values()):
            raise ConfigError("config file must be a flat key/value mapping")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_yaml(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_yaml())

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    # -- identity ---------------------------------------------------------------

    def config_hash(self) -> str:
        """sha256 over every field except the output directory."""
        d = self.resolve().to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _parse(model: str):
    try:
        return parse_model(str(model))
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _integral(total: float, step: float) -> bool:
    k = round(total / step)
    return k >= 1 and math.isclose(k * step, total, rel_tol=1e-9, abs_tol=0.0)
