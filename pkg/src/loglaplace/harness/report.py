"""Pass/fail rows and the JSON run report."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

PASS, FAIL, UNDERPOWERED, INFO = "PASS", "FAIL", "UNDERPOWERED", "INFO"


@dataclass
class Row:
    name: str
    value: float
    verdict: str
    reference: float | None = None
    std_err: float | None = None
    tolerance: float | None = None
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    @classmethod
    def flag(cls, name: str, ok: bool, value: float | None = None, note: str = "") -> "Row":
        return cls(name, float(ok if value is None else value), PASS if ok else FAIL, note=note)

    @classmethod
    def info(cls, name: str, value: float, std_err: float | None = None, note: str = "") -> "Row":
        """A measured quantity with no verdict of its own."""
        return cls(name, float(value), INFO, std_err=None if std_err is None else float(std_err),
                   note=note)

    @classmethod
    def at_least(cls, name: str, value: float, limit: float, note: str = "") -> "Row":
        return cls(name, float(value), PASS if value >= limit else FAIL, tolerance=float(limit),
                   note=note)

    @classmethod
    def bound(cls, name: str, value: float, limit: float, note: str = "") -> "Row":
        """PASS iff ``value <= limit``."""
        return cls(name, float(value), PASS if value <= limit else FAIL, tolerance=float(limit),
                   note=note)

    @classmethod
    def close(cls, name: str, value: float, reference: float, tol: float, note: str = "") -> "Row":
        ok = abs(value - reference) <= tol
        return cls(name, float(value), PASS if ok else FAIL, float(reference), tolerance=float(tol),
                   note=note)

    @classmethod
    def statistical(cls, name: str, value: float, reference: float, std_err: float,
                    tol_disc: float = 0.0, effect_floor: float = 0.1, note: str = "") -> "Row":
        """``|value - reference| <= 3 SE + tol_disc``.

        UNDERPOWERED when ``3 SE`` exceeds ``effect_floor`` times the size of
        the quantity compared, whatever the difference turned out to be.
        """
        tol = 3.0 * std_err + tol_disc
        scale = max(abs(reference), abs(value))
        if not math.isfinite(std_err) or 3.0 * std_err > effect_floor * scale:
            verdict = UNDERPOWERED
        else:
            verdict = PASS if abs(value - reference) <= tol else FAIL
        return cls(name, float(value), verdict, float(reference), float(std_err), float(tol), note)


@dataclass
class RunReport:
    experiment: str
    config_hash: str
    config: dict
    rows: list[Row] = field(default_factory=list)
    # everything time-dependent lives here so the rest is reproducible bytewise
    wall_clock: dict = field(default_factory=dict)

    def add(self, row: Row) -> Row:
        self.rows.append(row)
        return row

    def row(self, name: str) -> Row:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(r.verdict in (PASS, INFO) for r in self.rows)

    @property
    def failed(self) -> list[Row]:
        return [r for r in self.rows if r.verdict == FAIL]

    def to_dict(self, with_clock: bool = True) -> dict:
        d = {"experiment": self.experiment, "config_hash": self.config_hash,
             "config": self.config, "rows": [asdict(r) for r in self.rows],
             "passed": self.passed}
        if with_clock:
            d["wall_clock"] = self.wall_clock
        return d

    def to_json(self, with_clock: bool = True) -> str:
        return json.dumps(self.to_dict(with_clock), indent=2, sort_keys=True)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        p = out / "report.json"
        p.write_text(self.to_json() + "\n")
        return p

    def summary(self) -> str:
        lines = [f"[{self.experiment}] config {self.config_hash[:12]}"]
        for r in self.rows:
            ref = "" if r.reference is None else f" ref={r.reference:.6g}"
            se = "" if r.std_err is None else f" se={r.std_err:.3g}"
            tol = "" if r.tolerance is None else f" tol={r.tolerance:.3g}"
            lines.append(f"  {r.verdict:<12} {r.name}: {r.value:.6g}{ref}{se}{tol}"
                         + (f"  ({r.note})" if r.note else ""))
        return "\n".join(lines)
