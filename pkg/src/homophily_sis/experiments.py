"""Parameter sweeps, config handling and CSV/JSON output."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np
import yaml
from scipy.optimize import minimize_scalar

from . import __version__
from .core import ModelParams
from .linearized import LinearizedSystem, convergence_rate, cumulative_infection
from .sir import solve_final_size
from .steady_state import solve_steady_state
from .vaccination import (VaccinationParams, enumerate_peer_equilibria, solve_mixed_equilibrium,
                          solve_rational_equilibrium, welfare)

CONFIG_DIR_ENV = "HOMOPHILY_SIS_CONFIG_DIR"

MODEL_FIELDS = ("q", "h", "mu", "x_a", "x_v", "r")
VAX_FIELDS = ("k", "d", "b")

# output group -> columns, in the order they appear in CSV files
OUTPUT_COLUMNS = {
    "rho_ss": ("rho_a", "rho_v", "rho"),
    "ci": ("ci_a", "ci_v", "ci"),
    "cr": ("cr",),
    "vaccination": ("x_a_star", "x_v_star", "n_equilibria"),
    "welfare": ("welfare", "welfare_congestion"),
    "sir_ci": ("sir_ci_a", "sir_ci_v", "sir_ci"),
}
OUTPUT_ORDER = tuple(OUTPUT_COLUMNS)
RESIDUAL_COLUMNS = {"ss": "residual_ss", "vax": "residual_vax", "sir": "residual_sir"}
RESIDUAL_LIMITS = {"residual_ss": 1e-10, "residual_vax": 1e-9, "residual_sir": 1e-10}

DEFAULTS = {
    "params": {"q": 0.5, "h": 0.0, "mu": 0.2, "x_a": 0.2, "x_v": 0.4, "r": 0.1},
    "vaccination": {"k": 0.5, "d": 0.05, "b": 0.0},
    "model": "exogenous",
    "mixed_use_theta": False,
    "outputs": ["rho_ss", "ci", "cr"],
    "deviation": 1.0,
    "sir_seed": 0.0,
    "seed": 0,
    "workers": 1,
    "stochastic": {"agents": 100_000, "horizon": 200.0, "replicates": 10},
}


class ConfigError(ValueError):
    pass


def load_schema() -> dict:
    text = resources.files("homophily_sis").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def resolve_config_path(path: str | os.PathLike) -> Path:
    """Relative paths that do not exist are looked up in ``$HOMOPHILY_SIS_CONFIG_DIR``."""
    p = Path(path)
    if p.is_absolute() or p.exists():
        return p
    base = os.environ.get(CONFIG_DIR_ENV)
    if base and (Path(base) / p).exists():
        return Path(base) / p
    raise ConfigError(f"config file not found: {path}")


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def validate_config(raw: dict) -> dict:
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    return _merge(DEFAULTS, raw)


def load_config(path: str | os.PathLike | None = None, overrides: Optional[dict] = None) -> dict:
    raw = {}
    if path is not None:
        p = resolve_config_path(path)
        try:
            raw = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
    if overrides:
        raw = _merge(raw, overrides)
    return validate_config(raw)


@dataclass(frozen=True)
class SweepSpec:
    base: ModelParams
    parameter: str
    count: int
    lo: float
    hi: float
    outputs: Tuple[str, ...] = ("rho_ss", "ci", "cr")
    vax: Optional[VaccinationParams] = None
    model: str = "exogenous"
    mixed_use_theta: bool = False
    deviation: float = 1.0
    sir_seed: float = 0.0
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.parameter not in MODEL_FIELDS + VAX_FIELDS:
            raise ValueError(f"cannot sweep {self.parameter!r}")
        if self.count < 0:
            raise ValueError("count must be nonnegative")
        if self.count > 1 and not self.hi > self.lo:
            raise ValueError("grid must be strictly increasing (max > min)")
        unknown = [o for o in self.outputs if o not in OUTPUT_COLUMNS]
        if unknown:
            raise ValueError(f"unknown outputs {unknown}")
        if self.model not in ("exogenous", "rational", "peer", "mixed"):
            raise ValueError(f"unknown model {self.model!r}")
        needs_vax = self.model != "exogenous" or "vaccination" in self.outputs or "welfare" in self.outputs
        if needs_vax and self.vax is None:
            raise ValueError("vaccination parameters required for this model/outputs")
        if "vaccination" in self.outputs and self.model == "exogenous":
            raise ValueError("'vaccination' output needs an endogenous model")

    @property
    def grid(self) -> np.ndarray:
        if self.count == 0:
            return np.empty(0)
        if self.count == 1:
            return np.array([self.lo])
        return np.linspace(self.lo, self.hi, self.count)

    @property
    def columns(self) -> List[str]:
        cols = [self.parameter]
        for group in OUTPUT_ORDER:
            if group in self.outputs:
                cols.extend(OUTPUT_COLUMNS[group])
        cols.append(RESIDUAL_COLUMNS["ss"])
        if self.model != "exogenous":
            cols.append(RESIDUAL_COLUMNS["vax"])
        if "sir_ci" in self.outputs:
            cols.append(RESIDUAL_COLUMNS["sir"])
        return cols + ["flag", "error"]

    def to_dict(self) -> dict:
        d = {"base": asdict(self.base), "parameter": self.parameter, "count": self.count,
             "min": self.lo, "max": self.hi, "outputs": list(self.outputs),
             "vaccination": asdict(self.vax) if self.vax else None, "model": self.model,
             "mixed_use_theta": self.mixed_use_theta, "deviation": self.deviation,
             "sir_seed": self.sir_seed, "seed": self.seed}
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_config(cls, cfg: dict) -> "SweepSpec":
        if "sweep" not in cfg:
            raise ConfigError("config has no 'sweep' section")
        sw = cfg["sweep"]
        vax = VaccinationParams(**cfg["vaccination"]) if cfg.get("vaccination") else None
        return cls(base=ModelParams(**cfg["params"]), parameter=sw["parameter"], count=int(sw["count"]),
                   lo=float(sw["min"]), hi=float(sw["max"]), outputs=tuple(cfg["outputs"]), vax=vax,
                   model=cfg["model"], mixed_use_theta=bool(cfg["mixed_use_theta"]),
                   deviation=float(cfg["deviation"]), sir_seed=float(cfg["sir_seed"]),
                   seed=int(cfg["seed"]), workers=int(cfg.get("workers", 1)))


@dataclass
class SweepResult:
    columns: List[str]
    rows: List[Dict[str, object]]
    config_hash: str
    version: str = __version__
    generated: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r.get(name) is None else r[name] for r in self.rows], dtype=float)


def _select_peer(eqs):
    inner = [e for e in eqs if e.is_interior]
    if inner:
        return inner[0]
    return max(eqs, key=lambda e: (e.x_v_star, e.x_a_star))


def evaluate_point(spec: SweepSpec, value: float) -> Dict[str, object]:
    """All requested quantities at one grid value; failures are caught and flagged."""
    row: Dict[str, object] = {c: None for c in spec.columns}
    row[spec.parameter] = float(value)
    row["flag"] = 0
    row["error"] = ""
    try:
        params, vax = spec.base, spec.vax
        if spec.parameter in MODEL_FIELDS:
            params = params.replace(**{spec.parameter: float(value)})
        else:
            vax = VaccinationParams(**{**asdict(vax), spec.parameter: float(value)})

        if spec.model == "rational":
            eq = solve_rational_equilibrium(params, vax)
            n_eq = 1
        elif spec.model == "peer":
            eqs = enumerate_peer_equilibria(params.q, params.h, vax.k, vax.d)
            eq, n_eq = _select_peer(eqs), len(eqs)
        elif spec.model == "mixed":
            eq = solve_mixed_equilibrium(params, vax, spec.mixed_use_theta)
            n_eq = 1
        else:
            eq, n_eq = None, None
        if eq is not None:
            params = params.replace(x_a=eq.x_a_star, x_v=eq.x_v_star)
            row["residual_vax"] = eq.residual
            if "vaccination" in spec.outputs:
                row.update(x_a_star=eq.x_a_star, x_v_star=eq.x_v_star, n_equilibria=n_eq)

        ss = solve_steady_state(params)
        row["residual_ss"] = ss.residual
        if "rho_ss" in spec.outputs:
            row.update(rho_a=ss.rho_a, rho_v=ss.rho_v, rho=ss.rho)
        if "ci" in spec.outputs or "cr" in spec.outputs:
            if ss.is_interior:
                sys = LinearizedSystem.at(ss)
                if "ci" in spec.outputs:
                    ci = cumulative_infection(sys, spec.deviation)
                    row.update(ci_a=ci.ci_a, ci_v=ci.ci_v, ci=ci.ci_total)
                if "cr" in spec.outputs:
                    row["cr"] = convergence_rate(sys)
            else:
                row["error"] = "disease-free steady state: CI and CR undefined"
                row["flag"] = 1
        if "welfare" in spec.outputs:
            w = welfare(ss, vax, spec.deviation)
            row.update(welfare=w.W, welfare_congestion=w.W_congestion)
        if "sir_ci" in spec.outputs:
            fs = solve_final_size(params, seed=spec.sir_seed)
            row.update(sir_ci_a=fs.CI_a, sir_ci_v=fs.CI_v, sir_ci=fs.CI_total,
                       residual_sir=float(max(abs(fs.residuals[0]), abs(fs.residuals[1]))))
    except Exception as exc:  # noqa: BLE001 - a failed point must not abort the sweep
        row["flag"] = 1
        row["error"] = f"{type(exc).__name__}: {exc}"
    for col, limit in RESIDUAL_LIMITS.items():
        val = row.get(col)
        if val is not None and not (abs(val) <= limit):
            row["flag"] = 1
            row["error"] = (row["error"] + "; " if row["error"] else "") + f"{col} above {limit:g}"
    for col, val in row.items():
        if isinstance(val, float) and not math.isfinite(val):
            row[col] = None
            row["flag"] = 1
    return row


def _evaluate_star(args):
    return evaluate_point(*args)


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Evaluate every grid point independently; rows come back in grid order."""
    jobs = [(spec, float(v)) for v in spec.grid]
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(_evaluate_star, jobs))
    else:
        rows = [evaluate_point(*j) for j in jobs]
    return SweepResult(spec.columns, rows, spec.config_hash())


# --- shape analysis -------------------------------------------------------

def interior_extrema(values: Sequence[float]) -> Tuple[List[int], List[int]]:
    """Indices of strict interior local maxima and minima of a sampled curve."""
    v = np.asarray(values, dtype=float)
    maxima, minima = [], []
    for i in range(1, len(v) - 1):
        if v[i] > v[i - 1] and v[i] >= v[i + 1]:
            maxima.append(i)
        elif v[i] < v[i - 1] and v[i] <= v[i + 1]:
            minima.append(i)
    return maxima, minima


def golden_refine(func, grid: np.ndarray, index: int, maximize: bool = True, tol: float = 1e-10) -> Tuple[float, float]:
    """Golden-section search inside the grid bracket around ``index``."""
    sign = -1.0 if maximize else 1.0
    bracket = (grid[index - 1], grid[index], grid[index + 1])
    res = minimize_scalar(lambda s: sign * func(s), bracket=bracket, method="golden", tol=tol)
    return float(res.x), float(sign * res.fun)


def locate_extremum(spec: SweepSpec, column: str, maximize: bool = True) -> Optional[Tuple[float, float]]:
    """Sweep, find the single interior extremum of ``column`` and refine it; None if absent."""
    result = run_sweep(spec)
    vals = result.column(column)
    maxima, minima = interior_extrema(vals)
    found = maxima if maximize else minima
    if len(found) != 1:
        return None

    def f(s):
        row = evaluate_point(spec, s)
        v = row.get(column)
        return float("nan") if v is None else float(v)
    return golden_refine(f, spec.grid, found[0], maximize)


# --- output ---------------------------------------------------------------

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return "" if not math.isfinite(value) else repr(value)
    text = str(value)
    return text.replace(",", ";").replace("\n", " ").replace("\r", " ").replace('"', "'")


def provenance_lines(result: SweepResult) -> List[str]:
    return [f"# homophily_sis {result.version}",
            f"# config_hash {result.config_hash}",
            f"# generated {result.generated}"]


def to_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    for line in provenance_lines(result):
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(result.columns)
    for row in result.rows:
        writer.writerow([_cell(row.get(c)) for c in result.columns])
    return buf.getvalue()


def to_json(result: SweepResult) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        return v
    rows = [{c: clean(r.get(c)) for c in result.columns} for r in result.rows]
    return json.dumps(rows, indent=1)


def emit(result: SweepResult, fmt: str, path: str | os.PathLike) -> Path:
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    text = to_csv(result) if fmt == "csv" else to_json(result)
    p = Path(path)
    try:
        p.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {p}: {exc}") from exc
    return p


def read_csv(path: str | os.PathLike) -> Tuple[List[str], List[Dict[str, Optional[float]]]]:
    """Parse a file written by :func:`emit`; numeric cells become floats, empty cells None."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    rows = []
    for rec in reader:
        row = {}
        for c, cell in zip(header, rec):
            if c == "error":
                row[c] = cell
            elif cell == "":
                row[c] = None
            else:
                row[c] = float(cell)
        rows.append(row)
    return header, rows
