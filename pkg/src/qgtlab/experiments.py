"""Scenario runner: protocol sweeps, invariants and figure datasets.

A :class:`Scenario` is a plain nested-dict configuration (the JSON config
file mirrors it).  :func:`run_scenario` executes it and returns result tables
plus a summary block; :func:`write_outputs` serializes them.

Tables are deterministic functions of the scenario: thread count and output
location are excluded from the config hash, and wall-clock data goes into a
``run_info.json`` sidecar only.
"""

from __future__ import annotations

import copy
import datetime
import functools
import hashlib
import json
import math
import os
import platform
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import model
from .errors import ConfigError, DegeneratePoint, QGTLabError
from .geometry import (
    CurvatureGrid,
    GridSpec,
    MetricGrid,
    chern_number_estimate,
    chern_plaquette,
    euler_characteristic_estimate,
    euler_trs_reduced_estimate,
    sphere_grid,
    torus_grid,
)
from .oracle import qgt_spectral, trs_sqrt_det_g_closed_form
from .protocols import (
    DriveConfig,
    QuenchConfig,
    RampConfig,
    ShotModel,
    berry_response,
    drive_metric,
    drive_population,
    gap_scaled_duration,
    quench_metric,
    resonance_frequency,
)
from .sweep import map_points, resolve_threads, run_tasks
from .units import CONVENTIONS, ns_to_internal

__version__ = "0.1.0"

SCENARIOS = ("fig2_quench_sphere", "fig3_drive_sphere", "fig4_trs_transition", "custom")
ALIASES = {"fig2": "fig2_quench_sphere", "fig3": "fig3_drive_sphere", "fig4": "fig4_trs_transition"}
FORMATS = ("csv", "json")

METRIC_COLUMNS = ("g11", "g22", "g12", "g11_oracle", "g22_oracle", "g12_oracle")
SCHEMAS = {
    "fig2": ("band", "theta", "g_thth", "g_phph", "g_thph",
             "g_thth_oracle", "g_phph_oracle", "g_thph_oracle",
             "g_thth_se", "g_phph_se", "g_thph_se"),
    "fig3_heatmap": ("omega", "t", "n_plus"),
    "fig3_metric": ("theta", "g_thth", "g_phph", "g_thph",
                    "g_thth_oracle", "g_phph_oracle", "g_thph_oracle"),
    "fig4_surface": ("h", "kx", "ky", "sqrt_det_g", "sqrt_det_g_oracle"),
    "fig4_invariants": ("h", "chi_oracle", "chi_quench", "chi_quench_err",
                        "chern_oracle", "chern_berry", "chern_berry_err",
                        "chern_plaquette", "flags"),
    "custom": ("l1", "l2", "g11", "g22", "g12", "f12"),
}

_FAMILY = {"kind": "bloch_sphere", "h": 0.0, "alpha": 0.5}
_QUENCH = {"delta_lambda": math.pi / 16, "ramp_time_ns": 5.0, "mode": "finite_ramp", "dt": None}
_DRIVE = {
    "relative_amplitude": 0.1, "omega_min": 0.5, "omega_max": 3.5, "omega_count": 121,
    "t_meas_ns": 200.0, "normalization": "per-omega", "rate_mode": "final", "dt": None,
}
_BERRY = {"velocity": 0.02, "kappa": 0.1, "window_periods": 1.0, "phase_step": 0.05}

DEFAULTS = {
    "fig2_quench_sphere": {
        "family": dict(_FAMILY),
        "protocol": {"quench": dict(_QUENCH), "berry": dict(_BERRY)},
        "grid": {"theta_steps": 20, "n1": 20, "n2": 8, "berry_n1": 24, "berry_n2": 8},
        "bands": ["ground", "excited"],
    },
    "fig3_drive_sphere": {
        "family": dict(_FAMILY),
        "protocol": {"drive": dict(_DRIVE), "grid_omega_count": 61, "heatmap_times": 41,
                     "heatmap_theta": math.pi / 2},
        "grid": {"theta_steps": 20, "n1": 16, "n2": 8},
        "bands": ["ground"],
    },
    "fig4_trs_transition": {
        "family": {"kind": "trs_band", "h": 0.0, "alpha": 0.5},
        "protocol": {"quench": dict(_QUENCH, delta_lambda=math.pi / 64), "berry": dict(_BERRY)},
        "grid": {"h_values": [round(-2 + 0.25 * i, 2) for i in range(17)],
                 "n_kx": 128, "n_ky": 4, "oracle_n_kx": 256,
                 "berry_n1": 32, "berry_n2": 8, "plaquette_n": 24},
        "bands": ["ground"],
    },
    "custom": {
        "family": dict(_FAMILY),
        "protocol": {"name": "oracle", "quench": dict(_QUENCH), "drive": dict(_DRIVE),
                     "berry": dict(_BERRY)},
        "grid": {"type": "sphere", "n1": 32, "n2": 16},
        "bands": ["ground"],
    },
}

# smaller grids for quick runs and golden files
REDUCED = {
    "fig2_quench_sphere": {"grid": {"theta_steps": 10, "n1": 16, "n2": 8,
                                    "berry_n1": 12, "berry_n2": 4}},
    "fig3_drive_sphere": {"protocol": {"drive": {"omega_count": 41}, "grid_omega_count": 31,
                                       "heatmap_times": 11},
                          "grid": {"theta_steps": 6, "n1": 8, "n2": 8}},
    "fig4_trs_transition": {"grid": {"h_values": [0.0, 0.5, 1.0, 1.5, 2.0], "n_kx": 32, "n_ky": 2,
                                     "oracle_n_kx": 64, "berry_n1": 16, "berry_n2": 4,
                                     "plaquette_n": 12}},
    "custom": {"grid": {"n1": 16, "n2": 8}},
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in out:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(out[key], dict) and isinstance(val, dict):
            out[key] = _merge(out[key], val, path + key + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class Scenario:
    name: str
    family: dict = field(default_factory=dict)
    protocol: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    bands: list = field(default_factory=lambda: ["ground"])
    output: dict = field(default_factory=lambda: {"dir": "out", "format": "csv"})
    seed: int = 0
    shots: Optional[int] = None
    omega_convention: str = "angular"
    threads: Any = None
    chunk_size: int = 512

    @classmethod
    def from_dict(cls, data: dict, reduced: bool = False) -> "Scenario":
        data = dict(data)
        name = ALIASES.get(data.get("name", ""), data.get("name"))
        if name not in SCENARIOS:
            raise ConfigError(f"unknown scenario {data.get('name')!r}; expected one of {SCENARIOS}")
        body = copy.deepcopy(DEFAULTS[name])
        if reduced:
            body = _merge(body, REDUCED[name])
        top = {k: data.pop(k) for k in list(data) if k in body}
        body = _merge(body, top)
        data.pop("name", None)
        allowed = {"output", "seed", "shots", "omega_convention", "threads", "chunk_size"}
        extra = set(data) - allowed
        if extra:
            raise ConfigError(f"unknown scenario fields {sorted(extra)}")
        output = _merge({"dir": "out", "format": "csv"}, data.pop("output", {}), "output.")
        s = cls(name=name, output=output, **body, **data)
        s.validate()
        return s

    @classmethod
    def load(cls, path, reduced: bool = False) -> "Scenario":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data, reduced)

    def validate(self):
        if self.omega_convention not in CONVENTIONS:
            raise ConfigError(f"unknown omega convention {self.omega_convention!r}")
        if self.output.get("format") not in FORMATS:
            raise ConfigError(f"unknown output format {self.output.get('format')!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.shots is not None and (not isinstance(self.shots, int) or self.shots < 1):
            raise ConfigError("shots must be a positive integer or null")
        if not self.bands:
            raise ConfigError("bands must not be empty")
        for band in self.bands:
            model.check_band(band)
        if self.chunk_size < 1:
            raise ConfigError("chunk_size must be >= 1")
        resolve_threads(self.threads)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "family": self.family, "protocol": self.protocol,
            "grid": self.grid, "bands": list(self.bands), "output": self.output,
            "seed": self.seed, "shots": self.shots, "omega_convention": self.omega_convention,
            "threads": self.threads, "chunk_size": self.chunk_size,
        }

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("threads")
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_scenario(name: str, overrides: Optional[dict] = None, reduced: bool = False) -> Scenario:
    data = dict(overrides or {})
    data["name"] = name
    return Scenario.from_dict(data, reduced)


@functools.lru_cache(maxsize=1)
def code_version() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=10,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else format(x, ".12g")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer, int)) and not isinstance(x, bool):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if not math.isfinite(x) else float(format(x, ".12g"))
    return x


@dataclass
class ResultTable:
    name: str
    columns: tuple
    rows: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for r in self.rows:
            if len(r) != len(self.columns):
                raise ConfigError(f"row of length {len(r)} does not match {self.name} schema")

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        lines = [f"# {k}: {v}" for k, v in self.metadata.items()]
        lines.append(",".join(self.columns))
        lines += [",".join(_fmt(v) for v in r) for r in self.rows]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        body = {
            "metadata": self.metadata, "columns": list(self.columns),
            "rows": [[_jsonable(v) if not isinstance(v, str) else v for v in r] for r in self.rows],
        }
        return json.dumps(body, indent=1, sort_keys=True) + "\n"


def read_csv_table(path) -> ResultTable:
    meta, rows, columns = {}, [], None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                k, _, v = line[2:].partition(": ")
                meta[k] = v
            elif columns is None:
                columns = tuple(line.split(","))
            else:
                rows.append(line.split(","))
    return ResultTable(Path(path).stem, columns, rows, meta)


@dataclass
class RunResult:
    scenario: Scenario
    tables: dict
    summary: dict


# ---------------------------------------------------------------- helpers

def build_family(cfg: dict) -> model.HamiltonianFamily:
    kind = cfg.get("kind")
    if kind in ("bloch_sphere", "sphere"):
        return model.bloch_sphere()
    if kind in ("trs_band", "trs"):
        return model.trs_band(float(cfg.get("h", 0.0)), float(cfg.get("alpha", 0.5)))
    raise ConfigError(f"family kind {kind!r} cannot be built from a config "
                      "(custom maps are available through the Python API)")


def quench_config(cfg: dict, band: str, convention: str) -> QuenchConfig:
    return QuenchConfig(
        delta_lambda=float(cfg["delta_lambda"]),
        ramp_time=ns_to_internal(float(cfg["ramp_time_ns"]), convention),
        mode=cfg["mode"], band=band, dt=cfg.get("dt"),
    )


def drive_config(cfg: dict, band: str, convention: str, **changes) -> DriveConfig:
    kw = dict(
        relative_amplitude=float(cfg["relative_amplitude"]), omega_min=float(cfg["omega_min"]),
        omega_max=float(cfg["omega_max"]), omega_count=int(cfg["omega_count"]),
        t_meas=ns_to_internal(float(cfg["t_meas_ns"]), convention),
        normalization=cfg["normalization"], rate_mode=cfg["rate_mode"], band=band,
        dt=cfg.get("dt"),
    )
    kw.update(changes)
    return DriveConfig(**kw)


def _binomial_se(p, shots, d2):
    if shots is None:
        return np.zeros_like(p)
    return np.sqrt(np.clip(p * (1 - p), 0, None) / shots) / d2


def _task_rng(s: Scenario, tag: int, index: int) -> np.random.Generator:
    return np.random.default_rng([s.seed, tag, index])


def measure_quench(s: Scenario, family, cfg: QuenchConfig, l1, l2, tag: int = 0):
    """Quench metric over arbitrary point arrays; returns g11, g22, g12 and standard errors."""
    shots = ShotModel(s.shots, s.seed)
    d2 = cfg.delta_lambda ** 2

    def task(a, b, k):
        q = quench_metric(family, a, b, cfg, shots, _task_rng(s, tag, k))
        se11 = _binomial_se(q.p11, s.shots, d2)
        se22 = _binomial_se(q.p22, s.shots, d2)
        se12 = 0.5 * np.sqrt(_binomial_se(q.p12, s.shots, d2) ** 2 + se11 ** 2 + se22 ** 2)
        return q.g11, q.g22, q.g12, se11, se22, se12

    return map_points(task, l1, l2, s.chunk_size, s.threads)


def measure_drive(s: Scenario, family, cfg: DriveConfig, l1, l2, tag: int = 0):
    shots = ShotModel(s.shots, s.seed)

    def task(a, b, k):
        d = drive_metric(family, a, b, cfg, shots, _task_rng(s, tag, k))
        return d.g11, d.g22, d.g12

    return map_points(task, l1, l2, max(1, s.chunk_size // 4), s.threads)


def metric_grid(s: Scenario, family, spec: GridSpec, protocol: str, cfg, tag: int = 0) -> MetricGrid:
    L1, L2 = spec.mesh()
    if protocol == "quench":
        g11, g22, g12 = measure_quench(s, family, cfg, L1, L2, tag)[:3]
    elif protocol == "drive":
        g11, g22, g12 = measure_drive(s, family, cfg, L1, L2, tag)
    else:
        q = qgt_spectral(family, L1, L2, cfg)
        g11, g22, g12 = q.g11, q.g22, q.g12
    return MetricGrid(spec, g11, g12, g22, protocol)


def berry_grid(s: Scenario, family, spec: GridSpec, band: str, cfg: dict):
    """Berry curvature on ``spec`` from ramps along axis 1, one per axis-2 node.

    Returns the curvature grid and the largest excited population seen.
    """
    a1 = spec.axis1
    cols = spec.axis2.nodes
    start = (np.full_like(cols, a1.lo), cols)
    end = (np.full_like(cols, a1.hi), cols)
    duration = gap_scaled_duration(family, start, end, float(cfg["kappa"]), float(cfg["velocity"]))
    chunks = [slice(i, min(i + 16, len(cols))) for i in range(0, len(cols), 16)]

    def task(sl):
        ramp = RampConfig(
            (start[0][sl], start[1][sl]), (end[0][sl], end[1][sl]), duration, band=band,
            window_periods=float(cfg["window_periods"]), phase_step=float(cfg["phase_step"]),
        )
        r = berry_response(family, ramp, 1, a1.nodes)
        return r.f12, r.max_excitation

    parts = run_tasks(task, chunks, s.threads)
    f12 = np.concatenate([p[0] for p in parts], axis=1)
    return CurvatureGrid(spec, f12, "berry_response"), max(p[1] for p in parts)


def _coarse_spec(spec: GridSpec) -> Optional[GridSpec]:
    n1, n2 = spec.axis1.n // 2, max(8, spec.axis2.n // 2)
    if n1 < 8 or n2 % 2:
        return None
    if spec.axis1.boundary == "pole":
        return sphere_grid(n1, n2)
    return torus_grid(n1, n2)


def _estimate_dict(est, prefix: str) -> dict:
    return {prefix: est.value, prefix + "_error": est.error_bar, prefix + "_delta": est.refinement_delta}


def _metadata(s: Scenario) -> dict:
    return {
        "qgtlab": __version__,
        "code": code_version(),
        "scenario": s.name,
        "config_sha256": s.config_hash(),
        "omega_convention": s.omega_convention,
        "units": "energy in Omega, time in 1/Omega, angles in rad",
    }


# ---------------------------------------------------------------- scenarios

def _theta_rows(n: int) -> np.ndarray:
    return np.arange(1, n) * math.pi / n


def _run_fig2(s: Scenario) -> tuple:
    family = build_family(s.family)
    g = s.grid
    theta = _theta_rows(int(g["theta_steps"]))
    phi = np.zeros_like(theta)
    spec = sphere_grid(int(g["n1"]), int(g["n2"]))
    coarse = _coarse_spec(spec)
    bspec = sphere_grid(int(g["berry_n1"]), int(g["berry_n2"]))
    bcoarse = sphere_grid(max(2, bspec.axis1.n // 2), max(2, bspec.axis2.n // 2))
    tables, summary = {}, {}
    for bi, band in enumerate(s.bands):
        cfg = quench_config(s.protocol["quench"], band, s.omega_convention)
        g11, g22, g12, se11, se22, se12 = measure_quench(s, family, cfg, theta, phi, tag=10 * bi)
        ref = qgt_spectral(family, theta, phi, band)
        rows = [
            (band, theta[i], g11[i], g22[i], g12[i], ref.g11[i], ref.g22[i], ref.g12[i],
             se11[i], se22[i], se12[i])
            for i in range(len(theta))
        ]
        tables[f"fig2_{band}"] = ResultTable(f"fig2_{band}", SCHEMAS["fig2"], rows)
        err = max(np.max(np.abs(g11 - ref.g11)), np.max(np.abs(g22 - ref.g22)),
                  np.max(np.abs(g12 - ref.g12)))

        mg = metric_grid(s, family, spec, "quench", cfg, tag=10 * bi + 1)
        mc = metric_grid(s, family, coarse, "quench", cfg, tag=10 * bi + 2) if coarse else None
        chi = euler_characteristic_estimate(mg, mc, check=False)
        cg, ex = berry_grid(s, family, bspec, band, s.protocol["berry"])
        cc, ex2 = berry_grid(s, family, bcoarse, band, s.protocol["berry"])
        chern = chern_number_estimate(cg, cc, check=False)
        summary[band] = {
            **_estimate_dict(chi, "chi"), **_estimate_dict(chern, "chern"),
            "max_abs_metric_error": err, "max_excitation": max(ex, ex2),
            "chern_plaquette": chern_plaquette(family, sphere_grid(24, 24), band),
        }
    return tables, summary


def _run_fig3(s: Scenario) -> tuple:
    family = build_family(s.family)
    p, g = s.protocol, s.grid
    band = s.bands[0]
    cfg = drive_config(p["drive"], band, s.omega_convention)
    omegas = cfg.omegas
    th0 = float(p["heatmap_theta"])
    times = np.linspace(0.0, cfg.t_meas, int(p["heatmap_times"]))
    n_plus = drive_population(family, th0, 0.0, cfg, (1.0, 0.0), times)
    rows = [(omegas[j], times[i], n_plus[i, j]) for j in range(len(omegas)) for i in range(len(times))]
    tables = {"fig3_heatmap": ResultTable("fig3_heatmap", SCHEMAS["fig3_heatmap"], rows)}
    ridge = resonance_frequency(n_plus[-1], omegas)
    gap = float(np.linalg.norm(family.control(th0, 0.0)))

    theta = _theta_rows(int(g["theta_steps"]))
    phi = np.zeros_like(theta)
    g11, g22, g12 = measure_drive(s, family, cfg, theta, phi, tag=1)
    ref = qgt_spectral(family, theta, phi, band)
    rows = [(theta[i], g11[i], g22[i], g12[i], ref.g11[i], ref.g22[i], ref.g12[i])
            for i in range(len(theta))]
    tables["fig3_metric"] = ResultTable("fig3_metric", SCHEMAS["fig3_metric"], rows)
    i0 = int(np.argmin(np.abs(theta - th0)))

    gcfg = drive_config(p["drive"], band, s.omega_convention, omega_count=int(p["grid_omega_count"]))
    spec = sphere_grid(int(g["n1"]), int(g["n2"]))
    coarse = _coarse_spec(spec)
    mg = metric_grid(s, family, spec, "drive", gcfg, tag=2)
    mc = metric_grid(s, family, coarse, "drive", gcfg, tag=3) if coarse else None
    chi = euler_characteristic_estimate(mg, mc, check=False)
    summary = {
        band: {**_estimate_dict(chi, "chi"),
               "ridge_omega": ridge, "gap": gap, "ridge_relative_offset": abs(ridge - gap) / gap,
               "g_thth_at_theta0": g11[i0], "g_thph_max_abs": float(np.max(np.abs(g12))),
               "theta0": theta[i0]},
    }
    return tables, summary


def _fig4_point(s: Scenario, h: float, tag: int):
    g = s.grid
    alpha = float(s.family.get("alpha", 0.5))
    family = model.trs_band(h, alpha)
    band = s.bands[0]
    flags = []
    spec = torus_grid(int(g["n_kx"]), int(g["n_ky"]))
    K1, K2 = spec.mesh()
    kx = spec.axis1.nodes
    okx = torus_grid(int(g["oracle_n_kx"]), 2).axis1.nodes
    out = {"h": h, "surface": [], "chi_oracle": None, "chi_quench": None, "chi_quench_err": None,
           "chern_oracle": None, "chern_berry": None, "chern_berry_err": None,
           "chern_plaquette": None, "antisymmetry": None, "max_excitation": None,
           "surface_error": None}
    if abs(abs(h) - 1) < 0.1:
        flags.append("near_transition")
    if abs(h) == 1.0:
        flags.append("gap_closed")
        out["flags"] = flags
        return out

    cfg = quench_config(s.protocol["quench"], band, s.omega_convention)
    g11, g22, g12 = measure_quench(s, family, cfg, K1, K2, tag=tag)[:3]
    root = np.sqrt(np.clip(g11 * g22 - g12 ** 2, 0, None))
    ref = trs_sqrt_det_g_closed_form(h, alpha, K1)
    out["surface"] = [(h, K1[i, j], K2[i, j], root[i, j], ref[i, j])
                      for i in range(spec.shape[0]) for j in range(spec.shape[1])]
    out["surface_error"] = float(np.max(np.abs(root - ref)))
    out["chi_oracle"] = euler_trs_reduced_estimate(h, alpha, okx).value
    chi_q = euler_trs_reduced_estimate(h, alpha, kx, root.mean(axis=1))
    out["chi_quench"], out["chi_quench_err"] = chi_q.value, chi_q.error_bar

    ospec = torus_grid(int(g["oracle_n_kx"]), int(g["oracle_n_kx"]))
    O1, O2 = ospec.mesh()
    out["chern_oracle"] = chern_number_estimate(
        CurvatureGrid(ospec, qgt_spectral(family, O1, O2, band).f12)).value
    bspec = torus_grid(int(g["berry_n1"]), int(g["berry_n2"]))
    bcoarse = torus_grid(bspec.axis1.n // 2, max(2, bspec.axis2.n // 2))
    cg, ex = berry_grid(s, family, bspec, band, s.protocol["berry"])
    cc, ex2 = berry_grid(s, family, bcoarse, band, s.protocol["berry"])
    c = chern_number_estimate(cg, cc, check=False)
    out["chern_berry"], out["chern_berry_err"] = c.value, c.error_bar
    # midpoint nodes are symmetric under k -> -k: index i <-> n-1-i on both axes
    out["antisymmetry"] = float(np.max(np.abs(cg.f12 + cg.f12[::-1, ::-1])))
    out["max_excitation"] = max(ex, ex2)
    n = int(g["plaquette_n"])
    out["chern_plaquette"] = chern_plaquette(family, torus_grid(n, n), band)
    out["flags"] = flags
    return out


def _run_fig4(s: Scenario) -> tuple:
    hs = [float(h) for h in s.grid["h_values"]]
    points = []
    for i, h in enumerate(hs):
        try:
            points.append(_fig4_point(s, h, tag=100 + i))
        except QGTLabError as exc:
            raise exc.with_context(h=h)
    surface = [r for p in points for r in p["surface"]]
    inv_rows = [
        (p["h"], p["chi_oracle"], p["chi_quench"], p["chi_quench_err"], p["chern_oracle"],
         p["chern_berry"], p["chern_berry_err"], p["chern_plaquette"], ";".join(p["flags"]))
        for p in points
    ]
    tables = {
        "fig4_surface": ResultTable("fig4_surface", SCHEMAS["fig4_surface"], surface),
        "fig4_invariants": ResultTable("fig4_invariants", SCHEMAS["fig4_invariants"], inv_rows),
    }
    smooth = [p for p in points if "gap_closed" not in p["flags"]]
    summary = {
        "h": [{k: v for k, v in p.items() if k != "surface"} for p in points],
        "max_surface_error": max((p["surface_error"] for p in smooth
                                  if "near_transition" not in p["flags"]), default=None),
        "max_abs_chern_berry": max((abs(p["chern_berry"]) for p in smooth), default=None),
        "max_antisymmetry": max((p["antisymmetry"] for p in smooth), default=None),
    }
    return tables, summary


def _run_custom(s: Scenario) -> tuple:
    family = build_family(s.family)
    p, g = s.protocol, s.grid
    band = s.bands[0]
    kind = g.get("type", "sphere")
    if kind not in ("sphere", "torus"):
        raise ConfigError(f"unknown grid type {kind!r}")
    make = sphere_grid if kind == "sphere" else torus_grid
    spec = make(int(g["n1"]), int(g["n2"]))
    coarse = _coarse_spec(spec)
    name = p.get("name", "oracle")
    L1, L2 = spec.mesh()
    f12 = np.full(spec.shape, np.nan)
    summary = {}
    if name == "berry":
        cg, ex = berry_grid(s, family, spec, band, p["berry"])
        f12 = cg.f12
        g11 = g22 = g12 = np.full(spec.shape, np.nan)
        summary.update(_estimate_dict(chern_number_estimate(cg), "chern"), max_excitation=ex)
    else:
        if name == "quench":
            cfg = quench_config(p["quench"], band, s.omega_convention)
        elif name == "drive":
            cfg = drive_config(p["drive"], band, s.omega_convention)
        elif name == "oracle":
            cfg = band
            f12 = qgt_spectral(family, L1, L2, band).f12
            summary.update(_estimate_dict(chern_number_estimate(CurvatureGrid(spec, f12)), "chern"))
        else:
            raise ConfigError(f"unknown protocol {name!r}")
        mg = metric_grid(s, family, spec, name, cfg, tag=1)
        mc = metric_grid(s, family, coarse, name, cfg, tag=2) if coarse else None
        g11, g22, g12 = mg.g11, mg.g22, mg.g12
        if kind == "sphere":
            summary.update(_estimate_dict(euler_characteristic_estimate(mg, mc, check=False), "chi"))
    rows = [(L1[i, j], L2[i, j], g11[i, j], g22[i, j], g12[i, j], f12[i, j])
            for i in range(spec.shape[0]) for j in range(spec.shape[1])]
    return {"custom": ResultTable("custom", SCHEMAS["custom"], rows)}, {band: summary}


_RUNNERS = {
    "fig2_quench_sphere": _run_fig2,
    "fig3_drive_sphere": _run_fig3,
    "fig4_trs_transition": _run_fig4,
    "custom": _run_custom,
}


def run_scenario(s: Scenario) -> RunResult:
    s.validate()
    try:
        tables, summary = _RUNNERS[s.name](s)
    except DegeneratePoint as exc:
        raise exc.with_context(scenario=s.name)
    meta = _metadata(s)
    for t in tables.values():
        t.metadata = dict(meta)
    summary = {"scenario": s.name, "metadata": meta, "results": _jsonable(summary)}
    return RunResult(s, tables, summary)


def write_outputs(result: RunResult, out_dir=None, fmt: Optional[str] = None) -> list:
    s = result.scenario
    out = Path(out_dir if out_dir is not None else s.output["dir"])
    fmt = fmt or s.output["format"]
    if fmt not in FORMATS:
        raise ConfigError(f"unknown output format {fmt!r}")
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, table in result.tables.items():
        path = out / f"{name}.{fmt}"
        path.write_text(table.to_csv() if fmt == "csv" else table.to_json())
        paths.append(path)
    path = out / "summary.json"
    path.write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
    paths.append(path)
    info = {
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "threads": resolve_threads(s.threads),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "host": platform.node(),
        "pid": os.getpid(),
    }
    (out / "run_info.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    return paths
