"""Command-line interface: ``qgtlab <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.  Errors
are written to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import model
from .errors import ConfigError, NumericalError, QGTLabError
from .geometry import (
    CurvatureGrid,
    MetricGrid,
    chern_number_estimate,
    chern_plaquette,
    euler_characteristic_estimate,
    euler_trs_reduced_estimate,
    sphere_grid,
    torus_grid,
)
from .oracle import bloch_qgt, metric_overlap_fd, qgt_spectral
from .protocols import drive_metric, drive_population, quench_metric, resonance_frequency, ShotModel
from .units import CONVENTIONS

SELFTEST_TOL = 1e-5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _common() -> argparse.ArgumentParser:
    # SUPPRESS keeps subcommand parsers from overwriting values given before the command
    p = _Parser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON scenario config")
    p.add_argument("--out", default=S, help="output directory")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--threads", default=S, help="worker count or 'auto' (default $QGTLAB_THREADS or 1)")
    p.add_argument("--omega-convention", choices=CONVENTIONS, default=S)
    p.add_argument("--format", choices=ex.FORMATS, default=S)
    p.add_argument("--drive-normalization", choices=("per-omega", "at-gap"), default=S)
    p.add_argument("--shots", type=int, default=S, help="finite shots per probability (default exact)")
    return p


def _family_args() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--family", choices=("sphere", "trs"), default="sphere")
    p.add_argument("--h", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--band", choices=model.BANDS, default="ground")
    return p


def _point_args() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--point", type=float, nargs=2, metavar=("L1", "L2"),
                   default=[math.pi / 2, 0.0])
    return p


def build_parser() -> argparse.ArgumentParser:
    common, fam, pt = _common(), _family_args(), _point_args()
    parser = _Parser(prog="qgtlab", parents=[common],
                     description="Virtual measurements of the quantum geometric tensor.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("oracle", parents=[common, fam, pt], help="reference QGT by three routes")

    q = sub.add_parser("quench", parents=[common, fam, pt], help="metric from sudden quenches")
    q.add_argument("--delta", type=float, default=None, help="quench step (rad)")
    q.add_argument("--ramp-ns", type=float, default=None)
    q.add_argument("--mode", choices=("finite_ramp", "instantaneous"), default=None)

    d = sub.add_parser("drive", parents=[common, fam, pt], help="metric from periodic drives")
    d.add_argument("--omega-count", type=int, default=None)
    d.add_argument("--t-meas-ns", type=float, default=None)

    b = sub.add_parser("berry", parents=[common, fam], help="Chern number from ramp responses")
    b.add_argument("--n1", type=int, default=24)
    b.add_argument("--n2", type=int, default=8)
    b.add_argument("--velocity", type=float, default=None)

    sub.add_parser("invariants", parents=[common, fam], help="oracle Euler characteristic and Chern number")

    r = sub.add_parser("reproduce", parents=[common], help="write a figure dataset")
    r.add_argument("target", choices=sorted(ex.ALIASES))
    r.add_argument("--reduced", action="store_true", help="use the small test grids")

    st = sub.add_parser("selftest", parents=[common], help="oracle three-route agreement")
    st.add_argument("--points", type=int, default=200)
    return parser


def _opt(args, name, default=None):
    return getattr(args, name, default)


def _load_config(args) -> dict:
    path = _opt(args, "config")
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _global_overrides(args) -> dict:
    out = {}
    for flag, key in (("seed", "seed"), ("threads", "threads"), ("omega_convention", "omega_convention"),
                      ("shots", "shots")):
        if _opt(args, flag) is not None:
            out[key] = _opt(args, flag)
    return out


def _scenario(args, name: str, reduced: bool = False) -> ex.Scenario:
    data = _load_config(args)
    data.update(_global_overrides(args))
    if name != "custom" or "name" not in data:
        data["name"] = name
    out = dict(data.get("output", {}))
    if _opt(args, "out") is not None:
        out["dir"] = args.out
    if _opt(args, "format") is not None:
        out["format"] = args.format
    if out:
        data["output"] = out
    norm = _opt(args, "drive_normalization")
    if norm is not None:
        proto = data.setdefault("protocol", {})
        proto.setdefault("drive", {})["normalization"] = norm
    return ex.Scenario.from_dict(data, reduced)


def _point_scenario(args) -> ex.Scenario:
    s = _scenario(args, "custom")
    if _opt(args, "config") is None or "family" not in _load_config(args):
        s.family = {"kind": "trs_band" if args.family == "trs" else "bloch_sphere",
                    "h": args.h, "alpha": args.alpha}
    s.bands = [args.band]
    return s


def _emit(args, name: str, payload: dict) -> None:
    payload = ex._jsonable(payload)
    fmt = _opt(args, "format", "json")
    if fmt == "csv":
        flat = {k: v for k, v in payload.items() if not isinstance(v, (dict, list))}
        text = ",".join(flat) + "\n" + ",".join(ex._fmt(v) for v in flat.values()) + "\n"
    else:
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    out = _opt(args, "out")
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / f"{name}.{fmt}").write_text(text)


def cmd_oracle(args) -> int:
    s = _point_scenario(args)
    family, band = ex.build_family(s.family), s.bands[0]
    l1, l2 = args.point
    spec = qgt_spectral(family, l1, l2, band)
    blo = bloch_qgt(family, l1, l2, band)
    g11, g22, g12 = metric_overlap_fd(family, l1, l2, band)
    _emit(args, "oracle", {
        "point": [l1, l2], "band": band,
        "spectral": {"g11": spec.g11, "g22": spec.g22, "g12": spec.g12, "f12": spec.f12},
        "bloch": {"g11": blo.g11, "g22": blo.g22, "g12": blo.g12, "f12": blo.f12},
        "overlap_fd": {"g11": g11, "g22": g22, "g12": g12},
        "g11": spec.g11, "g22": spec.g22, "g12": spec.g12, "f12": spec.f12,
    })
    return 0


def cmd_quench(args) -> int:
    s = _point_scenario(args)
    qc = dict(s.protocol["quench"])
    for flag, key in (("delta", "delta_lambda"), ("ramp_ns", "ramp_time_ns"), ("mode", "mode")):
        if getattr(args, flag) is not None:
            qc[key] = getattr(args, flag)
    family, band = ex.build_family(s.family), s.bands[0]
    cfg = ex.quench_config(qc, band, s.omega_convention)
    shots = ShotModel(s.shots, s.seed)
    q = quench_metric(family, args.point[0], args.point[1], cfg, shots)
    ref = qgt_spectral(family, *args.point, band)
    _emit(args, "quench", {
        "point": list(args.point), "band": band, "delta_lambda": cfg.delta_lambda,
        "ramp_time": cfg.ramp_time, "mode": cfg.mode,
        "g11": q.g11, "g22": q.g22, "g12": q.g12, "p11": q.p11, "p22": q.p22, "p12": q.p12,
        "g11_oracle": ref.g11, "g22_oracle": ref.g22, "g12_oracle": ref.g12,
    })
    return 0


def cmd_drive(args) -> int:
    s = _point_scenario(args)
    dc = dict(s.protocol["drive"])
    if args.omega_count is not None:
        dc["omega_count"] = args.omega_count
    if args.t_meas_ns is not None:
        dc["t_meas_ns"] = args.t_meas_ns
    family, band = ex.build_family(s.family), s.bands[0]
    cfg = ex.drive_config(dc, band, s.omega_convention)
    d = drive_metric(family, args.point[0], args.point[1], cfg, ShotModel(s.shots, s.seed))
    n_plus = drive_population(family, args.point[0], args.point[1], cfg, (1.0, 0.0))[0]
    ref = qgt_spectral(family, *args.point, band)
    _emit(args, "drive", {
        "point": list(args.point), "band": band, "normalization": cfg.normalization,
        "g11": d.g11, "g22": d.g22, "g12": d.g12,
        "g11_oracle": ref.g11, "g22_oracle": ref.g22, "g12_oracle": ref.g12,
        "ridge_omega": resonance_frequency(n_plus, cfg.omegas),
        "gap": float(np.linalg.norm(family.control(*args.point))),
    })
    return 0


def cmd_berry(args) -> int:
    s = _point_scenario(args)
    bc = dict(s.protocol["berry"])
    if args.velocity is not None:
        bc["velocity"] = args.velocity
    family, band = ex.build_family(s.family), s.bands[0]
    spec = (sphere_grid if args.family == "sphere" else torus_grid)(args.n1, args.n2)
    cg, exc = ex.berry_grid(s, family, spec, band, bc)
    c = chern_number_estimate(cg)
    _emit(args, "berry", {"family": args.family, "band": band, "chern": c.value,
                          "max_excitation": exc, "grid": spec.to_dict()})
    return 0


def invariants(family_name: str, h: float = 0.0, alpha: float = 0.5, band: str = "ground") -> dict:
    """Oracle Euler characteristic and Chern numbers of a built-in family."""
    if family_name == "sphere":
        family = model.bloch_sphere()
        spec = sphere_grid(200, 200)
        L1, L2 = spec.mesh()
        q = qgt_spectral(family, L1, L2, band)
        chi = euler_characteristic_estimate(MetricGrid(spec, q.g11, q.g12, q.g22))
        flags = list(chi.flags)
    else:
        family = model.trs_band(h, alpha)
        kx = torus_grid(256, 2).axis1.nodes
        chi = euler_trs_reduced_estimate(h, alpha, kx)
        flags = list(chi.flags)
        spec = torus_grid(64, 64)
        L1, L2 = spec.mesh()
        q = qgt_spectral(family, L1, L2, band)
    chern = chern_number_estimate(CurvatureGrid(spec, q.f12))
    n = 24
    plaq_spec = sphere_grid(n, n) if family_name == "sphere" else torus_grid(n, n)
    return {
        "family": family_name, "band": band, "h": h if family_name == "trs" else None,
        "alpha": alpha if family_name == "trs" else None,
        "chi": chi.value, "chern": chern.value,
        "chern_plaquette": chern_plaquette(family, plaq_spec, band), "flags": flags,
    }


def cmd_invariants(args) -> int:
    _emit(args, "invariants", invariants(args.family, args.h, args.alpha, args.band))
    return 0


def cmd_reproduce(args) -> int:
    s = _scenario(args, ex.ALIASES[args.target], reduced=args.reduced)
    result = ex.run_scenario(s)
    paths = ex.write_outputs(result)
    sys.stdout.write(json.dumps({"written": [str(p) for p in paths],
                                 "summary": result.summary["results"]}, indent=2, sort_keys=True) + "\n")
    return 0


def selftest(points: int = 200, seed: int = 0) -> dict:
    """Largest componentwise disagreement between the three oracle routes."""
    rng = np.random.default_rng(seed)
    report = {}
    for name in ("sphere", "trs"):
        for band in model.BANDS:
            if name == "sphere":
                fam = model.bloch_sphere()
                l1 = rng.uniform(0.1, math.pi - 0.1, points)
                l2 = rng.uniform(0, 2 * math.pi, points)
            else:
                fam = model.trs_band(float(rng.choice([-1.5, -0.5, 0.0, 0.5, 1.5])))
                l1 = rng.uniform(0, 2 * math.pi, points)
                l2 = rng.uniform(0, 2 * math.pi, points)
            s = qgt_spectral(fam, l1, l2, band)
            b = bloch_qgt(fam, l1, l2, band)
            g11, g22, g12 = metric_overlap_fd(fam, l1, l2, band)
            diff = max(
                float(np.max(np.abs(x - y)))
                for x, y in ((s.g11, b.g11), (s.g22, b.g22), (s.g12, b.g12), (s.f12, b.f12),
                             (s.g11, g11), (s.g22, g22), (s.g12, g12))
            )
            report[f"{name}/{band}"] = diff
    return report


def cmd_selftest(args) -> int:
    report = selftest(args.points, _opt(args, "seed", 0))
    worst = max(report.values())
    ok = worst <= SELFTEST_TOL
    _emit(args, "selftest", {"max_abs_difference": report, "tolerance": SELFTEST_TOL, "passed": ok})
    if not ok:
        raise NumericalError(f"oracle routes disagree by {worst:.3g}", report=report)
    return 0


COMMANDS = {
    "oracle": cmd_oracle, "quench": cmd_quench, "drive": cmd_drive, "berry": cmd_berry,
    "invariants": cmd_invariants, "reproduce": cmd_reproduce, "selftest": cmd_selftest,
}


def _fail(exc: QGTLabError, code: int) -> int:
    sys.stderr.write(json.dumps(ex._jsonable(exc.to_dict()), sort_keys=True, default=str) + "\n")
    return code


def cli_main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail(exc, 2)
    except NumericalError as exc:
        return _fail(exc, 3)
    except QGTLabError as exc:
        return _fail(exc, 3)


def main() -> None:
    sys.exit(cli_main())
