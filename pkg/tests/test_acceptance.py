"""Acceptance criteria 1-10 at full scenario size.

Each test records one PASS/FAIL line, printed in the terminal summary under
"acceptance criteria".
"""

import math
from pathlib import Path

import numpy as np
import pytest

from qgtlab import experiments as ex
from qgtlab import model
from qgtlab.cli import selftest
from qgtlab.geometry import Axis, MetricGrid, euler_characteristic, sphere_grid, torus_grid
from qgtlab.oracle import bloch_sphere_closed_form, qgt_spectral

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def fig2():
    return ex.run_scenario(ex.load_scenario("fig2"))


@pytest.fixture(scope="module")
def fig3():
    return ex.run_scenario(ex.load_scenario("fig3"))


@pytest.fixture(scope="module")
def fig4():
    return ex.run_scenario(ex.load_scenario("fig4"))


def test_c01_oracle_routes_agree(report):
    diffs = selftest(points=200, seed=1)
    worst = max(diffs.values())
    assert report(1, worst <= 1e-5, f"three-route max diff {worst:.2e} (tol 1e-5)")


def test_c02_closed_forms(report):
    rng = np.random.default_rng(2)
    th, ph = rng.uniform(0.01, math.pi - 0.01, 500), rng.uniform(0, 2 * math.pi, 500)
    q = qgt_spectral(model.bloch_sphere(), th, ph)
    ref = bloch_sphere_closed_form(th)
    metric_err = max(np.max(np.abs(q.g11 - ref.g11)), np.max(np.abs(q.g22 - ref.g22)),
                     np.max(np.abs(q.g12)))
    L1, L2 = sphere_grid(64, 64).mesh()
    g = qgt_spectral(model.bloch_sphere(), L1, L2, "excited")
    mono_err = np.max(np.abs(g.f12 - 2 * g.sqrt_det_g))
    ok = metric_err <= 1e-9 and mono_err <= 1e-9
    assert report(2, ok, f"metric err {metric_err:.1e}, |F - 2 sqrt(det g)| {mono_err:.1e} (tol 1e-9)")


def test_c03_quench_reproduction(fig2, report):
    t = fig2.tables["fig2_ground"]
    err = max(
        max(abs(a - b) for a, b in zip(t.column(c), t.column(c + "_oracle")))
        for c in ("g_thth", "g_phph", "g_thph")
    )
    chi = {b: fig2.summary["results"][b]["chi"] for b in ("ground", "excited")}
    ok = err <= 0.015 and all(abs(c - 2) <= 0.1 for c in chi.values())
    detail = (f"max |g - g_oracle| {err:.5f} (tol 0.015); "
              f"chi ground {chi['ground']:.3f}, excited {chi['excited']:.3f} (2 +- 0.1)")
    assert report(3, ok, detail)


def test_c04_drive_reproduction(fig3, report):
    r = fig3.summary["results"]["ground"]
    ok = (r["ridge_relative_offset"] <= 0.05 and abs(r["g_thth_at_theta0"] / 0.25 - 1) <= 0.25
          and abs(r["chi"] / 2 - 1) <= 0.25)
    detail = (f"ridge {r['ridge_omega']:.4f} (gap 1, tol 5%); g_thth(pi/2) {r['g_thth_at_theta0']:.4f} "
              f"(0.25 +- 25%); chi {r['chi']:.3f} (2 +- 25%)")
    assert report(4, ok, detail)


def test_c05_berry_response(fig2, report):
    res = fig2.summary["results"]
    c = {b: res[b]["chern"] for b in ("ground", "excited")}
    exc = max(res[b]["max_excitation"] for b in c)
    ok = all(abs(abs(v) - 1) <= 0.1 for v in c.values()) and exc < 0.1
    detail = f"C ground {c['ground']:.4f}, excited {c['excited']:.4f} (|C| = 1 +- 0.1); max excitation {exc:.1e}"
    assert report(5, ok, detail)


def test_c06_euler_integrator(report):
    spec = sphere_grid(200, 200)
    L1, L2 = spec.mesh()
    q = qgt_spectral(model.bloch_sphere(), L1, L2)
    chi_s = euler_characteristic(MetricGrid(spec, q.g11, q.g12, q.g22))
    flat = torus_grid(64, 64)
    one = np.ones(flat.shape)
    chi_t = euler_characteristic(MetricGrid(flat, one, 0 * one, one))
    ok = abs(chi_s - 2) <= 1e-3 and abs(chi_t) <= 1e-12
    assert report(6, ok, f"sphere chi {chi_s:.6f} (2 +- 1e-3); flat torus {chi_t:.1e} (0 +- 1e-12)")


def test_c07_trs_transition(fig4, report):
    rows = [p for p in fig4.summary["results"]["h"] if "gap_closed" not in p["flags"]]
    worst_o = worst_q = 0.0
    for p in rows:
        target = 4.0 if abs(p["h"]) <= 0.75 else 0.0
        worst_o = max(worst_o, abs(p["chi_oracle"] - target))
        worst_q = max(worst_q, abs(p["chi_quench"] - target))
    c_berry = max(abs(p["chern_berry"]) for p in rows)
    c_oracle = max(abs(p["chern_oracle"]) for p in rows)
    plaq = {p["chern_plaquette"] for p in rows}
    ok = worst_o <= 0.02 and worst_q <= 0.2 and c_berry <= 0.05 and c_oracle <= 0.05 and plaq == {0}
    detail = (f"chi oracle err {worst_o:.4f} (0.02), quench err {worst_q:.4f} (0.2); "
              f"max |C| berry {c_berry:.1e}, oracle {c_oracle:.1e} (0.05); plaquette {sorted(plaq)}")
    assert report(7, ok, detail)


def test_c08_sqrt_det_g_surface(fig4, report):
    err = fig4.summary["results"]["max_surface_error"]
    assert report(8, err <= 0.02, f"max |sqrt(det g) - closed form| {err:.4f} away from |h| = 1 (tol 0.02)")


def test_c09_trs_antisymmetry(fig4, report):
    n = 64
    k = Axis(0, 2 * math.pi, n).nodes
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    worst = 0.0
    for h in (-1.5, -0.5, 0.0, 0.5, 1.5):
        f = qgt_spectral(model.trs_band(h), K1, K2).f12
        worst = max(worst, float(np.max(np.abs(f + f[::-1, ::-1]))))
    measured = fig4.summary["results"]["max_antisymmetry"]
    ok = worst <= 1e-10 and measured <= 0.02
    assert report(9, ok, f"oracle |F(k) + F(-k)| {worst:.1e} (1e-10); measured {measured:.1e} (0.02)")


def _data(path):
    return [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]


def test_c10_determinism(tmp_path, report):
    identical = golden_ok = True
    for name in ("fig2", "fig4"):
        outs = []
        for threads in (1, 3):
            out = tmp_path / f"{name}_{threads}"
            s = ex.load_scenario(name, {"threads": threads}, reduced=True)
            ex.write_outputs(ex.run_scenario(s), out)
            outs.append(out)
        for f in sorted(outs[0].iterdir()):
            if f.name != "run_info.json":
                identical &= f.read_bytes() == (outs[1] / f.name).read_bytes()
        for g in (GOLDEN / name).glob("*.csv"):
            new, old = _data(outs[0] / g.name), _data(g)
            golden_ok &= len(new) == len(old) and new[0] == old[0]
            for a, b in zip(new[1:], old[1:]):
                for x, y in zip(a.split(","), b.split(",")):
                    try:
                        golden_ok &= math.isclose(float(x), float(y), rel_tol=1e-8, abs_tol=1e-10)
                    except ValueError:
                        golden_ok &= x == y
    ok = identical and golden_ok
    assert report(10, ok, f"threads 1 vs 3 byte-identical: {identical}; golden files match: {golden_ok}")
