import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgtlab import model
from qgtlab.errors import AdiabaticityViolation, AdiabaticityWarning, ConfigError, WindowTooNarrow
from qgtlab.oracle import qgt_spectral
from qgtlab.protocols import (
    DriveConfig,
    QuenchConfig,
    RampConfig,
    ShotModel,
    berry_response,
    drive_metric,
    drive_population,
    duration_for_velocity,
    gap_scaled_duration,
    peak_velocity,
    quench_metric,
    quench_probabilities,
    resonance_frequency,
)

SPHERE = model.bloch_sphere()
SUDDEN = QuenchConfig(mode="instantaneous")


def skew(a, b):
    # Bloch sphere with phi = l1 + l2: g12 = sin^2(l1) / 4
    return np.sin(a) * np.cos(a + b), np.sin(a) * np.sin(a + b), np.cos(a)


# ---------------------------------------------------------------- quench

def test_quench_raw_probability():
    p = quench_probabilities(SPHERE, 1.0, 0.0, SUDDEN, (1.0, 0.0))
    assert p == pytest.approx(math.sin(math.pi / 32) ** 2, abs=1e-12)
    assert p == pytest.approx(0.009607, abs=1e-6)


def test_quench_sphere_equator():
    q = quench_metric(SPHERE, math.pi / 2, 0.0, SUDDEN)
    assert q.g11 == pytest.approx(0.25, abs=0.01)
    assert q.g22 == pytest.approx(0.25, abs=0.01)
    assert abs(q.g12) < 0.01


def test_quench_excited_band():
    q = quench_metric(SPHERE, math.pi / 4, 0.0, QuenchConfig(band="excited"))
    assert q.g22 == pytest.approx(0.125, abs=0.01)


@given(st.floats(0.2, math.pi - 0.2), st.floats(0, 2 * math.pi))
def test_bands_give_same_quench_metric(theta, phi):
    g = quench_metric(SPHERE, theta, phi, SUDDEN)
    e = quench_metric(SPHERE, theta, phi, QuenchConfig(mode="instantaneous", band="excited"))
    assert np.allclose([g.g11, g.g22, g.g12], [e.g11, e.g22, e.g12], atol=1e-12)


@given(st.floats(0.1, math.pi - 0.1), st.floats(0, 2 * math.pi), st.sampled_from([math.pi / 16, math.pi / 32]))
def test_sudden_quench_bias_bound_on_sphere(theta, phi, delta):
    q = quench_metric(SPHERE, theta, phi, QuenchConfig(delta_lambda=delta, mode="instantaneous"))
    ref = qgt_spectral(SPHERE, theta, phi)
    for est, exact in ((q.g11, ref.g11), (q.g22, ref.g22), (q.g12, ref.g12)):
        assert abs(est - exact) <= 0.5 * delta


@settings(max_examples=20)
@given(st.floats(0.1, 2 * math.pi - 0.1), st.floats(0, 2 * math.pi), st.sampled_from([-0.5, 0.3, 1.6]))
def test_sudden_quench_bias_shrinks_with_step_on_trs(kx, ky, h):
    fam = model.trs_band(h)
    ref = qgt_spectral(fam, kx, ky)
    errs = []
    for delta in (math.pi / 32, math.pi / 64):
        q = quench_metric(fam, kx, ky, QuenchConfig(delta_lambda=delta, mode="instantaneous"))
        errs.append(np.abs([q.g11 - ref.g11, q.g22 - ref.g22, q.g12 - ref.g12]))
    big = errs[0] > 1e-4
    # halving the step at least halves the bias
    assert np.all(errs[1][big] / errs[0][big] < 0.62)


def test_finite_ramp_close_to_sudden():
    th = np.linspace(0.3, 2.8, 9)
    fin = quench_metric(SPHERE, th, 0.0)
    sud = quench_metric(SPHERE, th, 0.0, SUDDEN)
    assert np.all(np.abs(fin.g11 / sud.g11 - 1) < 0.05)
    assert np.all(np.abs(fin.g22 / sud.g22 - 1) < 0.05)


def test_slow_quench_warns():
    with pytest.warns(AdiabaticityWarning):
        quench_metric(SPHERE, 1.0, 0.0, QuenchConfig(ramp_time=200.0))


def test_quench_config_validation():
    for kw in ({"delta_lambda": 0}, {"mode": "slow"}, {"ramp_time": 0.0}, {"band": "up"}):
        with pytest.raises(ConfigError):
            QuenchConfig(**kw)
    QuenchConfig(mode="instantaneous", ramp_time=0.0)


def test_shot_noise_is_seeded():
    shots = ShotModel(shots=500, seed=7)
    a = quench_metric(SPHERE, np.full(10, 1.0), 0.0, SUDDEN, shots)
    b = quench_metric(SPHERE, np.full(10, 1.0), 0.0, SUDDEN, shots)
    assert np.array_equal(a.g11, b.g11)
    c = quench_metric(SPHERE, np.full(10, 1.0), 0.0, SUDDEN, ShotModel(500, seed=8))
    assert not np.array_equal(a.g11, c.g11)


def test_shot_variance_scales_inversely_with_shots():
    p = np.full(4000, 0.3)
    rng = np.random.default_rng(11)
    v100 = np.var(ShotModel(100).sample(p, rng))
    v400 = np.var(ShotModel(400).sample(p, rng))
    assert v100 == pytest.approx(0.21 / 100, rel=0.1)
    assert v100 / v400 == pytest.approx(4.0, rel=0.15)


def test_exact_shot_model_passes_through():
    p = np.array([0.1, 0.2])
    assert ShotModel().sample(p, np.random.default_rng(0)) is p
    with pytest.raises(ConfigError):
        ShotModel(shots=0)


# ---------------------------------------------------------------- drive

@pytest.fixture(scope="module")
def equator_drive():
    return drive_metric(SPHERE, math.pi / 2, 0.0, DriveConfig(omega_count=61))


def test_drive_ridge_at_gap():
    cfg = DriveConfig(omega_count=61)
    n_plus = drive_population(SPHERE, math.pi / 2, 0.0, cfg, (1.0, 0.0))[0]
    assert resonance_frequency(n_plus, cfg.omegas) == pytest.approx(1.0, rel=0.05)


def test_drive_metric_at_equator(equator_drive):
    assert equator_drive.g11 == pytest.approx(0.25, rel=0.25)
    assert equator_drive.g22 == pytest.approx(0.25, rel=0.25)
    assert abs(equator_drive.g12) < 0.03


def test_drive_is_deterministic(equator_drive):
    again = drive_metric(SPHERE, math.pi / 2, 0.0, DriveConfig(omega_count=61))
    assert again.g11 == equator_drive.g11 and again.g12 == equator_drive.g12


def test_simultaneous_drive_algebra():
    # in the linear-response regime (I+ - I-)/4 recovers g12 of a skewed family
    fam = model.custom(skew)
    p = (math.pi / 3, math.pi / 5)
    ref = qgt_spectral(fam, *p)
    d = drive_metric(fam, *p, DriveConfig(relative_amplitude=0.02, omega_count=61))
    assert d.g12 == pytest.approx(ref.g12, rel=0.05)
    assert d.integrals["plus"] == pytest.approx(ref.g11 + ref.g22 + 2 * ref.g12, rel=0.06)
    assert d.integrals["minus"] == pytest.approx(ref.g11 + ref.g22 - 2 * ref.g12, rel=0.06)


def test_sphere_off_diagonal_drive_vanishes():
    d = drive_metric(SPHERE, math.pi / 3, math.pi / 5, DriveConfig(omega_count=61))
    assert abs(d.g12) < 0.03


def test_time_averaged_rate_mode_runs():
    # averaging over [0, t_meas] broadens the line, so the window check is off
    cfg = DriveConfig(omega_count=31, rate_mode="time_averaged", check_window=False)
    d = drive_metric(SPHERE, math.pi / 2, 0.0, cfg)
    assert 0.15 < d.g11 < 0.35


def test_at_gap_normalization():
    d = drive_metric(SPHERE, math.pi / 2, 0.0, DriveConfig(omega_count=61, normalization="at-gap"))
    assert d.g11 == pytest.approx(0.25, rel=0.25)


def test_narrow_window_detected():
    with pytest.raises(WindowTooNarrow):
        drive_metric(SPHERE, math.pi / 2, 0.0, DriveConfig(omega_min=0.95, omega_max=1.05, omega_count=16))


def test_drive_config_validation():
    for kw in ({"relative_amplitude": 0}, {"omega_min": 2, "omega_max": 1}, {"omega_count": 4},
               {"t_meas": -1}, {"normalization": "peak"}, {"rate_mode": "slope"}):
        with pytest.raises(ConfigError):
            DriveConfig(**kw)
    with pytest.warns(UserWarning):
        DriveConfig(relative_amplitude=0.3)


def test_resonance_frequency_refines_peak():
    w = np.linspace(0, 2, 21)
    assert resonance_frequency(-(w - 1.03) ** 2, w) == pytest.approx(1.03, abs=1e-12)
    assert resonance_frequency(w, w) == 2.0


# ---------------------------------------------------------------- berry

def _theta_ramp(band, velocity=0.02, duration=None):
    if duration is None:
        duration = duration_for_velocity(math.pi, velocity)
    return RampConfig((0.0, 0.0), (math.pi, 0.0), duration, band=band)


@pytest.mark.parametrize("band,sign", [("ground", -1), ("excited", 1)])
def test_berry_curvature_on_sphere(band, sign):
    samples = np.array([math.pi / 4, math.pi / 2, 2.5])
    r = berry_response(SPHERE, _theta_ramp(band), 1, samples)
    assert r.f12[1] == pytest.approx(sign * 0.5, abs=0.05)
    assert np.allclose(r.f12, sign * 0.5 * np.sin(samples), atol=0.02)
    assert r.max_excitation < 0.05


def test_ramp_along_second_axis_flips_index_order():
    ramp = RampConfig((math.pi / 2, 0.0), (math.pi / 2, 2 * math.pi), duration_for_velocity(2 * math.pi, 0.02))
    r = berry_response(SPHERE, ramp, 0, [math.pi])
    assert r.ramp_axis == 1
    assert r.f12[0] == pytest.approx(-0.5, abs=0.05)


def test_fast_ramp_breaks_adiabaticity():
    with pytest.raises(AdiabaticityViolation), warnings.catch_warnings():
        warnings.simplefilter("ignore", AdiabaticityWarning)
        berry_response(SPHERE, _theta_ramp("ground", duration=3.0), 1, [math.pi / 2])


def test_trs_measured_curvature_antisymmetric():
    fam = model.trs_band(0.5)
    ky = np.array([0.7, 2 * math.pi - 0.7])
    start, end = (np.zeros(2), ky), (np.full(2, 2 * math.pi), ky)
    ramp = RampConfig(start, end, gap_scaled_duration(fam, start, end))
    kx = np.array([1.1, 2 * math.pi - 1.1])
    f = berry_response(fam, ramp, 1, kx).f12
    assert abs(f[0, 0] + f[1, 1]) < 0.02
    ref = qgt_spectral(fam, kx[0], ky[0]).f12
    assert f[0, 0] == pytest.approx(ref, abs=0.02)


def test_velocity_helpers():
    d = duration_for_velocity(math.pi, 0.02)
    assert peak_velocity(math.pi, d) == pytest.approx(0.02)
    assert peak_velocity(1.0, 2.0, "linear") == 0.5
    fam = model.trs_band(1.25)
    T = gap_scaled_duration(fam, (0.0, 0.0), (2 * math.pi, 0.0))
    # gap minimum 0.25 gives v = 0.1 * 0.25^2
    assert peak_velocity(2 * math.pi, T) == pytest.approx(0.1 * 0.25 ** 2, rel=1e-3)


def test_ramp_config_validation():
    with pytest.raises(ConfigError):
        RampConfig((0, 0), (1, 1), 10.0).axis
    with pytest.raises(ConfigError):
        RampConfig((0, 0), (1, 0), 0.0)
    with pytest.raises(ConfigError):
        RampConfig((0, 0), (1, 0), 1.0, envelope="cubic")
    with pytest.raises(ConfigError):
        berry_response(SPHERE, _theta_ramp("ground"), 0, [1.0])
    with pytest.raises(ConfigError):
        berry_response(SPHERE, _theta_ramp("ground"), 1, [4.0])
