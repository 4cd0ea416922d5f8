import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qgtlab import model
from qgtlab.dynamics import (
    Composite,
    Constant,
    LinearRamp,
    SmoothRamp,
    default_dt,
    evolve,
    propagator,
    richardson_error,
    transition_probability,
)
from qgtlab.errors import InvalidStep

SPHERE = model.bloch_sphere()
UP = np.array([1.0, 0.0], dtype=complex)


def test_rabi_oscillation():
    # H = sigma_x / 2 from |0>: P1 = sin^2(t/2)
    times = np.linspace(0, 4 * math.pi, 9)
    traj = evolve(SPHERE, Constant((math.pi / 2, 0.0), 4 * math.pi), UP, t_eval=times)
    assert np.allclose(traj.times, times)
    assert np.allclose(np.abs(traj.states[:, 1]) ** 2, np.sin(times / 2) ** 2, atol=1e-12)


def test_eigenstate_is_stationary():
    p = (1.1, 0.4)
    psi0 = model.band_state(SPHERE, *p, "excited")
    psi = evolve(SPHERE, Constant(p, 50.0), psi0, t_eval=[50.0]).final
    assert abs(np.vdot(psi0, psi)) == pytest.approx(1.0, abs=1e-12)


def test_norm_preserved_over_many_steps():
    sched = LinearRamp((0.2, 0.0), (2.9, 6.0), 100.0)
    traj = evolve(SPHERE, sched, UP, dt=1e-3, t_eval=[100.0])
    assert abs(np.linalg.norm(traj.final) - 1) < 1e-10


def test_adiabatic_ramp_follows_ground_state():
    sched = SmoothRamp((0.3, 0.0), (2.5, 0.0), 200.0)
    psi0 = model.band_state(SPHERE, 0.3, 0.0)
    psi = evolve(SPHERE, sched, psi0, t_eval=[200.0]).final
    assert 1 - transition_probability(psi, SPHERE, (2.5, 0.0)) > 0.999


def test_sudden_limit():
    # a near-instant step of d in theta leaves P = sin^2(d/2)
    d = math.pi / 32
    sched = LinearRamp((1.0, 0.0), (1.0 + d, 0.0), 1e-6)
    psi = evolve(SPHERE, sched, model.band_state(SPHERE, 1.0, 0.0), t_eval=[1e-6]).final
    p = transition_probability(psi, SPHERE, (1.0 + d, 0.0))
    assert p == pytest.approx(math.sin(math.pi / 64) ** 2, rel=1e-6)
    assert p == pytest.approx(0.002408, abs=1e-6)


def test_second_order_convergence():
    sched = LinearRamp((0.5, 0.0), (2.0, 3.0), 5.0)
    e1 = richardson_error(SPHERE, sched, UP, dt=0.05)
    e2 = richardson_error(SPHERE, sched, UP, dt=0.025)
    assert e1 / e2 == pytest.approx(4.0, rel=0.1)


@given(st.floats(0, 2 * math.pi))
def test_global_phase_does_not_change_probabilities(phase):
    sched = LinearRamp((0.5, 0.0), (1.0, 0.7), 2.0)
    psi0 = model.band_state(SPHERE, 0.5, 0.0)
    a = evolve(SPHERE, sched, psi0, dt=0.01, t_eval=[2.0]).final
    b = evolve(SPHERE, sched, psi0 * np.exp(1j * phase), dt=0.01, t_eval=[2.0]).final
    pa = transition_probability(a, SPHERE, (1.0, 0.7))
    pb = transition_probability(b, SPHERE, (1.0, 0.7))
    assert pa == pytest.approx(pb, abs=1e-13)


def test_batch_matches_individual_runs():
    ends = np.array([0.6, 1.2, 2.2])
    sched = LinearRamp((np.full(3, 0.4), np.zeros(3)), (ends, np.zeros(3)), 3.0)
    batch = evolve(SPHERE, sched, UP, dt=0.01, t_eval=[3.0]).final
    for i, e in enumerate(ends):
        one = evolve(SPHERE, LinearRamp((0.4, 0.0), (e, 0.0), 3.0), UP, dt=0.01, t_eval=[3.0]).final
        assert np.allclose(batch[i], one, atol=1e-14)


def test_composite_hits_breakpoints():
    sched = Composite((Constant((0.0, 0.0), 1.0), Constant((math.pi / 2, 0.0), math.pi)))
    assert sched.duration == pytest.approx(1 + math.pi)
    traj = evolve(SPHERE, sched, UP, dt=0.3)
    assert np.any(np.isclose(traj.times, 1.0, atol=0, rtol=0))
    # first segment is diagonal, second is a pi pulse about x
    assert abs(traj.final[1]) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_propagator_is_unitary_and_exact():
    rng = np.random.default_rng(1)
    vec = rng.normal(size=(10, 3))
    U = propagator(vec, 0.7)
    eye = np.einsum("nij,nkj->nik", U, U.conj())
    assert np.allclose(eye, np.eye(2), atol=1e-14)
    w, V = np.linalg.eigh(model.pauli_matrix(vec))
    ref = np.einsum("nij,nj,nkj->nik", V, np.exp(-0.7j * w), V.conj())
    assert np.allclose(U, ref, atol=1e-13)
    assert np.allclose(propagator(np.zeros(3), 1.0), np.eye(2))


def test_default_step_size():
    sched = Constant((1.0, 0.0), 10.0)
    assert default_dt(SPHERE, sched) == pytest.approx(0.005)
    assert default_dt(SPHERE, Constant((1.0, 0.0), 1.0)) == pytest.approx(1.0 / 2000)
    assert default_dt(SPHERE, sched, phase_step=0.05) == pytest.approx(10.0 / 2000)


@pytest.mark.parametrize("dt", [0.0, -1.0, float("nan"), float("inf"), 5.0])
def test_invalid_step(dt):
    with pytest.raises(InvalidStep):
        evolve(SPHERE, Constant((0.0, 0.0), 1.0), UP, dt=dt)
