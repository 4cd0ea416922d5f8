"""Time-dependent Schroedinger evolution of a two-level state.

Schedules map time to parameter points; the integrator samples the family's
control vector at each step midpoint and applies the exact 2x2 propagator
``exp(-i H dt)``, so the norm is preserved to rounding error.  Schedule fields
may be numpy arrays, in which case a whole batch of trajectories (one per
array element) is integrated in lock step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidStep
from .model import PAULI, HamiltonianFamily, band_state, check_band

DEFAULT_PHASE_STEP = 0.005
DEFAULT_MIN_STEPS = 2000


def _pt(p):
    return np.asarray(p[0], dtype=float), np.asarray(p[1], dtype=float)


@dataclass(frozen=True)
class Constant:
    point: tuple
    duration: float

    def params(self, t):
        l1, l2 = _pt(self.point)
        t = np.asarray(t, dtype=float)
        return l1 + 0 * t, l2 + 0 * t


@dataclass(frozen=True)
class LinearRamp:
    """``lambda(t) = start + (t/T) (end - start)``."""

    start: tuple
    end: tuple
    duration: float

    def progress(self, t):
        return np.clip(np.asarray(t, dtype=float) / self.duration, 0.0, 1.0)

    def rate(self, t):
        return np.ones_like(np.asarray(t, dtype=float)) / self.duration

    def params(self, t):
        s = self.progress(t)
        (a1, a2), (b1, b2) = _pt(self.start), _pt(self.end)
        return a1 + s * (b1 - a1), a2 + s * (b2 - a2)

    def velocity(self, t):
        r = self.rate(t)
        (a1, a2), (b1, b2) = _pt(self.start), _pt(self.end)
        return r * (b1 - a1), r * (b2 - a2)


@dataclass(frozen=True)
class SmoothRamp(LinearRamp):
    """Ramp with a ``sin^2`` envelope: zero velocity at both ends."""

    def progress(self, t):
        s = np.clip(np.asarray(t, dtype=float) / self.duration, 0.0, 1.0)
        return np.sin(0.5 * np.pi * s) ** 2

    def rate(self, t):
        s = np.clip(np.asarray(t, dtype=float) / self.duration, 0.0, 1.0)
        return 0.5 * np.pi * np.sin(np.pi * s) / self.duration

    def time_at_progress(self, s):
        return self.duration * (2 / np.pi) * np.arcsin(np.sqrt(np.clip(s, 0.0, 1.0)))


@dataclass(frozen=True)
class CosineModulation:
    """``lambda(t) = base + amplitude * cos(w t) * direction``.

    ``direction`` is a displacement pattern in parameter space, e.g. (1, 0)
    for lambda1 alone or (1, -1) for both parameters in antiphase.
    """

    base: tuple
    direction: tuple
    amplitude: float
    angular_frequency: float
    duration: float

    def params(self, t):
        b1, b2 = _pt(self.base)
        t = np.asarray(t, dtype=float)
        shift = np.asarray(self.amplitude) * np.cos(np.asarray(self.angular_frequency) * t)
        return b1 + shift * self.direction[0], b2 + shift * self.direction[1]


@dataclass(frozen=True)
class Composite:
    segments: tuple

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def breakpoints(self) -> list:
        return list(np.cumsum([s.duration for s in self.segments])[:-1])

    def params(self, t):
        t = float(t)
        offset = 0.0
        for seg in self.segments:
            if t <= offset + seg.duration or seg is self.segments[-1]:
                return seg.params(t - offset)
            offset += seg.duration


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (len(times),) + batch + (2,)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=-1)


def propagator(vec: np.ndarray, dt: float) -> np.ndarray:
    """Exact ``exp(-i dt (v . sigma)/2)`` for control vectors of shape (..., 3)."""
    vec = np.asarray(vec, dtype=float)
    r = np.linalg.norm(vec, axis=-1)
    a = 0.5 * r * dt
    # sin(a)/a without the 0/0 at r == 0
    sinc = np.sinc(a / np.pi) * 0.5 * dt
    gen = np.einsum("...k,kij->...ij", vec, PAULI)
    return np.cos(a)[..., None, None] * np.eye(2) - 1j * sinc[..., None, None] * gen


def _step(vec: np.ndarray, dt: float, psi: np.ndarray) -> np.ndarray:
    # same as propagator(vec, dt) @ psi without forming the matrices
    vx, vy, vz = vec[..., 0], vec[..., 1], vec[..., 2]
    r = np.sqrt(vx * vx + vy * vy + vz * vz)
    a = 0.5 * r * dt
    c = np.cos(a)
    s = -0.5j * dt * np.sinc(a / np.pi)
    p0, p1 = psi[..., 0], psi[..., 1]
    out = np.empty(np.broadcast_shapes(psi.shape, vec.shape[:-1] + (2,)), dtype=complex)
    out[..., 0] = c * p0 + s * (vz * p0 + (vx - 1j * vy) * p1)
    out[..., 1] = c * p1 + s * ((vx + 1j * vy) * p0 - vz * p1)
    return out


def _schedule_norm_bound(family, schedule, samples: int = 257) -> float:
    ts = np.linspace(0.0, schedule.duration, samples)
    best = 0.0
    for t in ts:
        best = max(best, float(np.max(np.linalg.norm(family.control(*schedule.params(t)), axis=-1))))
    return best


def default_dt(family: HamiltonianFamily, schedule, phase_step: float = DEFAULT_PHASE_STEP) -> float:
    """``min(phase_step / Omega_eff, duration / 2000)`` with Omega_eff the largest
    gap met along the schedule."""
    omega_eff = _schedule_norm_bound(family, schedule)
    dt = schedule.duration / DEFAULT_MIN_STEPS
    if omega_eff > 0:
        dt = min(dt, phase_step / omega_eff)
    return dt


def _time_grid(duration: float, dt: float, extra: Sequence[float]) -> np.ndarray:
    n = max(1, int(math.ceil(duration / dt - 1e-9)))
    grid = np.linspace(0.0, duration, n + 1)
    if len(extra):
        grid = np.union1d(grid, np.clip(np.asarray(extra, dtype=float), 0.0, duration))
    return grid


def evolve(
    family: HamiltonianFamily,
    schedule,
    psi0,
    dt: Optional[float] = None,
    t_eval: Optional[Sequence[float]] = None,
) -> Trajectory:
    """Integrate ``i d/dt psi = H(lambda(t)) psi`` over the schedule.

    The step grid is uniform with spacing at most ``dt`` and additionally hits
    every time in ``t_eval`` and every segment boundary exactly.  When
    ``t_eval`` is given only those times are recorded; otherwise every grid
    time is.
    """
    if dt is None:
        dt = default_dt(family, schedule)
    if not (isinstance(dt, (int, float, np.floating)) and math.isfinite(dt) and dt > 0):
        raise InvalidStep(f"time step must be positive and finite, got {dt!r}")
    if dt > schedule.duration * (1 + 1e-12):
        raise InvalidStep(f"time step {dt} exceeds schedule duration {schedule.duration}")
    extra = list(t_eval) if t_eval is not None else []
    if isinstance(schedule, Composite):
        extra += schedule.breakpoints()
    grid = _time_grid(schedule.duration, dt, extra)

    psi = np.asarray(psi0, dtype=complex)
    probe = schedule.params(0.0)[0]
    psi = np.broadcast_to(psi, np.shape(probe) + (2,)).copy() if np.ndim(probe) else psi.copy()

    if t_eval is None:
        record = np.ones(len(grid), dtype=bool)
    else:
        record = np.isin(grid, np.clip(np.asarray(t_eval, dtype=float), 0.0, schedule.duration))
    out = [psi.copy()] if record[0] else []
    for k in range(len(grid) - 1):
        t0, t1 = grid[k], grid[k + 1]
        vec = family.control(*schedule.params(0.5 * (t0 + t1)))
        psi = _step(vec, t1 - t0, psi)
        if record[k + 1]:
            out.append(psi.copy())
    times = grid[record]
    return Trajectory(times=times, states=np.stack(out))


def richardson_error(family, schedule, psi0, dt: Optional[float] = None) -> float:
    """Estimate of the final-state error at step ``dt`` (second-order scheme)."""
    if dt is None:
        dt = default_dt(family, schedule)
    coarse = evolve(family, schedule, psi0, dt, t_eval=[schedule.duration]).final
    fine = evolve(family, schedule, psi0, dt / 2, t_eval=[schedule.duration]).final
    return float(np.max(np.linalg.norm(fine - coarse, axis=-1)) * 4 / 3)


def expectation(psi, observable) -> float:
    psi = np.asarray(psi, dtype=complex)
    val = np.einsum("...i,...ij,...j->...", psi.conj(), np.asarray(observable), psi)
    return np.real(val) if np.ndim(val) else float(np.real(val))


def transition_probability(psi_final, family: HamiltonianFamily, p_final, band: str = "ground"):
    """Probability of having left ``band`` of ``H(p_final)``."""
    u = band_state(family, p_final[0], p_final[1], check_band(band))
    overlap = np.einsum("...i,...i->...", u.conj(), np.asarray(psi_final, dtype=complex))
    p = np.clip(1.0 - np.abs(overlap) ** 2, 0.0, 1.0)
    return p if np.ndim(p) else float(p)
