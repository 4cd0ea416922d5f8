"""Virtual measurement protocols for the geometric tensor.

* sudden quench: transition probability after a short parameter ramp;
* periodic drive: frequency-integrated excitation rate under weak modulation;
* quasi-adiabatic response: transverse generalized force during a slow ramp.

All protocol functions accept arrays of base points and run every trajectory
of a protocol as one vectorized batch.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import CosineModulation, LinearRamp, SmoothRamp, default_dt, evolve
from .errors import (
    AdiabaticityViolation,
    AdiabaticityWarning,
    ConfigError,
    WindowTooNarrow,
)
from .model import PAULI, HamiltonianFamily, band_state, check_band, eigenstates
from .units import ns_to_internal

QUENCH_DIRECTIONS = ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0))
DRIVE_DIRECTIONS = {"11": (1.0, 0.0), "22": (0.0, 1.0), "plus": (1.0, 1.0), "minus": (1.0, -1.0)}


@dataclass(frozen=True)
class ShotModel:
    """Projective-measurement statistics; ``shots=None`` means exact probabilities."""

    shots: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.shots is not None and self.shots < 1:
            raise ConfigError("shots must be >= 1 (or None for exact probabilities)")

    def sample(self, p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.shots is None:
            return p
        return rng.binomial(self.shots, np.clip(p, 0.0, 1.0)) / self.shots

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class QuenchConfig:
    delta_lambda: float = math.pi / 16
    ramp_time: float = ns_to_internal(5.0)
    mode: str = "finite_ramp"
    band: str = "ground"
    dt: Optional[float] = None

    def __post_init__(self):
        if not self.delta_lambda > 0:
            raise ConfigError("delta_lambda must be positive")
        if self.mode not in ("finite_ramp", "instantaneous"):
            raise ConfigError(f"unknown quench mode {self.mode!r}")
        if self.mode == "finite_ramp" and not self.ramp_time > 0:
            raise ConfigError("ramp_time must be positive for a finite ramp")
        check_band(self.band)


@dataclass
class QuenchEstimate:
    g11: np.ndarray
    g22: np.ndarray
    g12: np.ndarray
    p11: np.ndarray
    p22: np.ndarray
    p12: np.ndarray

    @property
    def sqrt_det_g(self):
        return np.sqrt(np.clip(self.g11 * self.g22 - self.g12 ** 2, 0.0, None))


def quench_probabilities(family: HamiltonianFamily, l1, l2, cfg: QuenchConfig, direction):
    """Exact transition probability of one quench protocol (no shot noise)."""
    l1, l2 = np.broadcast_arrays(np.asarray(l1, dtype=float), np.asarray(l2, dtype=float))
    psi0 = band_state(family, l1, l2, cfg.band)
    e1 = l1 + cfg.delta_lambda * direction[0]
    e2 = l2 + cfg.delta_lambda * direction[1]
    target = band_state(family, e1, e2, cfg.band)
    p_sudden = 1.0 - np.abs(np.einsum("...i,...i->...", target.conj(), psi0)) ** 2
    if cfg.mode == "instantaneous":
        return p_sudden
    ramp = LinearRamp((l1, l2), (e1, e2), cfg.ramp_time)
    psi = evolve(family, ramp, psi0, cfg.dt, t_eval=[cfg.ramp_time]).final
    p = 1.0 - np.abs(np.einsum("...i,...i->...", target.conj(), psi)) ** 2
    if np.any(p < 0.1 * p_sudden):
        warnings.warn(
            "quench ramp too slow: transition probability below 10% of the sudden limit",
            AdiabaticityWarning,
            stacklevel=2,
        )
    return np.clip(p, 0.0, 1.0)


def quench_metric(
    family: HamiltonianFamily, l1, l2, cfg: QuenchConfig = QuenchConfig(),
    shots: ShotModel = ShotModel(), rng: Optional[np.random.Generator] = None,
) -> QuenchEstimate:
    """Metric from the three quench protocols (e1, e2 and e1 + e2)."""
    if rng is None:
        rng = shots.rng()
    probs = [shots.sample(quench_probabilities(family, l1, l2, cfg, d), rng) for d in QUENCH_DIRECTIONS]
    p11, p22, p12 = probs
    d2 = cfg.delta_lambda ** 2
    return QuenchEstimate(
        g11=p11 / d2, g22=p22 / d2, g12=(p12 - p11 - p22) / (2 * d2), p11=p11, p22=p22, p12=p12
    )


@dataclass(frozen=True)
class DriveConfig:
    relative_amplitude: float = 0.1
    omega_min: float = 0.5
    omega_max: float = 3.5
    omega_count: int = 121
    t_meas: float = ns_to_internal(200.0)
    normalization: str = "per-omega"
    rate_mode: str = "final"
    band: str = "ground"
    dt: Optional[float] = None
    check_window: bool = True

    def __post_init__(self):
        if not 0 < self.relative_amplitude:
            raise ConfigError("relative_amplitude must be positive")
        if self.relative_amplitude > 0.2:
            warnings.warn("drive amplitude E/omega above 0.2 leaves the perturbative regime",
                          stacklevel=2)
        if not self.omega_min < self.omega_max:
            raise ConfigError("omega_min must be below omega_max")
        if self.omega_count < 16:
            raise ConfigError("omega_count must be at least 16")
        if not self.t_meas > 0:
            raise ConfigError("t_meas must be positive")
        if self.normalization not in ("per-omega", "at-gap"):
            raise ConfigError(f"unknown drive normalization {self.normalization!r}")
        if self.rate_mode not in ("final", "time_averaged"):
            raise ConfigError(f"unknown rate mode {self.rate_mode!r}")
        check_band(self.band)

    @property
    def omegas(self) -> np.ndarray:
        return np.linspace(self.omega_min, self.omega_max, self.omega_count)


@dataclass
class DriveEstimate:
    g11: np.ndarray
    g22: np.ndarray
    g12: np.ndarray
    omegas: np.ndarray
    rates: dict = field(default_factory=dict)  # protocol -> Gamma, shape points + (n_omega,)
    integrals: dict = field(default_factory=dict)


def drive_population(
    family: HamiltonianFamily, l1, l2, cfg: DriveConfig, direction, times=None,
) -> np.ndarray:
    """Excited population n+(omega, t) under ``lambda0 + 2(E/w) cos(w t) direction``.

    Populations are measured in the eigenbasis of the undriven Hamiltonian at
    ``lambda0``.  Returns shape ``(len(times),) + points + (n_omega,)``.
    """
    l1 = np.asarray(l1, dtype=float)[..., None]
    l2 = np.asarray(l2, dtype=float)[..., None]
    omegas = cfg.omegas
    if times is None:
        times = [cfg.t_meas]
    sched = CosineModulation(
        base=(l1, l2), direction=direction, amplitude=2 * cfg.relative_amplitude,
        angular_frequency=omegas, duration=cfg.t_meas,
    )
    _, _, um, up = eigenstates(family.control(l1, l2))
    start, other = (um, up) if cfg.band == "ground" else (up, um)
    psi0 = np.broadcast_to(start, np.broadcast_shapes(l1.shape, omegas.shape) + (2,))
    dt = cfg.dt if cfg.dt is not None else default_dt(family, sched)
    traj = evolve(family, sched, psi0, dt, t_eval=times)
    amp = np.einsum("...i,t...i->t...", other.conj(), traj.states)
    return np.abs(amp) ** 2


def _rate(family, l1, l2, cfg: DriveConfig, direction, shots, rng):
    if cfg.rate_mode == "final":
        n = drive_population(family, l1, l2, cfg, direction)[0]
        return shots.sample(n, rng) / cfg.t_meas
    # linear growth n = Gamma t has mean Gamma t_meas / 2 over [0, t_meas]
    times = np.linspace(0.0, cfg.t_meas, 33)
    n = shots.sample(drive_population(family, l1, l2, cfg, direction, times), rng)
    return 2 * np.trapezoid(n, times, axis=0) / cfg.t_meas ** 2


def drive_metric(
    family: HamiltonianFamily, l1, l2, cfg: DriveConfig = DriveConfig(),
    shots: ShotModel = ShotModel(), rng: Optional[np.random.Generator] = None,
) -> DriveEstimate:
    """Metric from integrated excitation rates under weak periodic drive.

    ``g11`` and ``g22`` come from single-parameter drives; the simultaneous
    drives ``(+1, +1)`` and ``(+1, -1)`` give ``I+- = g11 + g22 +- 2 g12``.
    """
    if rng is None:
        rng = shots.rng()
    l1, l2 = np.broadcast_arrays(np.asarray(l1, dtype=float), np.asarray(l2, dtype=float))
    omegas = cfg.omegas
    if cfg.normalization == "per-omega":
        amp = cfg.relative_amplitude * omegas
    else:
        gap = np.linalg.norm(family.control(l1, l2), axis=-1)[..., None]
        amp = cfg.relative_amplitude * gap
    rates, integrals = {}, {}
    for name, direction in DRIVE_DIRECTIONS.items():
        gamma = _rate(family, l1, l2, cfg, direction, shots, rng)
        rates[name] = gamma
        if cfg.check_window:
            _check_window(gamma, name)
        integrals[name] = np.trapezoid(gamma / (2 * math.pi * amp ** 2), omegas, axis=-1)
    g11, g22 = integrals["11"], integrals["22"]
    g12 = (integrals["plus"] - integrals["minus"]) / 4
    return DriveEstimate(g11=g11, g22=g22, g12=g12, omegas=omegas, rates=rates, integrals=integrals)


def _check_window(gamma: np.ndarray, name: str, fraction: float = 0.05):
    peak = np.max(gamma, axis=-1)
    edge = np.maximum(gamma[..., 0], gamma[..., -1])
    bad = (peak > 1e-12) & (edge > fraction * peak)
    if np.any(bad):
        worst = float(np.max(np.where(bad, edge / np.where(peak > 0, peak, 1), 0)))
        raise WindowTooNarrow(
            f"drive '{name}': rate at the window edge is {worst:.1%} of the peak",
            protocol=name,
        )


def resonance_frequency(n_plus: np.ndarray, omegas: np.ndarray) -> float:
    """Frequency of the excitation ridge, refined by a parabola through the maximum."""
    n_plus = np.asarray(n_plus, dtype=float)
    k = int(np.argmax(n_plus))
    if 0 < k < len(omegas) - 1:
        y0, y1, y2 = n_plus[k - 1: k + 2]
        den = y0 - 2 * y1 + y2
        if den != 0:
            return float(omegas[k] + 0.5 * (y0 - y2) / den * (omegas[1] - omegas[0]))
    return float(omegas[k])


@dataclass(frozen=True)
class RampConfig:
    """Slow ramp of one coordinate from ``start`` to ``end``.

    ``window_periods`` sets the averaging window (in local Larmor periods)
    used to suppress the Rabi ringing on top of the linear response.
    """

    start: tuple
    end: tuple
    ramp_duration: float
    envelope: str = "sin_squared"
    band: str = "ground"
    window_periods: float = 1.0
    window_points: int = 17
    dt: Optional[float] = None
    phase_step: float = 0.05
    excitation_limit: float = 0.1

    def __post_init__(self):
        if not self.ramp_duration > 0:
            raise ConfigError("ramp_duration must be positive")
        if self.envelope not in ("linear", "sin_squared"):
            raise ConfigError(f"unknown envelope {self.envelope!r}")
        check_band(self.band)

    @property
    def axis(self) -> int:
        moved = [not np.allclose(self.start[i], self.end[i]) for i in (0, 1)]
        if moved != [True, False] and moved != [False, True]:
            raise ConfigError("ramp must move exactly one coordinate")
        return moved.index(True)

    def schedule(self):
        cls = SmoothRamp if self.envelope == "sin_squared" else LinearRamp
        return cls(
            (np.asarray(self.start[0], float), np.asarray(self.start[1], float)),
            (np.asarray(self.end[0], float), np.asarray(self.end[1], float)),
            self.ramp_duration,
        )


def peak_velocity(span: float, duration: float, envelope: str = "sin_squared") -> float:
    return abs(span) * (math.pi / 2 if envelope == "sin_squared" else 1.0) / duration


def duration_for_velocity(span: float, velocity: float, envelope: str = "sin_squared") -> float:
    return peak_velocity(span, 1.0, envelope) / velocity


def gap_scaled_duration(
    family: HamiltonianFamily, start, end, kappa: float = 0.1, v_max: float = 0.02,
    envelope: str = "sin_squared", samples: int = 513,
) -> float:
    """Ramp duration whose peak velocity is ``min(v_max, kappa * gap_min^2)``.

    ``gap_min`` is the smallest gap along the straight path(s) from ``start``
    to ``end``.
    """
    s = np.linspace(0.0, 1.0, samples).reshape((-1,) + (1,) * np.ndim(start[0]))
    l1 = np.asarray(start[0]) + s * (np.asarray(end[0]) - np.asarray(start[0]))
    l2 = np.asarray(start[1]) + s * (np.asarray(end[1]) - np.asarray(start[1]))
    gap = float(np.min(np.linalg.norm(family.control(l1, l2), axis=-1)))
    span = float(np.max(np.abs(np.asarray(end[0]) - np.asarray(start[0]))
                        + np.abs(np.asarray(end[1]) - np.asarray(start[1]))))
    return duration_for_velocity(span, min(v_max, kappa * gap ** 2), envelope)


@dataclass
class BerryResponse:
    l1: np.ndarray
    l2: np.ndarray
    curvature: np.ndarray  # F_{mu nu}, mu the ramp axis
    ramp_axis: int
    max_excitation: float

    @property
    def f12(self) -> np.ndarray:
        return self.curvature if self.ramp_axis == 0 else -self.curvature


def _force_operator(d):
    return 0.5 * np.einsum("...k,kij->...ij", d, PAULI)


def berry_response(
    family: HamiltonianFamily, ramp: RampConfig, measure_axis: int, samples,
) -> BerryResponse:
    """Berry curvature along a slow ramp from the transverse generalized force.

    ``samples`` are values of the ramped coordinate at which the curvature is
    reported.  The returned ``curvature`` is ``F_{mu nu} = dM_nu / v_mu``, where
    ``M_nu = -<dH/d lambda_nu>`` minus its eigenstate value and ``v_mu`` is
    the ramp velocity, both averaged over a window of ``window_periods``
    local Larmor periods around each sample time.
    """
    mu = ramp.axis
    if measure_axis not in (0, 1) or measure_axis == mu:
        raise ConfigError("measure_axis must be the coordinate transverse to the ramp")
    sched = ramp.schedule()
    a = np.asarray(ramp.start[mu], float)
    b = np.asarray(ramp.end[mu], float)
    samples = np.asarray(samples, dtype=float)
    frac = (samples - np.mean(a)) / np.mean(b - a)
    if np.any((frac < 0) | (frac > 1)):
        raise ConfigError("berry samples must lie on the ramp")
    if ramp.envelope == "sin_squared":
        t_samples = sched.time_at_progress(frac)
    else:
        t_samples = frac * ramp.ramp_duration

    def gap_at(t):
        return float(np.median(np.linalg.norm(family.control(*sched.params(t)), axis=-1)))

    offsets = np.linspace(-0.5, 0.5, ramp.window_points)
    windows = []
    for t in t_samples:
        width = ramp.window_periods * 2 * math.pi / gap_at(t)
        windows.append(np.clip(t + width * offsets, 0.0, ramp.ramp_duration))
    windows = np.array(windows)
    monitor = np.linspace(0.0, ramp.ramp_duration, 401)
    t_eval = np.union1d(windows.ravel(), monitor)

    _check_velocity(family, sched, mu, ramp.ramp_duration)
    psi0 = band_state(family, *sched.params(0.0), ramp.band)
    dt = ramp.dt if ramp.dt is not None else default_dt(family, sched, ramp.phase_step)
    traj = evolve(family, sched, psi0, dt, t_eval=t_eval)
    times = traj.times

    ex_max = 0.0
    force = []
    for k, t in enumerate(times):
        l1, l2 = sched.params(t)
        _, _, um, up = eigenstates(family.control(l1, l2))
        ref, other = (um, up) if ramp.band == "ground" else (up, um)
        psi = traj.states[k]
        ex_max = max(ex_max, float(np.max(np.abs(np.einsum("...i,...i->...", other.conj(), psi)) ** 2)))
        dh = _force_operator(family.control_derivatives(l1, l2)[measure_axis])
        m = -np.real(np.einsum("...i,...ij,...j->...", psi.conj(), dh, psi))
        m0 = -np.real(np.einsum("...i,...ij,...j->...", ref.conj(), dh, ref))
        force.append(m - m0)
    force = np.array(force)
    if ex_max > ramp.excitation_limit:
        raise AdiabaticityViolation(
            f"excited population reached {ex_max:.3f} during the ramp", max_excitation=ex_max
        )

    index = {t: i for i, t in enumerate(times)}
    lead = (1,) * np.ndim(a)
    curv = []
    for w in windows:
        idx = [index[t] for t in w]
        vel = sched.rate(w).reshape((-1,) + lead) * (b - a)
        curv.append(np.mean(force[idx], axis=0) / np.mean(vel, axis=0))
    curv = np.array(curv)
    l1s, l2s = sched.params(t_samples.reshape((-1,) + lead))
    return BerryResponse(l1=l1s, l2=l2s, curvature=curv, ramp_axis=mu, max_excitation=ex_max)


def _check_velocity(family, sched, mu, duration, threshold: float = 0.1):
    ts = np.linspace(0.0, duration, 257)
    worst = 0.0
    for t in ts:
        l1, l2 = sched.params(t)
        vec = family.control(l1, l2)
        gap = np.linalg.norm(vec, axis=-1)
        dmu = np.linalg.norm(family.control_derivatives(l1, l2)[mu], axis=-1) / 2
        v = np.abs(sched.rate(t) * (np.asarray(sched.end[mu]) - np.asarray(sched.start[mu])))
        worst = max(worst, float(np.max(v * dmu / gap ** 2)))
    if worst > threshold:
        warnings.warn(f"ramp velocity is {worst:.2g} of gap^2/|dH|; linear response may fail",
                      AdiabaticityWarning, stacklevel=3)
