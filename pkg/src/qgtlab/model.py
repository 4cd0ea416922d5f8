"""Parameterized two-level Hamiltonian families.

Every family is a smooth map from a point (lambda1, lambda2) of a
two-dimensional parameter space to a control vector (Ox, Oy, Oz); the
Hamiltonian is ``H = (Ox sx + Oy sy + Oz sz) / 2``.  All array-level
functions broadcast over leading axes so whole grids can be evaluated at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DegeneratePoint

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])

DEGENERACY_TOL = 1e-9
GAUGE_TOL = 1e-12
BANDS = ("ground", "excited")

BLOCH_SPHERE = "bloch_sphere"
TRS_BAND = "trs_band"
CUSTOM = "custom"


@dataclass(frozen=True)
class ParameterPoint:
    lambda1: float
    lambda2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.lambda1, self.lambda2], dtype=float)


@dataclass(frozen=True)
class ControlVector:
    omega_x: float
    omega_y: float
    omega_z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.omega_x, self.omega_y, self.omega_z], dtype=float)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


@dataclass(frozen=True)
class EigenSystem:
    energy_minus: float
    energy_plus: float
    state_minus: np.ndarray
    state_plus: np.ndarray

    def state(self, band: str) -> np.ndarray:
        return self.state_minus if check_band(band) == "ground" else self.state_plus


@dataclass(frozen=True)
class HamiltonianFamily:
    """A named two-parameter family of two-level Hamiltonians.

    ``custom_map`` must be a pure function ``(l1, l2) -> (Ox, Oy, Oz)`` that
    accepts numpy arrays; wrap scalar code with ``np.vectorize`` if needed.
    """

    kind: str
    h: float = 0.0
    alpha: float = 0.5
    energy_scale: float = 1.0
    custom_map: Optional[Callable] = None
    name: str = ""
    fd_step: float = 1e-5

    def __post_init__(self):
        if self.kind not in (BLOCH_SPHERE, TRS_BAND, CUSTOM):
            raise ConfigError(f"unknown family kind {self.kind!r}")
        if self.kind == CUSTOM and self.custom_map is None:
            raise ConfigError("custom family needs a custom_map")
        if not np.isfinite([self.h, self.alpha, self.energy_scale]).all():
            raise ConfigError("family parameters must be finite")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == TRS_BAND:
            return f"trs_band(h={self.h:g},alpha={self.alpha:g})"
        return self.kind

    def control(self, l1, l2) -> np.ndarray:
        """Control vector(s), shape ``broadcast(l1, l2).shape + (3,)``."""
        l1, l2 = np.broadcast_arrays(np.asarray(l1, dtype=float), np.asarray(l2, dtype=float))
        if self.kind == BLOCH_SPHERE:
            st = np.sin(l1)
            vec = np.stack([st * np.cos(l2), st * np.sin(l2), np.cos(l1)], axis=-1)
        elif self.kind == TRS_BAND:
            sx = self.alpha * np.sin(l1)
            vec = np.stack([sx * np.cos(l2), sx * np.sin(l2), -(self.h + np.cos(l1))], axis=-1)
        else:
            out = self.custom_map(l1, l2)
            vec = np.stack(np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in out]), axis=-1)
            vec = np.broadcast_to(vec, l1.shape + (3,))
        return self.energy_scale * vec

    def control_derivatives(self, l1, l2) -> tuple[np.ndarray, np.ndarray]:
        """Partial derivatives of the control vector w.r.t. lambda1 and lambda2."""
        l1, l2 = np.broadcast_arrays(np.asarray(l1, dtype=float), np.asarray(l2, dtype=float))
        if self.kind == BLOCH_SPHERE:
            st, ct, sp, cp = np.sin(l1), np.cos(l1), np.sin(l2), np.cos(l2)
            d1 = np.stack([ct * cp, ct * sp, -st], axis=-1)
            d2 = np.stack([-st * sp, st * cp, np.zeros_like(st)], axis=-1)
        elif self.kind == TRS_BAND:
            a = self.alpha
            sk, ck, sp, cp = np.sin(l1), np.cos(l1), np.sin(l2), np.cos(l2)
            d1 = np.stack([a * ck * cp, a * ck * sp, sk], axis=-1)
            d2 = np.stack([-a * sk * sp, a * sk * cp, np.zeros_like(sk)], axis=-1)
        else:
            e = self.fd_step
            d1 = (self.control(l1 + e, l2) - self.control(l1 - e, l2)) / (2 * e)
            d2 = (self.control(l1, l2 + e) - self.control(l1, l2 - e)) / (2 * e)
            return d1, d2
        return self.energy_scale * d1, self.energy_scale * d2


def bloch_sphere(energy_scale: float = 1.0) -> HamiltonianFamily:
    return HamiltonianFamily(BLOCH_SPHERE, energy_scale=energy_scale)


def trs_band(h: float, alpha: float = 0.5, energy_scale: float = 1.0) -> HamiltonianFamily:
    return HamiltonianFamily(TRS_BAND, h=h, alpha=alpha, energy_scale=energy_scale)


def custom(fn: Callable, name: str = "custom", fd_step: float = 1e-5) -> HamiltonianFamily:
    return HamiltonianFamily(CUSTOM, custom_map=fn, name=name, fd_step=fd_step)


def check_band(band: str) -> str:
    if band not in BANDS:
        raise ConfigError(f"band must be one of {BANDS}, got {band!r}")
    return band


def _coords(p) -> tuple:
    if isinstance(p, ParameterPoint):
        return p.lambda1, p.lambda2
    return p[0], p[1]


def control_vector(family: HamiltonianFamily, p) -> ControlVector:
    return ControlVector(*map(float, family.control(*_coords(p))))


def pauli_matrix(vec) -> np.ndarray:
    """``(v . sigma) / 2`` for control vectors of shape (..., 3)."""
    return 0.5 * np.einsum("...k,kij->...ij", np.asarray(vec, dtype=float), PAULI)


def hamiltonian_matrix(family: HamiltonianFamily, p) -> np.ndarray:
    return pauli_matrix(family.control(*_coords(p)))


def fix_gauge(states: np.ndarray, tol: float = GAUGE_TOL) -> np.ndarray:
    """Make the first component with magnitude above ``tol`` real and non-negative."""
    states = np.asarray(states, dtype=complex)
    first = np.where(np.abs(states[..., 0]) > tol, states[..., 0], states[..., 1])
    mag = np.abs(first)
    phase = np.where(mag > 0, np.conj(first) / np.where(mag > 0, mag, 1.0), 1.0)
    return states * phase[..., None]


def eigenstates(vec: np.ndarray, tol: float = DEGENERACY_TOL):
    """Energies and gauge-fixed eigenvectors of ``(v . sigma)/2``.

    Returns ``(e_minus, e_plus, u_minus, u_plus)``; raises DegeneratePoint if
    any ``|v| <= tol``.
    """
    vec = np.asarray(vec, dtype=float)
    r = np.linalg.norm(vec, axis=-1)
    if np.any(~(r > tol)):
        bad = np.argwhere(np.atleast_1d(~(r > tol)))
        raise DegeneratePoint(f"gap closes: |Omega| <= {tol:g} at {len(bad)} point(s)")
    x, y, z = (vec[..., i] / r for i in range(3))
    xp = x + 1j * y
    # two unnormalized forms per band; pick the better-conditioned one
    up_a = np.stack([1 + z, xp], axis=-1)
    up_b = np.stack([np.conj(xp), 1 - z], axis=-1)
    um_a = np.stack([np.conj(xp), -(1 + z)], axis=-1)
    um_b = np.stack([1 - z, -xp], axis=-1)
    north = (z >= 0)[..., None]
    u_plus = np.where(north, up_a, up_b)
    u_minus = np.where(north, um_a, um_b)
    u_plus = u_plus / np.linalg.norm(u_plus, axis=-1, keepdims=True)
    u_minus = u_minus / np.linalg.norm(u_minus, axis=-1, keepdims=True)
    return -r / 2, r / 2, fix_gauge(u_minus), fix_gauge(u_plus)


def band_state(family: HamiltonianFamily, l1, l2, band: str = "ground") -> np.ndarray:
    _, _, um, up = eigenstates(family.control(l1, l2))
    return um if check_band(band) == "ground" else up


def eigensystem(family: HamiltonianFamily, p, tol: float = DEGENERACY_TOL) -> EigenSystem:
    l1, l2 = _coords(p)
    try:
        em, ep, um, up = eigenstates(family.control(l1, l2), tol)
    except DegeneratePoint as exc:
        raise exc.with_context(family=family.label, lambda1=float(l1), lambda2=float(l2))
    return EigenSystem(float(em), float(ep), um, up)
