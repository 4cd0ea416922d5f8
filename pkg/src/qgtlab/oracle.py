"""Reference values of the quantum geometric tensor.

Three independent routes are provided:

* ``qgt_spectral`` -- sum over the other band of matrix elements of dH;
* ``metric_overlap_fd`` -- fidelity loss ``1 - |<u(p)|u(p + d)>|^2`` between
  gauge-fixed eigenvectors at neighbouring points;
* ``bloch_qgt`` -- derivatives of the unit Bloch vector ``n = O / |O|``.

Conventions: ``Q = g + i F / 2`` with ``Q_mn = <d_m u|(1 - |u><u|)|d_n u>``,
so for the Bloch-sphere family the ground band has ``F_12 = -sin(theta)/2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePoint
from .model import DEGENERACY_TOL, PAULI, HamiltonianFamily, band_state, check_band, eigenstates


@dataclass(frozen=True)
class QGTValue:
    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray
    f12: np.ndarray

    @property
    def det_g(self):
        return self.g11 * self.g22 - self.g12 ** 2

    @property
    def sqrt_det_g(self):
        return np.sqrt(np.clip(self.det_g, 0.0, None))

    def metric(self) -> np.ndarray:
        return np.stack(
            [np.stack([self.g11, self.g12], -1), np.stack([self.g12, self.g22], -1)], -2
        )

    def as_tuple(self):
        return self.g11, self.g12, self.g22, self.f12


def _matrix_element(bra, op, ket):
    return np.einsum("...i,...ij,...j->...", bra.conj(), op, ket)


def spectral_from_states(d1, d2, energy_gap, u, v) -> QGTValue:
    """QGT of state ``u`` given the other eigenstate ``v``.

    ``d1``/``d2`` are control-vector derivatives, ``energy_gap = E_v - E_u``.
    Works for any phase convention of ``u`` and ``v``.
    """
    dh1 = 0.5 * np.einsum("...k,kij->...ij", d1, PAULI)
    dh2 = 0.5 * np.einsum("...k,kij->...ij", d2, PAULI)
    a1 = _matrix_element(v, dh1, u)  # <v|dH_1|u>
    a2 = _matrix_element(v, dh2, u)
    den = energy_gap ** 2
    q11 = np.abs(a1) ** 2 / den
    q22 = np.abs(a2) ** 2 / den
    q12 = np.conj(a1) * a2 / den
    return QGTValue(g11=q11, g12=np.real(q12), g22=q22, f12=2 * np.imag(q12))


def qgt_spectral(family: HamiltonianFamily, l1, l2, band: str = "ground") -> QGTValue:
    check_band(band)
    vec = family.control(l1, l2)
    em, ep, um, up = eigenstates(vec)
    d1, d2 = family.control_derivatives(l1, l2)
    if band == "ground":
        return spectral_from_states(d1, d2, ep - em, um, up)
    return spectral_from_states(d1, d2, em - ep, up, um)


def _fidelity_loss(family, band, l1, l2, m1, m2):
    u = band_state(family, l1, l2, band)
    w = band_state(family, m1, m2, band)
    ov = np.einsum("...i,...i->...", u.conj(), w)
    return 1.0 - np.abs(ov) ** 2


def metric_overlap_fd(
    family: HamiltonianFamily, l1, l2, band: str = "ground", delta: float = 1e-4,
    symmetric: bool = True,
):
    """Metric from overlaps of eigenstates at displaced points.

    Uses the same algebra as the quench protocol: probes along e1, e2 and
    e1 + e2.  With ``symmetric`` the forward and backward probes are averaged,
    which cancels the odd-order term and makes the estimate O(delta^2).
    Returns ``(g11, g22, g12)``.
    """
    check_band(band)
    signs = (1.0, -1.0) if symmetric else (1.0,)
    p11 = p22 = p12 = 0.0
    for s in signs:
        d = s * delta
        p11 = p11 + _fidelity_loss(family, band, l1, l2, l1 + d, l2)
        p22 = p22 + _fidelity_loss(family, band, l1, l2, l1, l2 + d)
        p12 = p12 + _fidelity_loss(family, band, l1, l2, l1 + d, l2 + d)
    n = len(signs) * delta ** 2
    g11, g22 = p11 / n, p22 / n
    return g11, g22, (p12 / n - g11 - g22) / 2


def bloch_derivatives(family: HamiltonianFamily, l1, l2):
    """Unit Bloch vector and its two parameter derivatives."""
    vec = family.control(l1, l2)
    r = np.linalg.norm(vec, axis=-1, keepdims=True)
    if np.any(~(r > DEGENERACY_TOL)):
        raise DegeneratePoint("gap closes on the requested points")
    n = vec / r
    d1, d2 = family.control_derivatives(l1, l2)
    dn1 = (d1 - n * np.sum(n * d1, -1, keepdims=True)) / r
    dn2 = (d2 - n * np.sum(n * d2, -1, keepdims=True)) / r
    return n, dn1, dn2


def bloch_qgt(family: HamiltonianFamily, l1, l2, band: str = "ground") -> QGTValue:
    check_band(band)
    n, dn1, dn2 = bloch_derivatives(family, l1, l2)
    g11 = 0.25 * np.sum(dn1 * dn1, -1)
    g22 = 0.25 * np.sum(dn2 * dn2, -1)
    g12 = 0.25 * np.sum(dn1 * dn2, -1)
    sign = -0.5 if band == "ground" else 0.5
    f12 = sign * np.sum(n * np.cross(dn1, dn2), -1)
    return QGTValue(g11=g11, g12=g12, g22=g22, f12=f12)


def bloch_sphere_closed_form(theta, band: str = "ground") -> QGTValue:
    theta = np.asarray(theta, dtype=float)
    s = np.sin(theta)
    sign = -0.5 if check_band(band) == "ground" else 0.5
    return QGTValue(
        g11=np.full_like(theta, 0.25), g12=np.zeros_like(theta), g22=s ** 2 / 4, f12=sign * s
    )


def trs_gap_function(h, alpha, kx):
    return (h + np.cos(kx)) ** 2 + alpha ** 2 * np.sin(kx) ** 2


def trs_sqrt_det_g_closed_form(h, alpha, kx, oriented: bool = False, tol: float = DEGENERACY_TOL):
    """``sqrt(det g)`` of the TRS band model, independent of ky.

    ``alpha^2 |(1 + h cos kx) sin kx| / (4 f^{3/2})`` with
    ``f = (h + cos kx)^2 + alpha^2 sin^2 kx``.  With ``oriented`` the factor
    ``(1 + h cos kx)`` keeps its sign, giving the oriented area density of the
    Bloch-vector map (it changes sign across fold lines ``cos kx = -1/h``).
    """
    kx = np.asarray(kx, dtype=float)
    f = trs_gap_function(h, alpha, kx)
    if np.any(~(f > tol ** 2)):
        raise DegeneratePoint(f"gap closes for h={h}", h=float(h))
    fold = 1 + h * np.cos(kx)
    if not oriented:
        fold = np.abs(fold)
    return alpha ** 2 * fold * np.abs(np.sin(kx)) / (4 * f ** 1.5)
