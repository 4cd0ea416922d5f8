"""Topological invariants from sampled geometric tensors.

Grids are cell-centred (midpoint) samples of a 2D parameter domain.  Each
axis has a boundary kind used when finite-differencing the metric:

``periodic``  the axis wraps (phi, k_x, k_y);
``pole``      polar angle on [0, pi] whose end rows collapse to points; the
              ghost row across a pole is the first row shifted by half a
              turn in the (periodic) second axis, with g12 negated;
``open``      one-sided quadratic extrapolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegeneratePoint, GridTooCoarse, SingularMetric
from .model import HamiltonianFamily, band_state, check_band

BOUNDARIES = ("periodic", "pole", "open")
REFINEMENT_TOL = 0.05
SINGULAR_DET = 1e-12


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    n: int
    boundary: str = "periodic"

    def __post_init__(self):
        if self.boundary not in BOUNDARIES:
            raise ConfigError(f"unknown axis boundary {self.boundary!r}")
        if self.n < 2 or not self.hi > self.lo:
            raise ConfigError("axis needs n >= 2 and hi > lo")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.n

    @property
    def nodes(self) -> np.ndarray:
        return self.lo + (np.arange(self.n) + 0.5) * self.spacing


@dataclass(frozen=True)
class GridSpec:
    axis1: Axis
    axis2: Axis

    def __post_init__(self):
        if self.axis2.boundary == "pole":
            raise ConfigError("only the first axis may be a polar axis")
        if self.axis1.boundary == "pole":
            if self.axis2.boundary != "periodic" or self.axis2.n % 2:
                raise ConfigError("a polar first axis needs a periodic second axis with even count")
            if not math.isclose(self.axis2.hi - self.axis2.lo, 2 * math.pi):
                raise ConfigError("a polar first axis needs the second axis to span 2*pi")

    @property
    def shape(self) -> tuple:
        return (self.axis1.n, self.axis2.n)

    def mesh(self):
        return np.meshgrid(self.axis1.nodes, self.axis2.nodes, indexing="ij")

    @property
    def cell_area(self) -> float:
        return self.axis1.spacing * self.axis2.spacing

    def to_dict(self) -> dict:
        return {
            f"axis{i}": {"lo": a.lo, "hi": a.hi, "n": a.n, "boundary": a.boundary}
            for i, a in ((1, self.axis1), (2, self.axis2))
        }


def sphere_grid(n_theta: int, n_phi: int) -> GridSpec:
    return GridSpec(Axis(0.0, math.pi, n_theta, "pole"), Axis(0.0, 2 * math.pi, n_phi, "periodic"))


def torus_grid(n1: int, n2: int) -> GridSpec:
    return GridSpec(Axis(0.0, 2 * math.pi, n1, "periodic"), Axis(0.0, 2 * math.pi, n2, "periodic"))


@dataclass(frozen=True)
class MetricGrid:
    spec: GridSpec
    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray
    provenance: str = "oracle"

    def __post_init__(self):
        for a in (self.g11, self.g12, self.g22):
            if np.shape(a) != self.spec.shape:
                raise ConfigError(f"metric array shape {np.shape(a)} != grid shape {self.spec.shape}")
        if min(self.spec.shape) < 8:
            raise ConfigError("metric grids need at least 8 nodes per axis")

    @property
    def det_g(self) -> np.ndarray:
        return self.g11 * self.g22 - self.g12 ** 2

    @property
    def sqrt_det_g(self) -> np.ndarray:
        return np.sqrt(np.clip(self.det_g, 0.0, None))


@dataclass(frozen=True)
class CurvatureGrid:
    spec: GridSpec
    f12: np.ndarray
    provenance: str = "oracle"

    def __post_init__(self):
        if np.shape(self.f12) != self.spec.shape:
            raise ConfigError("curvature array does not match grid shape")
        if not np.all(np.isfinite(self.f12)):
            raise ConfigError("curvature grid contains non-finite values")


@dataclass(frozen=True)
class InvariantEstimate:
    value: float
    refinement_delta: float = float("nan")
    flags: tuple = field(default_factory=tuple)

    @property
    def error_bar(self) -> float:
        return 0.5 * self.refinement_delta


def _pad(arr: np.ndarray, spec: GridSpec, odd: bool = False, layers: int = 1) -> np.ndarray:
    """Pad ghost layers on every side according to the axis boundaries.

    ``odd`` marks quantities that change sign under the pole reflection
    (mixed components such as g12, and densities like sqrt(det g)).
    """
    a1, a2 = spec.axis1, spec.axis2
    k = layers
    if a1.boundary == "periodic":
        arr = np.concatenate([arr[-k:], arr, arr[:k]], axis=0)
    elif a1.boundary == "pole":
        half = a2.n // 2
        sign = -1.0 if odd else 1.0
        lo = sign * np.roll(arr[:k][::-1], half, axis=1)
        hi = sign * np.roll(arr[-k:][::-1], half, axis=1)
        arr = np.concatenate([lo, arr, hi], axis=0)
    else:
        for _ in range(k):
            lo = 3 * arr[:1] - 3 * arr[1:2] + arr[2:3]
            hi = 3 * arr[-1:] - 3 * arr[-2:-1] + arr[-3:-2]
            arr = np.concatenate([lo, arr, hi], axis=0)
    if a2.boundary == "periodic":
        arr = np.concatenate([arr[:, -k:], arr, arr[:, :k]], axis=1)
    else:
        for _ in range(k):
            lo = 3 * arr[:, :1] - 3 * arr[:, 1:2] + arr[:, 2:3]
            hi = 3 * arr[:, -1:] - 3 * arr[:, -2:-1] + arr[:, -3:-2]
            arr = np.concatenate([lo, arr, hi], axis=1)
    return arr


def _d1(p: np.ndarray, hu: float, hv: float):
    du = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2 * hu)
    dv = (p[1:-1, 2:] - p[1:-1, :-2]) / (2 * hv)
    return du, dv


def _brioschi(mg: MetricGrid) -> np.ndarray:
    spec = mg.spec
    hu, hv = spec.axis1.spacing, spec.axis2.spacing
    E, F, G = mg.g11, mg.g12, mg.g22
    pE, pF, pG = _pad(E, spec), _pad(F, spec, odd=True), _pad(G, spec)
    Eu, Ev = _d1(pE, hu, hv)
    Fu, Fv = _d1(pF, hu, hv)
    Gu, Gv = _d1(pG, hu, hv)
    Evv = (pE[1:-1, 2:] - 2 * E + pE[1:-1, :-2]) / hv ** 2
    Guu = (pG[2:, 1:-1] - 2 * G + pG[:-2, 1:-1]) / hu ** 2
    Fuv = (pF[2:, 2:] - pF[2:, :-2] - pF[:-2, 2:] + pF[:-2, :-2]) / (4 * hu * hv)

    def det3(m):
        return np.linalg.det(np.moveaxis(np.array(m), (0, 1), (-2, -1)))

    zero = np.zeros_like(E)
    m1 = [[-Evv / 2 + Fuv - Guu / 2, Eu / 2, Fu - Ev / 2], [Fv - Gu / 2, E, F], [Gv / 2, F, G]]
    m2 = [[zero, Ev / 2, Gu / 2], [Ev / 2, E, F], [Gu / 2, F, G]]
    return (det3(m1) - det3(m2)) / (E * G - F ** 2) ** 2


def _curvature_density(mg: MetricGrid) -> np.ndarray:
    # K sqrt(g) = (d_u A + d_v B) / 2 with
    #   A = (F E_v - E G_u) / (E sqrt g),  B = (2 E F_u - E E_v - F E_u) / (E sqrt g)
    spec = mg.spec
    hu, hv = spec.axis1.spacing, spec.axis2.spacing
    pE = _pad(mg.g11, spec, layers=2)
    pF = _pad(mg.g12, spec, odd=True, layers=2)
    pG = _pad(mg.g22, spec, layers=2)
    root = np.sqrt(np.clip(pE * pG - pF ** 2, 0.0, None))
    if spec.axis1.boundary == "pole":
        root[:2] *= -1
        root[-2:] *= -1
    Eu, Ev = _d1(pE, hu, hv)
    Fu, Fv = _d1(pF, hu, hv)
    Gu, Gv = _d1(pG, hu, hv)
    E, F, r = pE[1:-1, 1:-1], pF[1:-1, 1:-1], root[1:-1, 1:-1]
    A = (F * Ev - E * Gu) / (E * r)
    B = (2 * E * Fu - E * Ev - F * Eu) / (E * r)
    dA = (A[2:, 1:-1] - A[:-2, 1:-1]) / (2 * hu)
    dB = (B[1:-1, 2:] - B[1:-1, :-2]) / (2 * hv)
    return 0.5 * (dA + dB)


def gaussian_curvature(mg: MetricGrid, method: str = "divergence") -> np.ndarray:
    """Gaussian curvature at every node.

    ``divergence`` differentiates Christoffel-symbol fluxes and stays
    accurate next to coordinate poles; ``brioschi`` is the textbook formula,
    which loses accuracy there through cancellation.
    """
    if method == "brioschi":
        return _brioschi(mg)
    if method != "divergence":
        raise ConfigError(f"unknown curvature method {method!r}")
    return _curvature_density(mg) / mg.sqrt_det_g


def _euler_value(mg: MetricGrid, method: str) -> float:
    det = mg.det_g
    if np.any(det < SINGULAR_DET):
        i, j = np.unravel_index(np.argmin(det), det.shape)
        raise SingularMetric(
            f"det g = {det[i, j]:.3g} below {SINGULAR_DET:g}", node=[int(i), int(j)]
        )
    if method == "divergence":
        density = _curvature_density(mg)
    else:
        density = gaussian_curvature(mg, method) * np.sqrt(det)
    return float(2 * np.sum(density) * mg.spec.cell_area / (4 * math.pi))


def euler_characteristic_estimate(
    mg: MetricGrid, coarse: MetricGrid | None = None, check: bool = True,
    method: str = "divergence",
) -> InvariantEstimate:
    """Euler characteristic plus the change against an independently sampled
    grid at half the resolution (``coarse``), when one is supplied."""
    chi = _euler_value(mg, method)
    delta = float("nan")
    if coarse is not None:
        delta = abs(chi - _euler_value(coarse, method))
        if check and delta > REFINEMENT_TOL:
            raise GridTooCoarse(f"Euler characteristic changes by {delta:.3g} under refinement",
                                chi=chi, delta=delta)
    return InvariantEstimate(chi, delta)


def euler_characteristic(mg: MetricGrid, coarse: MetricGrid | None = None, check: bool = True,
                         method: str = "divergence") -> float:
    """Gauss-Bonnet integral ``(1/4pi) sum R sqrt(det g) dA`` with ``R = 2K``."""
    return euler_characteristic_estimate(mg, coarse, check, method).value


def _periodic_trapezoid(y: np.ndarray, x: np.ndarray, period: float) -> float:
    order = np.argsort(x)
    x, y = x[order], y[order]
    xs = np.append(x, x[0] + period)
    ys = np.append(y, y[0])
    return float(np.trapezoid(ys, xs))


def euler_trs_reduced_estimate(
    h: float, alpha: float, kx, sqrt_det_g=None, oriented: bool = True,
) -> InvariantEstimate:
    """``chi = 4 * int_0^{2pi} sqrt(det g) dkx`` for the TRS band model.

    ``kx`` are samples on one period; ``sqrt_det_g`` (unsigned, e.g. from a
    measured grid) defaults to the closed form.  With ``oriented`` the density
    takes the sign of ``1 + h cos kx``, the orientation of the Bloch-vector
    map, so folded coverings cancel; without it the literal unsigned area is
    integrated (nonzero for |h| > 1).
    """
    from .oracle import trs_sqrt_det_g_closed_form

    if abs(h) == 1.0:
        raise DegeneratePoint("gap closes on the k_x line at |h| = 1", h=float(h))
    kx = np.asarray(kx, dtype=float)
    if sqrt_det_g is None:
        density = trs_sqrt_det_g_closed_form(h, alpha, kx)
    else:
        density = np.asarray(sqrt_det_g, dtype=float)
    if oriented:
        density = np.sign(1 + h * np.cos(kx)) * density
    chi = 4 * _periodic_trapezoid(density, kx, 2 * math.pi)
    delta = float("nan")
    if len(kx) >= 16 and len(kx) % 2 == 0:
        order = np.argsort(kx)
        sub = order[::2]
        delta = abs(chi - 4 * _periodic_trapezoid(density[sub], kx[sub], 2 * math.pi))
    flags = ("near_transition",) if abs(abs(h) - 1) < 0.1 else ()
    return InvariantEstimate(chi, delta, flags)


def euler_trs_reduced(h: float, alpha: float, kx, sqrt_det_g=None, oriented: bool = True) -> float:
    return euler_trs_reduced_estimate(h, alpha, kx, sqrt_det_g, oriented).value


def _chern_value(cg: CurvatureGrid) -> float:
    return float(np.sum(cg.f12) * cg.spec.cell_area / (2 * math.pi))


def chern_number_estimate(
    cg: CurvatureGrid, coarse: CurvatureGrid | None = None, check: bool = True
) -> InvariantEstimate:
    c = _chern_value(cg)
    delta = float("nan")
    if coarse is not None:
        delta = abs(c - _chern_value(coarse))
        if check and delta > REFINEMENT_TOL:
            raise GridTooCoarse(f"Chern number changes by {delta:.3g} under refinement",
                                chern=c, delta=delta)
    return InvariantEstimate(c, delta)


def chern_number(cg: CurvatureGrid, coarse: CurvatureGrid | None = None, check: bool = True) -> float:
    """``(1/2pi) sum F dA`` over the grid."""
    return chern_number_estimate(cg, coarse, check).value


def chern_plaquette(family: HamiltonianFamily, spec: GridSpec, band: str = "ground") -> int:
    """Lattice Chern number from products of normalized link overlaps.

    Nodes sit on cell corners: a polar axis includes both poles, a periodic
    axis wraps.  Each plaquette phase lies in (-pi, pi], so the sum is an
    exact multiple of 2pi whenever the grid resolves the curvature.
    """
    check_band(band)
    a1, a2 = spec.axis1, spec.axis2
    if a1.boundary == "open" or a2.boundary != "periodic":
        raise ConfigError("plaquette Chern number needs a closed (sphere or torus) grid")
    if a1.boundary == "pole":
        x1 = np.linspace(a1.lo, a1.hi, a1.n + 1)
    else:
        x1 = a1.lo + np.arange(a1.n) * a1.spacing
    x2 = a2.lo + np.arange(a2.n) * a2.spacing
    L1, L2 = np.meshgrid(x1, x2, indexing="ij")
    try:
        u = band_state(family, L1, L2, band)
    except DegeneratePoint as exc:
        raise exc.with_context(family=family.label)
    if a1.boundary == "periodic":
        u_next1 = np.roll(u, -1, axis=0)
    else:
        u_next1 = u[1:]
        u = u[:-1]
    u_next2 = np.roll(u, -1, axis=1)
    u_next12 = np.roll(u_next1, -1, axis=1)

    def link(a, b):
        ov = np.einsum("...i,...i->...", a.conj(), b)
        return ov / np.abs(ov)

    loop = link(u, u_next1) * link(u_next1, u_next12) * link(u_next12, u_next2) * link(u_next2, u)
    total = np.sum(np.angle(loop)) / (2 * math.pi)
    return int(round(total))
