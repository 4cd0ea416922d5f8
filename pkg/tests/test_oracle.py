import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qgtlab import model
from qgtlab.errors import DegeneratePoint
from qgtlab.oracle import (
    bloch_qgt,
    bloch_sphere_closed_form,
    metric_overlap_fd,
    qgt_spectral,
    spectral_from_states,
    trs_sqrt_det_g_closed_form,
)

polar = st.floats(0.05, math.pi - 0.05)
angle = st.floats(0, 2 * math.pi)
band = st.sampled_from(model.BANDS)
hval = st.sampled_from([-1.7, -0.6, 0.0, 0.3, 0.8, 1.4, 2.0])


def _routes_agree(fam, l1, l2, b, tol=1e-5):
    s = qgt_spectral(fam, l1, l2, b)
    q = bloch_qgt(fam, l1, l2, b)
    g11, g22, g12 = metric_overlap_fd(fam, l1, l2, b)
    for x, y in ((s.g11, q.g11), (s.g22, q.g22), (s.g12, q.g12), (s.f12, q.f12)):
        assert abs(x - y) < 1e-12
    for x, y in ((s.g11, g11), (s.g22, g22), (s.g12, g12)):
        assert abs(x - y) < tol


@given(polar, angle, band)
def test_routes_agree_on_sphere(theta, phi, b):
    _routes_agree(model.bloch_sphere(), theta, phi, b)


@given(angle, angle, hval, band)
def test_routes_agree_on_trs_band(kx, ky, h, b):
    _routes_agree(model.trs_band(h), kx, ky, b)


@given(polar, angle)
def test_routes_agree_on_skewed_custom_family(l1, l2):
    def skew(a, b):
        return np.sin(a) * np.cos(a + b), np.sin(a) * np.sin(a + b), np.cos(a)

    _routes_agree(model.custom(skew), l1, l2, "ground")


def test_forward_only_overlap_is_first_order():
    fam = model.bloch_sphere()
    ref = qgt_spectral(fam, 0.7, 0.0)
    g11, _, _ = metric_overlap_fd(fam, 0.7, 0.0, delta=1e-3, symmetric=False)
    g11s, _, _ = metric_overlap_fd(fam, 0.7, 0.0, delta=1e-3)
    assert abs(g11s - ref.g11) < abs(g11 - ref.g11)


@given(polar, angle, band)
def test_sphere_closed_form(theta, phi, b):
    q = qgt_spectral(model.bloch_sphere(), theta, phi, b)
    ref = bloch_sphere_closed_form(theta, b)
    for x, y in zip(q.as_tuple(), ref.as_tuple()):
        assert abs(x - y) < 1e-9
    # monopole relation |F| = 2 sqrt(det g), sign set by the band
    sign = -1 if b == "ground" else 1
    assert q.f12 == pytest.approx(sign * 2 * q.sqrt_det_g, abs=1e-9)


@given(angle, angle, hval)
def test_bands_share_metric_and_flip_curvature(kx, ky, h):
    fam = model.trs_band(h)
    g, e = qgt_spectral(fam, kx, ky, "ground"), qgt_spectral(fam, kx, ky, "excited")
    assert np.allclose([g.g11, g.g22, g.g12], [e.g11, e.g22, e.g12], atol=1e-14)
    assert g.f12 == pytest.approx(-e.f12, abs=1e-14)


@given(angle, angle, hval, band)
def test_metric_positive_semidefinite(kx, ky, h, b):
    q = qgt_spectral(model.trs_band(h), kx, ky, b)
    assert q.g11 >= 0 and q.g22 >= 0
    assert q.det_g >= -1e-15
    # |F| <= 2 sqrt(det g) holds with equality for two levels
    assert abs(q.f12) == pytest.approx(2 * q.sqrt_det_g, abs=1e-9)


@given(angle, angle, st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_gauge_invariance(kx, ky, a, b):
    fam = model.trs_band(0.4)
    vec = fam.control(kx, ky)
    em, ep, um, up = model.eigenstates(vec)
    d1, d2 = fam.control_derivatives(kx, ky)
    ref = spectral_from_states(d1, d2, ep - em, um, up)
    rot = spectral_from_states(d1, d2, ep - em, um * np.exp(1j * a), up * np.exp(1j * b))
    for x, y in zip(ref.as_tuple(), rot.as_tuple()):
        assert abs(x - y) < 1e-13


def test_trs_closed_form_matches_bloch_route():
    kx = np.linspace(0.01, 2 * math.pi - 0.01, 301)
    for h in (-1.5, -0.5, 0.0, 0.5, 1.25, 2.0):
        fam = model.trs_band(h)
        q = bloch_qgt(fam, kx, 0.37)
        assert np.allclose(q.sqrt_det_g, trs_sqrt_det_g_closed_form(h, 0.5, kx), atol=1e-10)


def test_trs_closed_form_value():
    # h = 0, kx = pi/2: alpha^2 / (4 alpha^3) = 1 / (4 alpha)
    assert trs_sqrt_det_g_closed_form(0.0, 0.5, math.pi / 2) == pytest.approx(0.5)


def test_trs_area_integral_is_one_at_h0():
    kx = np.linspace(0, 2 * math.pi, 20001)
    dens = np.sqrt(np.clip(bloch_qgt(model.trs_band(0.0), kx, 0.0).det_g, 0, None))
    assert np.trapezoid(dens, kx) == pytest.approx(1.0, abs=1e-6)


def test_oriented_density_changes_sign_past_fold():
    # for |h| > 1 the factor 1 + h cos kx vanishes at cos kx = -1/h
    kx = np.arccos(-1 / 2.0)
    below = trs_sqrt_det_g_closed_form(2.0, 0.5, kx - 0.1, oriented=True)
    above = trs_sqrt_det_g_closed_form(2.0, 0.5, kx + 0.1, oriented=True)
    assert below * above < 0


def test_trs_closed_form_degenerate():
    with pytest.raises(DegeneratePoint):
        trs_sqrt_det_g_closed_form(1.0, 0.5, math.pi)


def test_curvature_antisymmetric_under_k_inversion():
    rng = np.random.default_rng(5)
    kx, ky = rng.uniform(0, 2 * math.pi, (2, 500))
    for h in (-0.5, 0.5, 1.5):
        f = qgt_spectral(model.trs_band(h), kx, ky).f12
        g = qgt_spectral(model.trs_band(h), -kx, -ky).f12
        assert np.max(np.abs(f + g)) < 1e-10


def test_bloch_route_degenerate():
    with pytest.raises(DegeneratePoint):
        bloch_qgt(model.trs_band(-1.0), 0.0, 0.0)
