"""Conversion between laboratory units and the internal unit system.

Internally the energy scale Omega is 1 and times are in units of 1/Omega.
The lab quotes Omega = 10 MHz; ``angular`` reads that as Omega/2pi = 10 MHz,
``cyclic`` as Omega = 10 rad/us.
"""

from __future__ import annotations

import math

OMEGA_MHZ = 10.0
CONVENTIONS = ("angular", "cyclic")


def omega_rad_per_ns(convention: str = "angular") -> float:
    if convention == "angular":
        return 2 * math.pi * OMEGA_MHZ * 1e-3
    if convention == "cyclic":
        return OMEGA_MHZ * 1e-3
    raise ValueError(f"unknown omega convention {convention!r}; expected one of {CONVENTIONS}")


def ns_to_internal(t_ns: float, convention: str = "angular") -> float:
    return t_ns * omega_rad_per_ns(convention)


def internal_to_ns(t: float, convention: str = "angular") -> float:
    return t / omega_rad_per_ns(convention)
