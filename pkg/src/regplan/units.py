"""Unit conversion helpers.

All internal computation is metric (meters, seconds, radians).  Speed
limits in regulation records and scenario configs are quoted in mph and
school-zone distances in feet, matching how the source statutes are
written, so the conversions live in one place.
"""

from __future__ import annotations

MPS_PER_MPH = 0.44704  # exact by definition
M_PER_FT = 0.3048      # exact by definition


def mph_to_mps(mph: float) -> float:
    return mph * MPS_PER_MPH


def mps_to_mph(mps: float) -> float:
    return mps / MPS_PER_MPH


def ft_to_m(ft: float) -> float:
    return ft * M_PER_FT


def m_to_ft(m: float) -> float:
    return m / M_PER_FT
