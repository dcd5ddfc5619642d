"""WGS-84 geodetic <-> local North-East-Down conversions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)


@dataclass(frozen=True)
class FrameOrigin:
    """Geodetic anchor of the local NED frame (degrees, degrees, metres)."""

    lat0: float
    lon0: float
    alt0: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.lat0 <= 90.0:
            raise ValueError(f"lat0 out of range: {self.lat0}")
        if not -180.0 <= self.lon0 <= 180.0:
            raise ValueError(f"lon0 out of range: {self.lon0}")
        if not math.isfinite(self.alt0):
            raise ValueError("alt0 must be finite")

    def to_document(self) -> dict:
        return {"lat0": self.lat0, "lon0": self.lon0, "alt0": self.alt0}


def geodetic_to_ecef(lat: float, lon: float, alt: float) -> np.ndarray:
    phi, lam = math.radians(lat), math.radians(lon)
    sphi, cphi = math.sin(phi), math.cos(phi)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sphi * sphi)
    return np.array([
        (n + alt) * cphi * math.cos(lam),
        (n + alt) * cphi * math.sin(lam),
        (n * (1.0 - WGS84_E2) + alt) * sphi,
    ])


def ecef_to_geodetic(xyz) -> tuple:
    x, y, z = (float(c) for c in xyz)
    lon = math.atan2(y, x)
    p = math.hypot(x, y)
    lat = math.atan2(z, p * (1.0 - WGS84_E2))
    alt = 0.0
    for _ in range(50):
        s = math.sin(lat)
        n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * s * s)
        if abs(math.cos(lat)) > 1e-10:
            alt = p / math.cos(lat) - n
        else:
            alt = abs(z) - n * (1.0 - WGS84_E2)
        new = math.atan2(z, p * (1.0 - WGS84_E2 * n / (n + alt)))
        if abs(new - lat) < 1e-15:
            lat = new
            break
        lat = new
    return math.degrees(lat), math.degrees(lon), alt


def _ecef_to_ned_matrix(lat: float, lon: float) -> np.ndarray:
    phi, lam = math.radians(lat), math.radians(lon)
    sp, cp, sl, cl = math.sin(phi), math.cos(phi), math.sin(lam), math.cos(lam)
    return np.array([
        [-sp * cl, -sp * sl, cp],
        [-sl, cl, 0.0],
        [-cp * cl, -cp * sl, -sp],
    ])


def geodetic_to_ned(lat: float, lon: float, alt: float, origin: FrameOrigin) -> np.ndarray:
    d = geodetic_to_ecef(lat, lon, alt) - geodetic_to_ecef(origin.lat0, origin.lon0, origin.alt0)
    return _ecef_to_ned_matrix(origin.lat0, origin.lon0) @ d


def ned_to_geodetic(ned, origin: FrameOrigin) -> tuple:
    r = _ecef_to_ned_matrix(origin.lat0, origin.lon0)
    xyz = geodetic_to_ecef(origin.lat0, origin.lon0, origin.alt0) + r.T @ np.asarray(ned, dtype=float)
    return ecef_to_geodetic(xyz)
