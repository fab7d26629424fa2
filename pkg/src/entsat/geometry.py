"""Overpass geometry for one satellite and two optical ground stations.

Spherical Earth, circular orbit, no Earth rotation during a pass. An
overpass is parameterised by where and at what angle the satellite ground
track crosses the great circle through the two stations (the baseline):
offset ``delta_km`` from the baseline midpoint (positive towards station A)
and crossing angle ``phi_rad`` measured from the A-to-B direction towards
local South. ``t = 0`` is the crossing instant.

All computations are done in a canonical frame with the baseline on the
equator, midpoint at longitude 0 and station A to the West.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .constants import EARTH_RADIUS_KM, MU_EARTH_KM3_S2

_BISECT_TOL_S = 1e-3


@dataclass(frozen=True)
class GroundStation:
    """Station position on the sphere (radians)."""

    lat_rad: float
    lon_rad: float

    def __post_init__(self):
        if abs(self.lat_rad) > math.pi / 2:
            raise ValueError(f"latitude out of range: {self.lat_rad}")
        # normalize longitude to (-pi, pi]
        lon = math.remainder(self.lon_rad, 2 * math.pi)
        if lon <= -math.pi:
            lon += 2 * math.pi
        object.__setattr__(self, "lon_rad", lon)

    @classmethod
    def from_degrees(cls, lat_deg: float, lon_deg: float) -> "GroundStation":
        return cls(math.radians(lat_deg), math.radians(lon_deg))

    def unit_vector(self) -> np.ndarray:
        cl = math.cos(self.lat_rad)
        return np.array(
            [
                cl * math.cos(self.lon_rad),
                cl * math.sin(self.lon_rad),
                math.sin(self.lat_rad),
            ]
        )


def great_circle_distance_km(a: GroundStation, b: GroundStation) -> float:
    """Arc length between two stations along the great circle."""
    cosang = float(np.clip(np.dot(a.unit_vector(), b.unit_vector()), -1.0, 1.0))
    return EARTH_RADIUS_KM * math.acos(cosang)


@dataclass(frozen=True)
class OverpassSpec:
    """One pass over a station pair.

    baseline_km: arc length d between the stations.
    altitude_km: circular orbit altitude h.
    delta_km: crossing offset from the baseline midpoint, positive towards A.
    phi_rad: crossing angle from the A-to-B direction towards South.
    min_elevation_rad: dual-visibility elevation threshold.
    """

    baseline_km: float
    altitude_km: float
    delta_km: float = 0.0
    phi_rad: float = 0.0
    min_elevation_rad: float = math.radians(10.0)

    def __post_init__(self):
        if self.baseline_km <= 0:
            raise ValueError("baseline_km must be positive")
        if self.altitude_km <= 0:
            raise ValueError("altitude_km must be positive")
        if not 0 <= self.min_elevation_rad < math.pi / 2:
            raise ValueError("min_elevation_rad must be in [0, pi/2)")
        object.__setattr__(self, "phi_rad", self.phi_rad % (2 * math.pi))

    def canonical(self) -> "OverpassSpec":
        """Fold phi into [0, pi) using the time-reversal symmetry.

        (delta, phi + pi) traces the same ground track backwards, and
        (-delta, pi - phi) is the A/B mirror image; outputs that do not
        distinguish the stations or the traversal direction are invariant.
        """
        phi = self.phi_rad % (2 * math.pi)
        if phi >= math.pi:
            phi -= math.pi
        return replace(self, phi_rad=phi)


@dataclass(frozen=True)
class LinkSample:
    """Instantaneous geometry of both downlinks."""

    t_s: float
    slant_a_km: float
    slant_b_km: float
    elevation_a_rad: float
    elevation_b_rad: float
    in_view_a: bool
    in_view_b: bool

    @property
    def in_dual_view(self) -> bool:
        return self.in_view_a and self.in_view_b


@dataclass(frozen=True)
class VisibilityWindow:
    t_start_s: float
    t_end_s: float

    @property
    def duration_s(self) -> float:
        return self.t_end_s - self.t_start_s


def orbital_rate(altitude_km: float) -> float:
    """Circular-orbit angular rate (rad/s)."""
    r = EARTH_RADIUS_KM + altitude_km
    return math.sqrt(MU_EARTH_KM3_S2 / r**3)


def orbital_period_s(altitude_km: float) -> float:
    return 2 * math.pi / orbital_rate(altitude_km)


def station_vectors(spec: OverpassSpec) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors of stations A and B in the canonical frame."""
    half = spec.baseline_km / (2 * EARTH_RADIUS_KM)
    a = np.array([math.cos(half), -math.sin(half), 0.0])
    b = np.array([math.cos(half), math.sin(half), 0.0])
    return a, b


def _track_frame(spec: OverpassSpec) -> tuple[np.ndarray, np.ndarray]:
    """Crossing point P and track direction v (unit tangent at P)."""
    lon = -spec.delta_km / EARTH_RADIUS_KM  # positive delta towards A (West)
    p = np.array([math.cos(lon), math.sin(lon), 0.0])
    east = np.array([-math.sin(lon), math.cos(lon), 0.0])
    south = np.array([0.0, 0.0, -1.0])
    v = math.cos(spec.phi_rad) * east + math.sin(spec.phi_rad) * south
    return p, v


def ground_track(spec: OverpassSpec, t_s) -> np.ndarray:
    """Sub-satellite unit vector(s) at time(s) t.

    Accepts a scalar or an array of times; returns shape (3,) or (3, n).
    """
    p, v = _track_frame(spec)
    ang = orbital_rate(spec.altitude_km) * np.asarray(t_s)
    return np.multiply.outer(p, np.cos(ang)) + np.multiply.outer(v, np.sin(ang))


def elevation_slant(
    sat_point: np.ndarray, ogs_point: np.ndarray, altitude_km: float
):
    """Elevation (rad) and slant range (km) from station to satellite.

    Spherical-triangle relations for central angle beta between the
    sub-satellite point and the station:
        L = sqrt(R^2 + (R+h)^2 - 2 R (R+h) cos(beta))
        sin(theta) = ((R+h) cos(beta) - R) / L
    Elevation is negative below the horizon. Vectorises over trailing axes.
    """
    if altitude_km <= 0:
        raise ValueError("altitude_km must be positive")
    r = EARTH_RADIUS_KM
    rs = r + altitude_km
    cosb = np.clip(np.tensordot(ogs_point, sat_point, axes=([0], [0])), -1.0, 1.0)
    slant = np.sqrt(r**2 + rs**2 - 2 * r * rs * cosb)
    theta = np.arcsin(np.clip((rs * cosb - r) / slant, -1.0, 1.0))
    return theta, slant


def max_central_angle(altitude_km: float, min_elevation_rad: float) -> float:
    """Largest station-to-ground-track central angle with elevation >= min."""
    r = EARTH_RADIUS_KM
    return (
        math.acos(r / (r + altitude_km) * math.cos(min_elevation_rad))
        - min_elevation_rad
    )


def link_sample(spec: OverpassSpec, t_s: float) -> LinkSample:
    a, b = station_vectors(spec)
    sat = ground_track(spec, t_s)
    th_a, l_a = elevation_slant(sat, a, spec.altitude_km)
    th_b, l_b = elevation_slant(sat, b, spec.altitude_km)
    return LinkSample(
        t_s=float(t_s),
        slant_a_km=float(l_a),
        slant_b_km=float(l_b),
        elevation_a_rad=float(th_a),
        elevation_b_rad=float(th_b),
        in_view_a=bool(th_a >= spec.min_elevation_rad),
        in_view_b=bool(th_b >= spec.min_elevation_rad),
    )


def _dual_elevation_margin(spec, times, a, b):
    sat = ground_track(spec, times)
    th_a, _ = elevation_slant(sat, a, spec.altitude_km)
    th_b, _ = elevation_slant(sat, b, spec.altitude_km)
    return np.minimum(th_a, th_b) - spec.min_elevation_rad


def visibility_window(
    spec: OverpassSpec,
    ogs_a: np.ndarray | None = None,
    ogs_b: np.ndarray | None = None,
) -> VisibilityWindow | None:
    """Maximal contiguous dual-visibility interval nearest t = 0.

    Returns None when both elevations never simultaneously reach the
    minimum. Endpoints are refined by bisection to 1 ms.
    """
    if ogs_a is None or ogs_b is None:
        ogs_a, ogs_b = station_vectors(spec)
    p, _ = _track_frame(spec)
    beta_max = max_central_angle(spec.altitude_km, spec.min_elevation_rad)
    reach = beta_max + max(
        math.acos(float(np.clip(np.dot(p, ogs_a), -1, 1))),
        math.acos(float(np.clip(np.dot(p, ogs_b), -1, 1))),
    )
    omega = orbital_rate(spec.altitude_km)
    t_hor = min(reach / omega, math.pi / omega)  # at most half an orbit

    step = min(1.0, 2 * t_hor / 400)
    times = np.arange(-t_hor, t_hor + step, step)
    margin = _dual_elevation_margin(spec, times, ogs_a, ogs_b)
    pos = margin > 0
    if not pos.any():
        return None

    # contiguous runs of positive margin
    edges = np.flatnonzero(np.diff(pos.astype(np.int8)))
    starts = [0] if pos[0] else []
    ends = []
    for e in edges:
        if pos[e + 1]:
            starts.append(e + 1)
        else:
            ends.append(e)
    if pos[-1]:
        ends.append(len(times) - 1)

    def bisect(lo, hi):
        # sign change bracketed in [lo, hi]
        flo = float(_dual_elevation_margin(spec, np.array([lo]), ogs_a, ogs_b)[0])
        while hi - lo > _BISECT_TOL_S:
            mid = 0.5 * (lo + hi)
            fm = float(_dual_elevation_margin(spec, np.array([mid]), ogs_a, ogs_b)[0])
            if (fm > 0) == (flo > 0):
                lo, flo = mid, fm
            else:
                hi = mid
        return 0.5 * (lo + hi)

    runs = []
    for s, e in zip(starts, ends):
        t0 = times[s] if s == 0 else bisect(times[s - 1], times[s])
        t1 = times[e] if e == len(times) - 1 else bisect(times[e], times[e + 1])
        runs.append(VisibilityWindow(t0, t1))

    def dist_to_zero(w):
        if w.t_start_s <= 0 <= w.t_end_s:
            return 0.0
        return min(abs(w.t_start_s), abs(w.t_end_s))

    return min(runs, key=dist_to_zero)


def dmin_per_ogs(spec: OverpassSpec, station: str) -> float:
    """Minimum great-circle distance (km) from a station to the ground track.

    station: "a" or "b".
    """
    a, b = station_vectors(spec)
    ogs = {"a": a, "b": b}[station.lower()]
    p, v = _track_frame(spec)
    normal = np.cross(p, v)
    normal /= np.linalg.norm(normal)
    return EARTH_RADIUS_KM * abs(math.asin(float(np.clip(np.dot(ogs, normal), -1, 1))))
