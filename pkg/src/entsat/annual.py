"""Expected annual pair volume for a station pair under a polar orbit.

A polar, circular orbit approximates a Noon-Midnight Sun-synchronous one
for stations away from the poles. Per orbit, the ground track crosses the
baseline great circle near the stations once, at longitude gamma (relative
to the baseline midpoint meridian) and in either traversal direction; the
crossing fixes the overpass geometry and hence the per-pass volume.
Averaging over uniformly distributed gamma and both directions, keeping
night-side passes only, and scaling by orbits per year gives the annual
volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .constants import EARTH_RADIUS_KM, SECONDS_PER_YEAR
from .geometry import (
    GroundStation,
    OverpassSpec,
    max_central_angle,
    orbital_period_s,
)
from .linkbudget import OpticsParams
from .rates import (
    ProtocolParams,
    _best_split,
    _dddl_pdv,
    _ssqr_pdv,
    sample_pass,
)

_REACH_MARGIN_RAD = 0.02
_DEFAULT_GAMMA_SAMPLES = 720
_PASS_SAMPLES = 257

ALLOCATION_POLICIES = ("equal", "optimal-static")


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class OgsPair:
    """Two ground stations; A is the western one."""

    station_a: GroundStation
    station_b: GroundStation
    name: str = ""

    def __post_init__(self):
        if self.station_a == self.station_b:
            raise ValueError("stations must differ")
        # "A West of B": signed eastward longitude difference in (-pi, pi]
        dlon = math.remainder(self.station_b.lon_rad - self.station_a.lon_rad, 2 * math.pi)
        if dlon < 0:
            a, b = self.station_a, self.station_b
            object.__setattr__(self, "station_a", b)
            object.__setattr__(self, "station_b", a)

    @property
    def baseline_km(self) -> float:
        va, vb = self.station_a.unit_vector(), self.station_b.unit_vector()
        return EARTH_RADIUS_KM * math.acos(float(np.clip(np.dot(va, vb), -1, 1)))

    @property
    def midpoint(self) -> GroundStation:
        m = _unit(self.station_a.unit_vector() + self.station_b.unit_vector())
        return GroundStation(math.asin(float(m[2])), math.atan2(float(m[1]), float(m[0])))

    @property
    def phi_delta0_rad(self) -> float:
        """Crossing angle of the descending midpoint-meridian track."""
        spec = overpass_from_longitude(self, 0.0, 500.0, math.radians(10.0))
        assert spec is not None  # the midpoint meridian passes through M
        return spec.phi_rad


def overpass_from_longitude(
    pair: OgsPair,
    gamma_rad: float,
    altitude_km: float,
    min_elevation_rad: float,
    descending: bool = True,
) -> OverpassSpec | None:
    """Overpass geometry of the polar track at relative longitude gamma.

    Returns None when the track stays too far from the baseline midpoint
    for dual visibility to be possible at this altitude.
    """
    va = pair.station_a.unit_vector()
    vb = pair.station_b.unit_vector()
    mid = _unit(va + vb)
    n_ab = _unit(np.cross(va, vb))

    lon = pair.midpoint.lon_rad + gamma_rad
    meridian = np.array([math.cos(lon), math.sin(lon), 0.0])
    n_track = np.array([-math.sin(lon), math.cos(lon), 0.0])  # z_hat x meridian

    # reject tracks whose closest approach to the midpoint is out of reach
    beta_max = max_central_angle(altitude_km, min_elevation_rad)
    if abs(math.asin(float(np.clip(np.dot(mid, n_track), -1, 1)))) > beta_max + _REACH_MARGIN_RAD:
        return None

    cross = np.cross(n_ab, n_track)
    norm = np.linalg.norm(cross)
    if norm < 1e-12:  # baseline lies in a meridian plane; crossing undefined
        return None
    cross = cross / norm
    # gamma names the near half of the track (positive component along the
    # meridian direction); `descending` sets the traversal direction there
    if float(np.dot(cross, meridian)) < 0:
        cross = -cross

    # signed offset along the baseline, positive towards A
    t_ab = _unit(np.cross(n_ab, mid))  # baseline tangent at midpoint, towards B
    alpha = math.atan2(float(np.dot(cross, t_ab)), float(np.dot(cross, mid)))
    delta_km = -EARTH_RADIUS_KM * alpha

    # crossing angle from the local A-to-B direction towards South
    t_ab_c = _unit(np.cross(n_ab, cross))
    u_perp = np.cross(t_ab_c, cross)
    # track tangent: with cross = z cos(s) + meridian sin(s), the pole-to-pole
    # tangent is d/ds = -z sin(s) + meridian cos(s)
    sin_s = float(np.dot(cross, meridian))  # > 0 on the selected half
    cos_s = float(cross[2])
    w = -np.array([0.0, 0.0, 1.0]) * sin_s + meridian * cos_s
    if not descending:
        w = -w
    phi = math.atan2(float(np.dot(w, u_perp)), float(np.dot(w, t_ab_c))) % (2 * math.pi)

    return OverpassSpec(
        baseline_km=pair.baseline_km,
        altitude_km=altitude_km,
        delta_km=delta_km,
        phi_rad=phi,
        min_elevation_rad=min_elevation_rad,
    )


def night_pass_filter(spec: OverpassSpec) -> bool:
    """Keep one traversal direction only (midnight passes of a Noon-Midnight SSO)."""
    return 0 <= spec.phi_rad <= math.pi


@dataclass(frozen=True)
class AnnualResult:
    altitude_km: float
    mean_pass_pdv: float
    annual_pdv: float
    orbits_per_year: float


def _pass_pdv(spec, optics, params, protocol, allocation_policy, n_samples):
    profile = sample_pass(spec, optics, n_samples)
    if profile is None:
        return 0.0
    if protocol == "dddl":
        return _dddl_pdv(profile, params.source_rate_dddl)
    if protocol == "ssqr":
        if allocation_policy == "optimal-static":
            return _best_split(profile, params.n_sat, params.p_bsm)[2]
        n_a = params.n_sat // 2
        return _ssqr_pdv(profile, n_a, params.n_sat - n_a, params.p_bsm)
    raise ValueError(f"unknown protocol: {protocol!r}")


def annual_pdv(
    pair: OgsPair,
    altitude_km: float,
    optics: OpticsParams,
    params: ProtocolParams,
    protocol: str = "dddl",
    allocation_policy: str = "optimal-static",
    min_elevation_rad: float = math.radians(10.0),
    n_gamma: int = _DEFAULT_GAMMA_SAMPLES,
    n_pass_samples: int = _PASS_SAMPLES,
) -> AnnualResult:
    """Average per-orbit and annual pair volume over crossing longitudes."""
    if allocation_policy not in ALLOCATION_POLICIES:
        raise ValueError(f"unknown allocation policy: {allocation_policy!r}")
    gammas = np.linspace(0.0, 2 * math.pi, n_gamma, endpoint=False)
    # With no Earth synchronism the traversal direction of the crossing at a
    # given longitude is as likely north-to-south as south-to-north, and only
    # one of the two happens on the night side. Average over both directions
    # and let the night filter reject the daytime one.
    total = 0.0
    for gamma in gammas:
        for descending in (True, False):
            spec = overpass_from_longitude(
                pair, float(gamma), altitude_km, min_elevation_rad, descending
            )
            if spec is None or not night_pass_filter(spec):
                continue
            total += _pass_pdv(
                spec, optics, params, protocol, allocation_policy, n_pass_samples
            )
    mean_pass = total / (2 * n_gamma)
    orbits = SECONDS_PER_YEAR / orbital_period_s(altitude_km)
    return AnnualResult(
        altitude_km=altitude_km,
        mean_pass_pdv=mean_pass,
        annual_pdv=mean_pass * orbits,
        orbits_per_year=orbits,
    )


def altitude_sweep(
    pair: OgsPair,
    altitudes_km,
    optics: OpticsParams,
    params: ProtocolParams,
    protocol: str = "dddl",
    allocation_policy: str = "optimal-static",
    **kwargs,
) -> list[AnnualResult]:
    altitudes = list(altitudes_km)
    if not altitudes:
        raise ValueError("altitude grid must be nonempty")
    return [
        annual_pdv(pair, h, optics, params, protocol, allocation_policy, **kwargs)
        for h in altitudes
    ]


def optimal_altitude(results: list[AnnualResult]) -> AnnualResult:
    return max(results, key=lambda r: r.annual_pdv)


def load_station_catalog(path=None) -> dict[str, GroundStation]:
    """Read a plain-text station table: name, latitude (deg), longitude (deg)."""
    if path is None:
        text = resources.files("entsat").joinpath("data/cities.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    catalog = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, lat, lon = line.split()
        catalog[name] = GroundStation.from_degrees(float(lat), float(lon))
    return catalog


def pair_from_catalog(name_a: str, name_b: str, path=None) -> OgsPair:
    catalog = load_station_catalog(path)
    return OgsPair(catalog[name_a], catalog[name_b], name=f"{name_a}-{name_b}")
