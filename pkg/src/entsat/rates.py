"""Pair distribution rates and per-pass volumes for both protocols.

DDDL: the source fires at a fixed rate and both photons must survive
their downlink, so the rate is eta_A * eta_B * R_source.

SSQR: each downlink is attempted once per classical round trip per memory
slot, so a register of N slots at transmittance eta generates confirmed
pairs at N * eta / (2 tau) on average (the mean of the per-round binomial
fill count divided by the round-trip time). The distributed rate is the
Bell-measurement success probability times the slower link's rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import SPEED_OF_LIGHT_KM_S
from .geometry import (
    LinkSample,
    OverpassSpec,
    VisibilityWindow,
    elevation_slant,
    ground_track,
    station_vectors,
    visibility_window,
)
from .linkbudget import (
    OpticsParams,
    atmospheric_eta,
    diffraction_eta,
    linear_from_db,
)

PDV_RTOL = 1e-6
_MAX_SAMPLES = 1 << 16


@dataclass(frozen=True)
class ProtocolParams:
    """Source, memory and swapping parameters shared by both protocols."""

    source_rate_dddl: float = 5.9e6
    n_sat: int = 200
    n_a: int | None = None
    n_b: int | None = None
    p_bsm: float = 0.5

    def __post_init__(self):
        if self.source_rate_dddl < 0:
            raise ValueError("source_rate_dddl must be nonnegative")
        if self.n_sat < 0:
            raise ValueError("n_sat must be nonnegative")
        if not 0 < self.p_bsm <= 1:
            raise ValueError("p_bsm must be in (0, 1]")
        if (self.n_a is None) != (self.n_b is None):
            raise ValueError("set both n_a and n_b or neither")
        if self.n_a is not None:
            if self.n_a < 0 or self.n_b < 0 or self.n_a + self.n_b != self.n_sat:
                raise ValueError("allocation must be nonnegative and sum to n_sat")

    @property
    def allocation(self) -> tuple[int, int]:
        if self.n_a is None:
            n_a = self.n_sat // 2
            return n_a, self.n_sat - n_a
        return self.n_a, self.n_b


@dataclass(frozen=True)
class RateSample:
    t_s: float
    dddl_rate: float
    link_rate_a: float
    link_rate_b: float
    ssqr_rate: float


@dataclass(frozen=True)
class PdvResult:
    pdv_pairs: float
    window: VisibilityWindow | None
    n_a: int | None = None
    n_b: int | None = None


def dddl_rate(eta_a, eta_b, source_rate: float):
    return eta_a * eta_b * source_rate


def ssqr_link_rate(n_slots: int, eta: float, tau_s: float) -> float:
    """Mean confirmed-pair rate of one multiplexed downlink.

    Closed form of the binomial expectation: N * eta / (2 tau).
    """
    if n_slots < 0:
        raise ValueError("n_slots must be nonnegative")
    if tau_s <= 0:
        raise ValueError("tau_s must be positive")
    return n_slots * eta / (2 * tau_s)


def unconstrained_link_rate(eta: float, attempt_rate: float) -> float:
    """Single-link rate when memory capacity imposes no attempt latency."""
    return eta * attempt_rate


def link_etas(sample: LinkSample, optics: OpticsParams) -> tuple[float, float]:
    intrinsic = float(linear_from_db(optics.intrinsic_loss_db))
    eta_a = (
        diffraction_eta(sample.slant_a_km, optics)
        * atmospheric_eta(sample.elevation_a_rad, optics.zenith_transmittance)
        * intrinsic
    )
    eta_b = (
        diffraction_eta(sample.slant_b_km, optics)
        * atmospheric_eta(sample.elevation_b_rad, optics.zenith_transmittance)
        * intrinsic
    )
    return eta_a, eta_b


def ssqr_rate(sample: LinkSample, optics: OpticsParams, params: ProtocolParams) -> float:
    eta_a, eta_b = link_etas(sample, optics)
    n_a, n_b = params.allocation
    tau_a = sample.slant_a_km / SPEED_OF_LIGHT_KM_S
    tau_b = sample.slant_b_km / SPEED_OF_LIGHT_KM_S
    return params.p_bsm * min(
        ssqr_link_rate(n_a, eta_a, tau_a), ssqr_link_rate(n_b, eta_b, tau_b)
    )


def rate_sample(sample: LinkSample, optics: OpticsParams, params: ProtocolParams) -> RateSample:
    eta_a, eta_b = link_etas(sample, optics)
    n_a, n_b = params.allocation
    r_a = ssqr_link_rate(n_a, eta_a, sample.slant_a_km / SPEED_OF_LIGHT_KM_S)
    r_b = ssqr_link_rate(n_b, eta_b, sample.slant_b_km / SPEED_OF_LIGHT_KM_S)
    return RateSample(
        t_s=sample.t_s,
        dddl_rate=dddl_rate(eta_a, eta_b, params.source_rate_dddl),
        link_rate_a=r_a,
        link_rate_b=r_b,
        ssqr_rate=params.p_bsm * min(r_a, r_b),
    )


@dataclass(frozen=True)
class PassProfile:
    """Channel time series over a dual-visibility window."""

    window: VisibilityWindow
    t_s: np.ndarray
    eta_a: np.ndarray
    eta_b: np.ndarray
    tau_a_s: np.ndarray
    tau_b_s: np.ndarray

    @property
    def slot_rate_a(self) -> np.ndarray:
        """Confirmed-pair rate per memory slot on the A link."""
        return self.eta_a / (2 * self.tau_a_s)

    @property
    def slot_rate_b(self) -> np.ndarray:
        return self.eta_b / (2 * self.tau_b_s)

    def integrate(self, rate: np.ndarray) -> float:
        return float(np.trapezoid(rate, self.t_s))


def sample_pass(
    spec: OverpassSpec, optics: OpticsParams, n_samples: int = 1024
) -> PassProfile | None:
    """Uniformly sample link transmittances and latencies over the window."""
    window = visibility_window(spec)
    if window is None:
        return None
    return _profile_for_window(spec, optics, window, n_samples)


def _profile_for_window(spec, optics, window, n_samples):
    t = np.linspace(window.t_start_s, window.t_end_s, n_samples)
    return profile_at_times(spec, optics, t, window)


def profile_at_times(spec, optics, t_s, window=None) -> PassProfile:
    """Channel transmittances and latencies at arbitrary sample times."""
    a, b = station_vectors(spec)
    t = np.asarray(t_s, dtype=float)
    sat = ground_track(spec, t)
    th_a, l_a = elevation_slant(sat, a, spec.altitude_km)
    th_b, l_b = elevation_slant(sat, b, spec.altitude_km)
    # endpoint elevations sit at theta_min to within the bisection tolerance
    th_a = np.maximum(th_a, spec.min_elevation_rad)
    th_b = np.maximum(th_b, spec.min_elevation_rad)
    intrinsic = float(linear_from_db(optics.intrinsic_loss_db))
    eta_a = (
        diffraction_eta(l_a, optics)
        * atmospheric_eta(th_a, optics.zenith_transmittance)
        * intrinsic
    )
    eta_b = (
        diffraction_eta(l_b, optics)
        * atmospheric_eta(th_b, optics.zenith_transmittance)
        * intrinsic
    )
    return PassProfile(
        window=window,
        t_s=t,
        eta_a=eta_a,
        eta_b=eta_b,
        tau_a_s=l_a / SPEED_OF_LIGHT_KM_S,
        tau_b_s=l_b / SPEED_OF_LIGHT_KM_S,
    )


def _dddl_pdv(profile: PassProfile, source_rate: float) -> float:
    return profile.integrate(profile.eta_a * profile.eta_b * source_rate)


def _ssqr_pdv(profile: PassProfile, n_a: int, n_b: int, p_bsm: float) -> float:
    rate = p_bsm * np.minimum(n_a * profile.slot_rate_a, n_b * profile.slot_rate_b)
    return profile.integrate(rate)


def _best_split(profile: PassProfile, n_sat: int, p_bsm: float) -> tuple[int, int, float]:
    """Brute-force static allocation maximising SSQR PDV.

    Ties (within relative 1e-9) break towards the equal split.
    """
    n_a = np.arange(n_sat + 1)
    ra, rb = profile.slot_rate_a, profile.slot_rate_b
    rates = np.minimum(np.outer(n_a, ra), np.outer(n_sat - n_a, rb))
    pdvs = np.trapezoid(rates, profile.t_s, axis=1) * p_bsm
    best = pdvs.max()
    ties = np.flatnonzero(pdvs >= best * (1 - 1e-9))
    pick = ties[np.argmin(np.abs(ties - n_sat / 2))]
    return int(pick), int(n_sat - pick), float(pdvs[pick])


def _adaptive_profile(spec, optics, evaluate) -> tuple[float, PassProfile | None]:
    """Refine the sampling grid until the integral is stable to PDV_RTOL."""
    window = visibility_window(spec)
    if window is None:
        return 0.0, None
    n = max(129, int(window.duration_s) | 1)  # at most ~1 s steps to start
    profile = _profile_for_window(spec, optics, window, n)
    value = evaluate(profile)
    while n < _MAX_SAMPLES:
        n = 2 * n - 1
        profile = _profile_for_window(spec, optics, window, n)
        new = evaluate(profile)
        if abs(new - value) <= PDV_RTOL * max(abs(new), 1e-30):
            return new, profile
        value = new
    return value, profile


def pdv(
    spec: OverpassSpec,
    optics: OpticsParams,
    params: ProtocolParams,
    protocol: str,
) -> PdvResult:
    """Per-pass pair distribution volume; zero when there is no window."""
    if protocol == "dddl":
        value, profile = _adaptive_profile(
            spec, optics, lambda p: _dddl_pdv(p, params.source_rate_dddl)
        )
        return PdvResult(value, profile.window if profile else None)
    if protocol == "ssqr":
        n_a, n_b = params.allocation
        value, profile = _adaptive_profile(
            spec, optics, lambda p: _ssqr_pdv(p, n_a, n_b, params.p_bsm)
        )
        return PdvResult(value, profile.window if profile else None, n_a, n_b)
    raise ValueError(f"unknown protocol: {protocol!r}")


def optimize_static_split(
    spec: OverpassSpec, optics: OpticsParams, params: ProtocolParams
) -> tuple[int, int, PdvResult]:
    """Best static allocation of n_sat slots for this pass."""
    if params.n_sat < 2:
        raise ValueError("n_sat must be at least 2")
    _, profile = _adaptive_profile(
        spec, optics, lambda p: _ssqr_pdv(p, *_equal(params.n_sat), params.p_bsm)
    )
    if profile is None:
        n_a, n_b = _equal(params.n_sat)
        return n_a, n_b, PdvResult(0.0, None, n_a, n_b)
    n_a, n_b, value = _best_split(profile, params.n_sat, params.p_bsm)
    return n_a, n_b, PdvResult(value, profile.window, n_a, n_b)


def _equal(n_sat: int) -> tuple[int, int]:
    return n_sat // 2, n_sat - n_sat // 2


def crossover_capacity(
    spec: OverpassSpec,
    optics: OpticsParams,
    params: ProtocolParams,
    max_n_sat: int = 1 << 22,
) -> int | None:
    """Smallest memory capacity for optimally split SSQR to match DDDL PDV.

    None when no capacity up to max_n_sat reaches the DDDL volume.
    """
    target, profile = _adaptive_profile(
        spec, optics, lambda p: _dddl_pdv(p, params.source_rate_dddl)
    )
    if profile is None or target <= 0:
        raise ValueError("DDDL PDV must be positive to define a crossover")

    def best_pdv(n):
        return _best_split(profile, n, params.p_bsm)[2]

    hi = 2
    while best_pdv(hi) < target:
        hi *= 2
        if hi > max_n_sat:
            return None
    lo = hi // 2  # best_pdv(lo) < target or lo == 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if best_pdv(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def nu_c(spec: OverpassSpec, optics: OpticsParams, params: ProtocolParams) -> int:
    """Source-rate-normalised crossover capacity (modes per MHz).

    ceil(PDV_dddl / PDV_ssqr * n_sat / (R_source / 1e6)), rounded up to the
    next even integer. The SSQR volume uses the optimal static split at
    params.n_sat.
    """
    dddl, profile = _adaptive_profile(
        spec, optics, lambda p: _dddl_pdv(p, params.source_rate_dddl)
    )
    if profile is None:
        raise ValueError("no dual-visibility window")
    _, _, ssqr = _best_split(profile, params.n_sat, params.p_bsm)
    if ssqr <= 0:
        raise ValueError("SSQR PDV must be positive")
    value = math.ceil(dddl / ssqr * params.n_sat / (params.source_rate_dddl / 1e6))
    return value if value % 2 == 0 else value + 1
