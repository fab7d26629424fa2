"""Round-based Monte Carlo of the repeater satellite's memory operation.

The overpass is split into outer time steps of width dt, with channel
parameters frozen at the value at the start of each step. Within a step the
memory registers evolve round by round: a register is only touched when the
classical confirmation signal from its ground station arrives, i.e. in
increments of the round-trip time 2*tau. Each round the satellite swaps as
many confirmed pairs as possible (youngest first), trims each register down
to the buffer size (discarding oldest), then loads new qubits according to a
binomial draw over the empty slots. Loading times are backdated by 2*tau to
the transmission instant, so recorded waiting times include the full round
trip.

Two engines produce identical dynamics: plain-Python operations on a
:class:`MemoryState` (reference, used by the property tests) and a compiled
per-trial kernel (default, ~100x faster). They consume random numbers in
different orders, so agreement between them is deterministic only when every
draw is forced (transmittance 0 or 1, certain swapping).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .constants import SPEED_OF_LIGHT_KM_S
from .fidelity import swap_fidelity
from .geometry import LinkSample, OverpassSpec, VisibilityWindow, visibility_window
from .linkbudget import OpticsParams
from .rates import ProtocolParams, _best_split, link_etas, profile_at_times

ALLOCATION_POLICIES = ("equal", "optimal-static")


@dataclass(frozen=True)
class McConfig:
    """Knobs of the Monte Carlo process itself (the physics lives elsewhere)."""

    dt_s: float = 1.0
    buffer: int = 5
    trials: int = 1000
    seed: int = 0
    tau_mem_s: float = math.inf
    p_bsm: float = 0.5
    allocation_policy: str = "optimal-static"

    def __post_init__(self):
        if self.dt_s <= 0:
            raise ValueError("dt_s must be positive")
        if self.buffer < 0:
            raise ValueError("buffer must be nonnegative")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not 0 <= self.p_bsm <= 1:
            raise ValueError("p_bsm must be in [0, 1]")
        if self.allocation_policy not in ALLOCATION_POLICIES:
            raise ValueError(f"unknown allocation policy: {self.allocation_policy!r}")


@dataclass
class MemoryState:
    """Occupancy and loading times of both registers plus the round clocks.

    A slot i is empty iff m[i] == 0, in which case its loading time is the
    0.0 sentinel. The clocks time_a/time_b hold the next classical-arrival
    instants relative to the current step start and advance in increments of
    the respective round-trip times.
    """

    m_a: np.ndarray
    m_b: np.ndarray
    t_a: np.ndarray
    t_b: np.ndarray
    time_a: float = 0.0
    time_b: float = 0.0
    t_internal: float = 0.0

    @classmethod
    def empty(cls, n_a: int, n_b: int) -> "MemoryState":
        if n_a < 0 or n_b < 0:
            raise ValueError("register sizes must be nonnegative")
        return cls(
            m_a=np.zeros(n_a, dtype=np.uint8),
            m_b=np.zeros(n_b, dtype=np.uint8),
            t_a=np.zeros(n_a),
            t_b=np.zeros(n_b),
        )

    def occupancy(self) -> tuple[int, int]:
        return int(self.m_a.sum()), int(self.m_b.sum())


@dataclass(frozen=True)
class SwapEvent:
    t_s: float
    wait_a_s: float
    wait_b_s: float
    fidelity: float
    bsm_success: bool


@dataclass(frozen=True)
class TrialRecord:
    """Everything one simulated overpass produced."""

    trial: int
    seed: int
    window: VisibilityWindow
    n_a: int
    n_b: int
    t_s: np.ndarray  # wall-clock time of each swap attempt
    wait_a_s: np.ndarray
    wait_b_s: np.ndarray
    bsm_success: np.ndarray
    fidelity: np.ndarray  # evaluated at the run's tau_mem
    n_ssqr: int = 0
    step_t_s: np.ndarray = field(default_factory=lambda: np.empty(0))
    fills_a: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    fills_b: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def n_swaps(self) -> int:
        return len(self.t_s)


# ---------------------------------------------------------------------------
# reference operations (one round each, plain numpy)
# ---------------------------------------------------------------------------


def entanglement_generation(state, eta_a, eta_b, tau_a_s, tau_b_s, t0_s, rng):
    """Advance to the next confirmation arrival and load the empty slots.

    The side(s) whose clock reads the earlier time fire; simultaneous
    arrivals fire both. Successful loads are backdated to the transmission
    instant, one round trip before the confirmation. Returns the number of
    confirmed loads per side.
    """
    fire_a = state.time_a <= state.time_b
    fire_b = state.time_b <= state.time_a
    state.t_internal = min(state.time_a, state.time_b)
    fills_a = fills_b = 0
    if fire_a:
        fills_a = _fill_register(
            state.m_a, state.t_a, eta_a,
            t0_s + state.t_internal - 2 * tau_a_s, rng)
        state.time_a += 2 * tau_a_s
    if fire_b:
        fills_b = _fill_register(
            state.m_b, state.t_b, eta_b,
            t0_s + state.t_internal - 2 * tau_b_s, rng)
        state.time_b += 2 * tau_b_s
    return fills_a, fills_b


def _fill_register(m, t, eta, load_time_s, rng) -> int:
    empty = np.flatnonzero(m == 0)
    wins = int(rng.binomial(len(empty), eta))
    if wins:
        chosen = empty[:wins]  # ascending scan order
        m[chosen] = 1
        t[chosen] = load_time_s
    return wins


def entanglement_swapping(state, t0_s, cfg, rng):
    """Swap youngest-first while both registers hold a confirmed qubit.

    Both qubits are consumed regardless of the Bell-measurement outcome;
    only successful outcomes count as distributed pairs.
    """
    events = []
    now = t0_s + state.t_internal
    while state.m_a.any() and state.m_b.any():
        ia = _youngest(state.m_a, state.t_a)
        ib = _youngest(state.m_b, state.t_b)
        wait_a = now - state.t_a[ia]
        wait_b = now - state.t_b[ib]
        state.m_a[ia] = 0
        state.t_a[ia] = 0.0
        state.m_b[ib] = 0
        state.t_b[ib] = 0.0
        success = bool(rng.random() < cfg.p_bsm)
        events.append(
            SwapEvent(
                t_s=now,
                wait_a_s=wait_a,
                wait_b_s=wait_b,
                fidelity=swap_fidelity(wait_a, wait_b, cfg.tau_mem_s),
                bsm_success=success,
            )
        )
    return events


def _youngest(m, t) -> int:
    occupied = np.flatnonzero(m)
    return int(occupied[np.argmax(t[occupied])])


def trim_to_buffer(m, t, buffer: int):
    """Discard oldest confirmed qubits until at most `buffer` remain."""
    if buffer < 0:
        raise ValueError("buffer must be nonnegative")
    while int(m.sum()) > buffer:
        occupied = np.flatnonzero(m)
        oldest = occupied[np.argmin(t[occupied])]
        m[oldest] = 0
        t[oldest] = 0.0
    return m, t


def run_time_step(state, link: LinkSample, optics: OpticsParams, cfg: McConfig,
                  t0_s: float, rng):
    """One outer step: swap / trim / generate rounds until dt has elapsed.

    Channel parameters are frozen at the step-start sample. Returns the
    swap events, the per-side counts of confirmed loads, and the final
    internal time (which can overshoot dt by up to one round trip).
    """
    eta_a, eta_b = link_etas(link, optics)
    tau_a = link.slant_a_km / SPEED_OF_LIGHT_KM_S
    tau_b = link.slant_b_km / SPEED_OF_LIGHT_KM_S
    return _reference_step(state, eta_a, eta_b, tau_a, tau_b, cfg, t0_s, rng)


# ---------------------------------------------------------------------------
# compiled per-trial kernel
# ---------------------------------------------------------------------------
#
# Registers are stored compactly as unordered arrays of loading times of the
# occupied slots only; occupancy never exceeds the allocation, and after each
# trim it is at most buffer + one binomial fill. Which index a qubit sits in
# is unobservable (equal loading times give equal waits), so youngest/oldest
# selection by scanning the compact array reproduces the reference exactly.


@njit(cache=True)
def _trial_kernel(n_a, n_b, eta_a, eta_b, tau_a, tau_b, t_start, dt, buffer,
                  p_bsm, seed, out_t, out_wa, out_wb, out_succ, fills_a, fills_b):
    np.random.seed(seed)
    mem_a = np.empty(n_a)
    mem_b = np.empty(n_b)
    cnt_a = 0
    cnt_b = 0
    cap = out_t.shape[0]
    idx = 0
    n_ssqr = 0
    t0 = t_start
    n_steps = eta_a.shape[0]
    for k in range(n_steps):
        ea = eta_a[k]
        eb = eta_b[k]
        rt_a = 2.0 * tau_a[k]
        rt_b = 2.0 * tau_b[k]
        time_a = rt_a
        time_b = rt_b
        t_int = 0.0
        step_fa = 0
        step_fb = 0
        while t_int <= dt:
            # swap youngest-first until one side is drained
            while cnt_a > 0 and cnt_b > 0:
                ia = 0
                for i in range(1, cnt_a):
                    if mem_a[i] > mem_a[ia]:
                        ia = i
                ib = 0
                for i in range(1, cnt_b):
                    if mem_b[i] > mem_b[ib]:
                        ib = i
                now = t0 + t_int
                success = np.random.random() < p_bsm
                if success:
                    n_ssqr += 1
                if idx < cap:
                    out_t[idx] = now
                    out_wa[idx] = now - mem_a[ia]
                    out_wb[idx] = now - mem_b[ib]
                    out_succ[idx] = 1 if success else 0
                idx += 1
                cnt_a -= 1
                mem_a[ia] = mem_a[cnt_a]
                cnt_b -= 1
                mem_b[ib] = mem_b[cnt_b]
            # trim each register to the buffer, oldest first
            while cnt_a > buffer:
                io = 0
                for i in range(1, cnt_a):
                    if mem_a[i] < mem_a[io]:
                        io = i
                cnt_a -= 1
                mem_a[io] = mem_a[cnt_a]
            while cnt_b > buffer:
                io = 0
                for i in range(1, cnt_b):
                    if mem_b[i] < mem_b[io]:
                        io = i
                cnt_b -= 1
                mem_b[io] = mem_b[cnt_b]
            # generation at the next confirmation arrival
            fire_a = time_a <= time_b
            fire_b = time_b <= time_a
            t_int = min(time_a, time_b)
            if fire_a:
                wins = np.random.binomial(n_a - cnt_a, ea)
                load = t0 + t_int - rt_a
                for _ in range(wins):
                    mem_a[cnt_a] = load
                    cnt_a += 1
                step_fa += wins
                time_a += rt_a
            if fire_b:
                wins = np.random.binomial(n_b - cnt_b, eb)
                load = t0 + t_int - rt_b
                for _ in range(wins):
                    mem_b[cnt_b] = load
                    cnt_b += 1
                step_fb += wins
                time_b += rt_b
        fills_a[k] = step_fa
        fills_b[k] = step_fb
        t0 = t0 + t_int
    return idx, n_ssqr


def _trial_seed(base_seed: int, trial: int) -> int:
    # one independent stream per trial so trials are order-independent
    return (base_seed + trial) & 0xFFFFFFFF


def _resolve_allocation(profile, params: ProtocolParams, cfg: McConfig):
    if params.n_a is not None:
        return params.allocation
    if cfg.allocation_policy == "equal":
        return params.n_sat // 2, params.n_sat - params.n_sat // 2
    n_a, n_b, _ = _best_split(profile, params.n_sat, cfg.p_bsm)
    return n_a, n_b


def _step_profile(spec: OverpassSpec, optics: OpticsParams, cfg: McConfig):
    window = visibility_window(spec)
    if window is None:
        return None, None
    n_steps = max(1, int(window.duration_s / cfg.dt_s))
    t = window.t_start_s + cfg.dt_s * np.arange(n_steps)
    return window, profile_at_times(spec, optics, t, window)


def _empty_record(trial, seed, window, n_a, n_b):
    z = np.empty(0)
    return TrialRecord(trial, seed, window, n_a, n_b, z, z.copy(), z.copy(),
                       np.empty(0, dtype=bool), z.copy())


def run_overpass(
    spec: OverpassSpec,
    optics: OpticsParams,
    params: ProtocolParams,
    cfg: McConfig,
    trial: int = 0,
    engine: str = "compiled",
) -> TrialRecord:
    """Simulate one overpass; returns an empty record without dual visibility."""
    window, profile = _step_profile(spec, optics, cfg)
    if window is None:
        return _empty_record(trial, _trial_seed(cfg.seed, trial), None, 0, 0)
    n_a, n_b = _resolve_allocation(profile, params, cfg)
    return _run_trial(profile, n_a, n_b, cfg, trial, engine)


def _run_trial(profile, n_a, n_b, cfg, trial, engine) -> TrialRecord:
    seed = _trial_seed(cfg.seed, trial)
    if engine == "reference":
        return _run_trial_reference(profile, n_a, n_b, cfg, trial, seed)
    if engine != "compiled":
        raise ValueError(f"unknown engine: {engine!r}")
    window = profile.window
    n_steps = len(profile.t_s)
    # generous bound on swap attempts: arrivals on the slower side
    exp_a = float(np.sum(n_a * profile.slot_rate_a) * cfg.dt_s)
    exp_b = float(np.sum(n_b * profile.slot_rate_b) * cfg.dt_s)
    cap = int(3 * min(exp_a, exp_b)) + 10_000
    while True:
        out_t = np.empty(cap)
        out_wa = np.empty(cap)
        out_wb = np.empty(cap)
        out_succ = np.zeros(cap, dtype=np.uint8)
        fills_a = np.zeros(n_steps, dtype=np.int64)
        fills_b = np.zeros(n_steps, dtype=np.int64)
        count, n_ssqr = _trial_kernel(
            n_a, n_b, profile.eta_a, profile.eta_b,
            profile.tau_a_s, profile.tau_b_s,
            window.t_start_s, cfg.dt_s, cfg.buffer, cfg.p_bsm, seed,
            out_t, out_wa, out_wb, out_succ, fills_a, fills_b,
        )
        if count <= cap:
            break
        cap = count  # exact requirement now known; rerun same stream
    # copy: a plain slice would pin the whole cap-sized buffer in memory
    wait_a = out_wa[:count].copy()
    wait_b = out_wb[:count].copy()
    return TrialRecord(
        trial=trial,
        seed=seed,
        window=window,
        n_a=n_a,
        n_b=n_b,
        t_s=out_t[:count].copy(),
        wait_a_s=wait_a,
        wait_b_s=wait_b,
        bsm_success=out_succ[:count].astype(bool),
        fidelity=swap_fidelity(wait_a, wait_b, cfg.tau_mem_s)
        if count else np.empty(0),
        n_ssqr=int(n_ssqr),
        step_t_s=profile.t_s,
        fills_a=fills_a,
        fills_b=fills_b,
    )


def _run_trial_reference(profile, n_a, n_b, cfg, trial, seed) -> TrialRecord:
    rng = np.random.RandomState(seed)
    state = MemoryState.empty(n_a, n_b)
    events: list[SwapEvent] = []
    fills_a = np.zeros(len(profile.t_s), dtype=np.int64)
    fills_b = np.zeros(len(profile.t_s), dtype=np.int64)
    t0 = profile.window.t_start_s
    for k in range(len(profile.t_s)):
        step_events, fa, fb, t_final = _reference_step(
            state, profile.eta_a[k], profile.eta_b[k],
            profile.tau_a_s[k], profile.tau_b_s[k], cfg, t0, rng)
        events.extend(step_events)
        fills_a[k] = fa
        fills_b[k] = fb
        t0 += t_final
    return TrialRecord(
        trial=trial,
        seed=seed,
        window=profile.window,
        n_a=n_a,
        n_b=n_b,
        t_s=np.array([e.t_s for e in events]),
        wait_a_s=np.array([e.wait_a_s for e in events]),
        wait_b_s=np.array([e.wait_b_s for e in events]),
        bsm_success=np.array([e.bsm_success for e in events], dtype=bool),
        fidelity=np.array([e.fidelity for e in events]),
        n_ssqr=sum(e.bsm_success for e in events),
        step_t_s=profile.t_s,
        fills_a=fills_a,
        fills_b=fills_b,
    )


def _reference_step(state, eta_a, eta_b, tau_a, tau_b, cfg, t0_s, rng):
    """run_time_step with the channel parameters given directly."""
    state.time_a = 2 * tau_a
    state.time_b = 2 * tau_b
    state.t_internal = 0.0
    events = []
    fills_a = fills_b = 0
    while state.t_internal <= cfg.dt_s:
        events.extend(entanglement_swapping(state, t0_s, cfg, rng))
        trim_to_buffer(state.m_a, state.t_a, cfg.buffer)
        trim_to_buffer(state.m_b, state.t_b, cfg.buffer)
        fa, fb = entanglement_generation(
            state, eta_a, eta_b, tau_a, tau_b, t0_s, rng)
        fills_a += fa
        fills_b += fb
    return events, fills_a, fills_b, state.t_internal


def run_trials(
    spec: OverpassSpec,
    optics: OpticsParams,
    params: ProtocolParams,
    cfg: McConfig,
    engine: str = "compiled",
) -> list[TrialRecord]:
    """Independent trials of the same overpass (seeded per trial)."""
    window, profile = _step_profile(spec, optics, cfg)
    if window is None:
        return [
            _empty_record(i, _trial_seed(cfg.seed, i), None, 0, 0)
            for i in range(cfg.trials)
        ]
    n_a, n_b = _resolve_allocation(profile, params, cfg)
    return [_run_trial(profile, n_a, n_b, cfg, i, engine) for i in range(cfg.trials)]


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McStats:
    """Pooled statistics over a set of trials of the same overpass."""

    n_trials: int
    pdv_mean: float
    pdv_std: float
    bin_edges: np.ndarray
    wait_a_median: np.ndarray  # per time bin; NaN where the bin is empty
    wait_a_q1: np.ndarray
    wait_a_q3: np.ndarray
    wait_b_median: np.ndarray
    wait_b_q1: np.ndarray
    wait_b_q3: np.ndarray
    fidelity_median: np.ndarray  # distributed pairs only, per time bin
    fidelity_q1: np.ndarray
    fidelity_q3: np.ndarray
    fidelity_hist_edges: np.ndarray
    fidelity_hist: np.ndarray
    infidelity_sorted: np.ndarray
    cumulative_pairs: np.ndarray  # mean per trial, vs infidelity_sorted
    median_fidelity: float

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


def _binned_quartiles(t, values, edges):
    n = len(edges) - 1
    q1 = np.full(n, np.nan)
    med = np.full(n, np.nan)
    q3 = np.full(n, np.nan)
    which = np.digitize(t, edges) - 1
    for k in range(n):
        sel = values[which == k]
        if len(sel):
            q1[k], med[k], q3[k] = np.percentile(sel, [25, 50, 75])
    return med, q1, q3


def aggregate_stats(
    records: list[TrialRecord],
    bin_width_s: float = 10.0,
    tau_mem_s: float | None = None,
    fidelity_bins: int = 50,
) -> McStats:
    """Pool swap events across trials into time-binned medians and IQRs.

    Waiting-time statistics use every swap attempt; fidelity statistics use
    distributed (measurement-success) pairs only. Passing tau_mem_s
    re-evaluates fidelities from the recorded waits, which is how a memory
    lifetime sweep reuses one set of trials.
    """
    if not records:
        raise ValueError("no trial records to aggregate")
    windows = [r.window for r in records if r.window is not None]
    t = np.concatenate([r.t_s for r in records])
    wait_a = np.concatenate([r.wait_a_s for r in records])
    wait_b = np.concatenate([r.wait_b_s for r in records])
    success = np.concatenate([r.bsm_success for r in records])
    if tau_mem_s is None:
        fid = np.concatenate([r.fidelity for r in records])
    else:
        fid = swap_fidelity(wait_a, wait_b, tau_mem_s) if len(t) else np.empty(0)
    fid = np.atleast_1d(fid)

    if windows:
        start = min(w.t_start_s for w in windows)
        end = max(w.t_end_s for w in windows)
    else:
        start, end = 0.0, bin_width_s
    edges = np.arange(start, end + bin_width_s, bin_width_s)

    wa_med, wa_q1, wa_q3 = _binned_quartiles(t, wait_a, edges)
    wb_med, wb_q1, wb_q3 = _binned_quartiles(t, wait_b, edges)
    f_med, f_q1, f_q3 = _binned_quartiles(t[success], fid[success], edges)

    hist_edges = np.linspace(0.5, 1.0, fidelity_bins + 1)
    hist, _ = np.histogram(fid[success], bins=hist_edges)

    infid = np.sort(1.0 - fid[success])
    cumulative = np.arange(1, len(infid) + 1) / len(records)

    pdvs = np.array([r.n_ssqr for r in records], dtype=float)
    return McStats(
        n_trials=len(records),
        pdv_mean=float(pdvs.mean()),
        pdv_std=float(pdvs.std(ddof=1)) if len(pdvs) > 1 else 0.0,
        bin_edges=edges,
        wait_a_median=wa_med,
        wait_a_q1=wa_q1,
        wait_a_q3=wa_q3,
        wait_b_median=wb_med,
        wait_b_q1=wb_q1,
        wait_b_q3=wb_q3,
        fidelity_median=f_med,
        fidelity_q1=f_q1,
        fidelity_q3=f_q3,
        fidelity_hist_edges=hist_edges,
        fidelity_hist=hist,
        infidelity_sorted=infid,
        cumulative_pairs=cumulative,
        median_fidelity=float(np.median(fid[success])) if success.any() else math.nan,
    )
