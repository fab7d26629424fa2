"""Satellite-based entanglement distribution toolkit.

Models a single satellite serving two optical ground stations, either by
direct dual downlink of entangled photon pairs or by storing one half of
each pair in onboard memory and entanglement-swapping (a single-satellite
quantum repeater). Provides overpass geometry, optical link budgets, rate
and pair-volume integrals, annual-average analysis for city pairs, and a
round-based Monte Carlo of the repeater memory with waiting-time and
fidelity statistics.
"""

__version__ = "0.1.0"

from .annual import OgsPair, annual_pdv, altitude_sweep, pair_from_catalog
from .fidelity import lambda_dephase, swap_fidelity
from .geometry import GroundStation, OverpassSpec, visibility_window
from .linkbudget import LossBreakdown, OpticsParams, pin_to_system_loss, system_loss_metric
from .mcsim import McConfig, aggregate_stats, run_overpass, run_trials
from .rates import (
    ProtocolParams,
    crossover_capacity,
    nu_c,
    optimize_static_split,
    pdv,
)

__all__ = [
    "__version__",
    "GroundStation",
    "OverpassSpec",
    "visibility_window",
    "OpticsParams",
    "LossBreakdown",
    "system_loss_metric",
    "pin_to_system_loss",
    "ProtocolParams",
    "pdv",
    "optimize_static_split",
    "crossover_capacity",
    "nu_c",
    "lambda_dephase",
    "swap_fidelity",
    "OgsPair",
    "annual_pdv",
    "altitude_sweep",
    "pair_from_catalog",
    "McConfig",
    "run_overpass",
    "run_trials",
    "aggregate_stats",
]
