"""Dephasing of stored memory qubits and post-swap pair fidelity.

Only the satellite-held qubits dephase; ground-side reception is ideal.
An infinite memory lifetime (math.inf) means no dephasing.
"""

from __future__ import annotations

import math

import numpy as np


def lambda_dephase(storage_time_s, tau_mem_s: float):
    """Phase-flip probability after a storage time: (1 - exp(-t/tau)) / 2."""
    t = np.asarray(storage_time_s, dtype=float)
    if np.any(t < 0):
        raise ValueError("storage time must be nonnegative")
    if math.isinf(tau_mem_s):
        out = np.zeros_like(t)
        return out if out.shape else 0.0
    if tau_mem_s <= 0:
        raise ValueError("tau_mem_s must be positive")
    lam = 0.5 * (1.0 - np.exp(-t / tau_mem_s))
    return lam if lam.shape else float(lam)


def swap_fidelity(time_a_s, time_b_s, tau_mem_s: float):
    """Fidelity of the station-to-station pair after entanglement swapping.

    Both halves dephase independently while stored; the swapped pair is
    Bell diagonal with fidelity la*lb + (1-la)*(1-lb).
    """
    la = lambda_dephase(time_a_s, tau_mem_s)
    lb = lambda_dephase(time_b_s, tau_mem_s)
    # mathematically >= 1/2 for lambdas in [0, 1/2]; guard float rounding
    f = np.maximum(la * lb + (1.0 - la) * (1.0 - lb), 0.5)
    return f if np.asarray(f).shape else float(f)


def implies_entangled(fidelity: float) -> bool:
    """A two-qubit state with fidelity above 1/2 is necessarily entangled."""
    return fidelity > 0.5
