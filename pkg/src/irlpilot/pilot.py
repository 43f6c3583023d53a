"""Surrogate LQR pilot and the multisine excitation added to its commands.

The pilot applies U = -K X with K from the Riccati solution of the
closed-loop quadcopter model. The plant is driven by U_cmd = U + U_exc,
while the observer records the pilot output U alone; the recorded pair
(X, U) therefore satisfies the optimal-control relation exactly even
though the trajectory itself is excited, which is what makes the stored
data both informative and consistent.

Excitation design: one set of sinusoids per command channel, frequencies
log-spaced across the configured band with a golden-ratio offset per
channel so no two channels share a grid point, phases drawn once from
``phase_seed``. The default seed is chosen so that every channel's
empirical mean over a 200 s horizon stays below 1% of the theoretical
peak amplitude (most seeds leave a larger low-frequency bias).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .lti import CostFunctional, LinearSystem, RiccatiSolution, solve_are

__all__ = [
    "ExcitationConfig",
    "PilotPolicy",
    "make_paper_cost",
    "synthesize_pilot",
    "excitation_signal",
    "excitation_tables",
    "commanded_input",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ExcitationConfig:
    """Multisine excitation parameters (one sinusoid set per channel)."""

    num_sets: int = 4
    sines_per_set: int = 75
    f_min: float = 0.001
    f_max: float = 10.0
    magnitude: float = 0.03
    phase_seed: int = 3102

    def __post_init__(self):
        if not 0 < self.f_min < self.f_max:
            raise ValueError("need 0 < f_min < f_max")
        if self.magnitude < 0:
            raise ValueError("magnitude must be nonnegative")
        if self.num_sets < 1 or self.sines_per_set < 1:
            raise ValueError("counts must be >= 1")


@dataclass(frozen=True)
class PilotPolicy:
    """Expert feedback gain and the true cost it optimizes.

    The control law is applied as U = -k_expert X, with
    k_expert = R^-1 B' S from the Riccati solution.
    """

    k_expert: np.ndarray
    cost: CostFunctional
    riccati: RiccatiSolution


def make_paper_cost() -> CostFunctional:
    """Diagonal cost penalizing translational position and heading."""
    q = np.diag([9.57, 6.91, 2.84, 0, 0, 0, 0, 0, 11.68, 0, 0, 0.0])
    r = np.diag([9.57, 3.48, 14.40, 0.17])
    return CostFunctional(q_matrix=q, r_matrix=r)


def synthesize_pilot(system: LinearSystem, cost: CostFunctional) -> PilotPolicy:
    """LQR synthesis of the expert policy for the given system and cost."""
    sol = solve_are(system, cost)
    return PilotPolicy(k_expert=sol.k_gain, cost=cost, riccati=sol)


@lru_cache(maxsize=8)
def excitation_tables(cfg: ExcitationConfig) -> tuple[np.ndarray, np.ndarray]:
    """Frequency and phase tables, each of shape (num_sets, sines_per_set).

    Frequencies are log-spaced over [f_min, f_max); channel j's grid is
    shifted by frac((j+1) * golden) of one grid step. Phases are uniform
    on [0, 2 pi) from ``phase_seed``.
    """
    idx = np.arange(cfg.sines_per_set, dtype=float)[None, :]
    offsets = np.modf((np.arange(1, cfg.num_sets + 1)) * _GOLDEN)[0][:, None]
    pos = (idx + offsets) / cfg.sines_per_set
    lf0, lf1 = math.log10(cfg.f_min), math.log10(cfg.f_max)
    freqs = 10.0 ** (lf0 + pos * (lf1 - lf0))
    rng = np.random.default_rng(cfg.phase_seed)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=freqs.shape)
    freqs.setflags(write=False)
    phases.setflags(write=False)
    return freqs, phases


def excitation_signal(cfg: ExcitationConfig, t: float) -> np.ndarray:
    """Excitation vector at time t, one entry per command channel."""
    freqs, phases = excitation_tables(cfg)
    return cfg.magnitude * np.sin(2.0 * math.pi * freqs * t + phases).sum(axis=1)


def commanded_input(policy: PilotPolicy, cfg: ExcitationConfig,
                    state: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Pilot output and the excited command actually sent to the plant.

    Returns (u_pilot, u_cmd) with u_pilot = -K X and
    u_cmd = u_pilot + excitation. The observer records u_pilot.
    """
    u_pilot = -(policy.k_expert @ np.asarray(state, dtype=float))
    u_cmd = u_pilot + excitation_signal(cfg, t)
    return u_pilot, u_cmd
