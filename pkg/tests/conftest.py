"""Shared fixtures: the paper system, pilot, and small prebuilt stacks."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from irlpilot.basis import WeightLayout, pack_weights
from irlpilot.harness import default_config
from irlpilot.history_stack import HistoryStack
from irlpilot.pilot import excitation_signal, make_paper_cost, synthesize_pilot
from irlpilot.quadcopter import build_linear_model, paper_params


@pytest.fixture(scope="session")
def params():
    return paper_params()


@pytest.fixture(scope="session")
def system(params):
    return build_linear_model(params)


@pytest.fixture(scope="session")
def cost():
    return make_paper_cost()


@pytest.fixture(scope="session")
def policy(system, cost):
    return synthesize_pilot(system, cost)


@pytest.fixture(scope="session")
def sparse_layout(cost):
    return WeightLayout.from_cost(cost)


@pytest.fixture(scope="session")
def full_layout():
    return WeightLayout.full(12, 4)


@pytest.fixture(scope="session")
def true_weights_sparse(policy, cost, sparse_layout):
    return _true_weights(policy, cost, sparse_layout)


@pytest.fixture(scope="session")
def true_weights_full(policy, cost, full_layout):
    return _true_weights(policy, cost, full_layout)


def _true_weights(policy, cost, layout):
    """True solution packed at the observer's scale (R11 pinned to one)."""
    scale = cost.r_matrix[0, 0]
    return pack_weights(layout, policy.riccati.s_matrix / scale,
                        cost.q_matrix / scale, cost.r_matrix / scale)


def simulate_stack(system, policy, layout, capacity=100, n_samples=120,
                   excite=True, epsilon=0.002, x0=None, seed=0):
    """Build a stack by integrating the closed linear loop and recording.

    The recorded control is always the pilot output -K x, so the stored
    pairs satisfy the optimal-control relation exactly whether or not the
    plant itself is excited.
    """
    cfg = default_config()
    exc = cfg.excitation if excite else dataclasses.replace(
        cfg.excitation, magnitude=0.0)
    stack = HistoryStack(system, layout, capacity=capacity, epsilon=epsilon)
    a_mat, b_mat, k_gain = system.a_matrix, system.b_matrix, policy.k_expert
    if x0 is None:
        rng = np.random.default_rng(seed)
        x = np.zeros(12)
        x[0:2] = rng.uniform(-1.5, 1.5, size=2)
    else:
        x = np.asarray(x0, dtype=float).copy()
    dt, per = 0.004, 20

    def deriv(t, state):
        u_cmd = -(k_gain @ state) + excitation_signal(exc, t)
        return a_mat @ state + b_mat @ u_cmd

    t = 0.0
    for _ in range(n_samples):
        stack.record(t, x, -(k_gain @ x))
        for _ in range(per):
            k1 = deriv(t, x)
            k2 = deriv(t + dt / 2, x + dt / 2 * k1)
            k3 = deriv(t + dt / 2, x + dt / 2 * k2)
            k4 = deriv(t + dt, x + dt * k3)
            x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += dt
    return stack


@pytest.fixture(scope="session")
def excited_stack(system, policy, sparse_layout):
    """Full sparse-layout stack from an excited run (120 samples)."""
    return simulate_stack(system, policy, sparse_layout)
