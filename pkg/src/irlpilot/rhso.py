"""Regularized history stack observer: update law, stepping, and metrics.

The weight estimate evolves by

    dW/dt = (S'S + eps I)^-1 S' (S_u - S W)

over the current history stack contents, integrated with fixed-step RK4
while the stack is held constant between samples. Along this flow the
error metric Delta = S_u - S W contracts monotonically for a frozen
stack.

Setting eps = 0 recovers the unregularized predecessor observer (HSO
mode). Its normal matrix S'S is rank deficient whenever the underlying
problem admits multiple cost functionals that reproduce the expert gain,
so the solve either raises or the weights blow up; both outcomes are
reported as divergence rather than crashing a run. In HSO mode the
update is gated until the stack is full, since a partially filled stack
is rank deficient for the trivial reason of having too few rows.

No projection keeps the extracted penalty estimates positive definite
during adaptation; the invertibility of the extracted R is only
monitored, via its condition number, against the threshold below.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve

from .basis import WeightLayout, WeightVector, extract_matrices
from .history_stack import HistoryStack
from .lti import LinearSystem, hjb_residual
from .pilot import PilotPolicy

__all__ = [
    "SingularNormalMatrix",
    "ObserverState",
    "EquivalenceMetrics",
    "initial_weights",
    "initial_observer",
    "delta",
    "update_derivative",
    "step",
    "metrics",
    "make_hso_mode",
    "RHAT_COND_LIMIT",
    "WEIGHT_DIVERGENCE_LIMIT",
]

# Gain and HJB metrics are reported non-finite above this R-hat condition.
RHAT_COND_LIMIT = 1e10
# Any weight beyond this magnitude flags the observer as diverged.
WEIGHT_DIVERGENCE_LIMIT = 1e8


class SingularNormalMatrix(Exception):
    """The unregularized normal matrix S'S is not positive definite."""


@dataclass(frozen=True)
class ObserverState:
    """Observer weights plus the runtime health indicators.

    ``diverged_flag`` holds exactly when some weight is non-finite or
    exceeds the divergence limit in magnitude; once set, stepping leaves
    the state untouched. ``last_delta_norm`` is NaN until the first step.
    """

    w: WeightVector
    epsilon: float
    last_delta_norm: float
    r_hat_condition: float
    diverged_flag: bool


@dataclass(frozen=True)
class EquivalenceMetrics:
    """Distances between the observer estimate and the true solution.

    ``gain_error``, ``q_error`` and ``r_error`` are induced 2-norms;
    ``hjb_res`` is the Frobenius norm of the HJB residual matrix. All
    fields are NaN for a diverged observer; ``gain_error`` and
    ``hjb_res`` are NaN whenever the extracted R is too ill conditioned
    to invert.
    """

    delta_norm: float
    gain_error: float
    q_error: float
    r_error: float
    hjb_res: float


def _weights_bad(packed: np.ndarray) -> bool:
    return (not np.all(np.isfinite(packed))) or \
        np.abs(packed).max() > WEIGHT_DIVERGENCE_LIMIT


def _rhat_condition(layout: WeightLayout, w: WeightVector) -> float:
    _, _, r_hat = extract_matrices(layout, w)
    return float(np.linalg.cond(r_hat))


def initial_weights(layout: WeightLayout, rng: np.random.Generator,
                    init_mode: str = "uniform",
                    init_range: tuple = (-5.0, 5.0)) -> WeightVector:
    """Draw the initial weight estimate.

    ``uniform`` draws i.i.d. from [lo, hi]. ``truncated_normal`` draws
    from a normal centered on the interval midpoint with standard
    deviation a quarter of the width, resampling anything outside the
    interval.
    """
    lo, hi = float(init_range[0]), float(init_range[1])
    if not lo < hi:
        raise ValueError("init_range must be (lo, hi) with lo < hi")
    d = layout.total_dim
    if init_mode == "uniform":
        packed = rng.uniform(lo, hi, size=d)
    elif init_mode == "truncated_normal":
        center, sd = 0.5 * (lo + hi), 0.25 * (hi - lo)
        packed = rng.normal(center, sd, size=d)
        bad = (packed < lo) | (packed > hi)
        while np.any(bad):
            packed[bad] = rng.normal(center, sd, size=int(bad.sum()))
            bad = (packed < lo) | (packed > hi)
    else:
        raise ValueError(f"unknown init_mode {init_mode!r}")
    return WeightVector.from_packed(layout, packed)


def initial_observer(layout: WeightLayout, epsilon: float,
                     rng: np.random.Generator, init_mode: str = "uniform",
                     init_range: tuple = (-5.0, 5.0)) -> ObserverState:
    w = initial_weights(layout, rng, init_mode, init_range)
    return ObserverState(
        w=w,
        epsilon=float(epsilon),
        last_delta_norm=float("nan"),
        r_hat_condition=_rhat_condition(layout, w),
        diverged_flag=_weights_bad(w.packed),
    )


def delta(stack: HistoryStack, w) -> np.ndarray:
    """Error metric S_u - S W over the occupied slots."""
    packed = w.packed if isinstance(w, WeightVector) else np.asarray(w, float)
    return stack.sigma_u - stack.sigma @ packed


def update_derivative(stack: HistoryStack, w, epsilon: float = None) -> np.ndarray:
    """Right-hand side of the weight update law.

    The regularized normal matrix is factored once per stack revision and
    solved, never inverted. With ``epsilon`` zero (HSO mode) the update
    is zero until the stack fills, and a rank-deficient normal matrix
    raises :class:`SingularNormalMatrix`.
    """
    packed = w.packed if isinstance(w, WeightVector) else np.asarray(w, float)
    epsilon = stack.epsilon if epsilon is None else float(epsilon)
    if stack.occupancy == 0:
        return np.zeros(stack.layout.total_dim)
    if epsilon == 0.0 and not stack.is_full:
        return np.zeros(stack.layout.total_dim)
    try:
        factor = stack.regularized_cholesky(epsilon)
    except np.linalg.LinAlgError as exc:
        raise SingularNormalMatrix(
            "normal matrix is not positive definite (eps = 0 under a "
            "rank-deficient stack)"
        ) from exc
    d = delta(stack, packed)
    return cho_solve(factor, stack.sigma.T @ d)


def step(observer: ObserverState, stack: HistoryStack, dt: float) -> ObserverState:
    """Advance the weights by one RK4 step with the stack held fixed.

    Never raises: a singular normal matrix in HSO mode poisons the
    weights with NaN, which sets the divergence flag; a diverged observer
    is returned unchanged.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if observer.diverged_flag:
        return observer
    eps = observer.epsilon
    w0 = observer.w.packed
    try:
        k1 = update_derivative(stack, w0, eps)
        k2 = update_derivative(stack, w0 + 0.5 * dt * k1, eps)
        k3 = update_derivative(stack, w0 + 0.5 * dt * k2, eps)
        k4 = update_derivative(stack, w0 + dt * k3, eps)
        w1 = w0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    except SingularNormalMatrix:
        w1 = np.full_like(w0, np.nan)
    w_new = WeightVector.from_packed(observer.w.layout, w1)
    diverged = _weights_bad(w1)
    if diverged:
        delta_norm = float("nan")
        r_cond = float("nan")
    else:
        delta_norm = float(np.linalg.norm(delta(stack, w1)))
        r_cond = _rhat_condition(observer.w.layout, w_new)
    return replace(observer, w=w_new, last_delta_norm=delta_norm,
                   r_hat_condition=r_cond, diverged_flag=diverged)


def metrics(observer: ObserverState, system: LinearSystem,
            truth: PilotPolicy) -> EquivalenceMetrics:
    """Equivalence metrics of the current estimate against the true pilot."""
    nan = float("nan")
    if observer.diverged_flag:
        return EquivalenceMetrics(nan, nan, nan, nan, nan)
    layout = observer.w.layout
    s_hat, q_hat, r_hat = extract_matrices(layout, observer.w)
    q_error = float(np.linalg.norm(q_hat - truth.cost.q_matrix, 2))
    r_error = float(np.linalg.norm(r_hat - truth.cost.r_matrix, 2))
    r_cond = float(np.linalg.cond(r_hat))
    if np.isfinite(r_cond) and r_cond < RHAT_COND_LIMIT:
        k_hat = np.linalg.solve(r_hat, system.b_matrix.T @ s_hat)
        gain_error = float(np.linalg.norm(k_hat - truth.k_expert, 2))
        hjb_res = hjb_residual(system, s_hat, q_hat, r_hat)
    else:
        gain_error = nan
        hjb_res = nan
    return EquivalenceMetrics(
        delta_norm=observer.last_delta_norm,
        gain_error=gain_error,
        q_error=q_error,
        r_error=r_error,
        hjb_res=hjb_res,
    )


def make_hso_mode(observer: ObserverState) -> ObserverState:
    """Copy of the observer with the regularization removed (eps = 0)."""
    return replace(observer, epsilon=0.0)
