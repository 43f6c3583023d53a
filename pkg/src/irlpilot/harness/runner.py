"""Coupled plant / pilot / observer simulation and the Monte-Carlo runner.

One trial integrates the plant under the excited command and the observer
under the recorded pilot output, both with fixed-step RK4 at ``sim.dt``.
Samples enter the history stack every ``observer.sample_interval``; the
stack is constant between samples, so the observer sees a piecewise
constant regressor. Everything is a pure function of (config,
trial_index): per-trial randomness comes from a seed derived from
(master_seed, trial_index) and the excitation phases are fixed by the
excitation config, shared by all trials like a hardware signal generator
would be.

A trial whose observer diverges (HSO mode, or numerical blow-up) stops at
the divergence instant and reports NaN sentinels for its final metrics;
the truncated series are kept for inspection.

Trials are independent and may run in parallel processes. The
``IRLPILOT_THREADS`` environment variable caps the worker count (0 means
serial); serial and parallel execution produce identical records.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from multiprocessing import Pool

import numpy as np
from threadpoolctl import threadpool_limits

from ..basis import WeightLayout
from ..history_stack import HistoryStack
from ..pilot import commanded_input, excitation_signal, synthesize_pilot
from ..quadcopter import build_linear_model, nonlinear_derivative
from ..rhso import (
    EquivalenceMetrics,
    delta,
    initial_observer,
    make_hso_mode,
    metrics,
    step,
)
from .config import ExperimentConfig

__all__ = [
    "TrialRecord",
    "MonteCarloSummary",
    "MonteCarloResult",
    "run_trial",
    "run_montecarlo",
    "resolve_threads",
    "write_trajectory_csv",
    "write_metrics_csv",
    "write_summary_csv",
    "write_outputs",
]

TRAJECTORY_COLUMNS = [
    "t", "x", "y", "z", "xdot", "ydot", "zdot", "phi", "theta", "psi",
    "phidot", "thetadot", "psidot",
    "u1_pilot", "u2_pilot", "u3_pilot", "u4_pilot",
    "u1_cmd", "u2_cmd", "u3_cmd", "u4_cmd",
]
METRICS_COLUMNS = [
    "t", "delta_norm", "gain_error", "q_error", "r_error", "hjb_res",
    "cond_number", "fi_state_span", "fi_sym_span", "fi_range",
]
SUMMARY_COLUMNS = [
    "trial", "seed", "final_gain_error", "final_q_error", "final_r_error",
    "diverged",
]


@dataclass(frozen=True)
class TrialRecord:
    """Everything one trial produced.

    Trajectory series are sampled every ``sample_interval``; metric
    series have one row per stack sample. ``max_step_delta_increase`` is
    the largest per-step growth of the error-metric norm observed while
    the stack was frozen (contraction says it should only be rounding
    noise).
    """

    trial_index: int
    seed: int
    diverged: bool
    init_mode: str
    traj_t: np.ndarray
    traj_states: np.ndarray
    traj_u_pilot: np.ndarray
    traj_u_cmd: np.ndarray
    metrics_t: np.ndarray
    delta_norms: np.ndarray
    gain_errors: np.ndarray
    q_errors: np.ndarray
    r_errors: np.ndarray
    hjb_residuals: np.ndarray
    cond_numbers: np.ndarray
    fi_state_span: np.ndarray
    fi_sym_span: np.ndarray
    fi_range: np.ndarray
    stack_full_sample: int
    max_step_delta_increase: float
    final: EquivalenceMetrics

    @property
    def initial_delta_norm(self) -> float:
        return float(self.delta_norms[0])

    @property
    def final_delta_norm(self) -> float:
        return float(self.delta_norms[-1])


@dataclass(frozen=True)
class MonteCarloSummary:
    """Aggregate over trials; NaN sentinels propagate into the mean."""

    trials: int
    mean_gain_error: float
    var_gain_error: float
    diverged_count: int
    single_sample: bool


@dataclass(frozen=True)
class MonteCarloResult:
    records: list
    summary: MonteCarloSummary


def trial_seed(master_seed: int, trial_index: int) -> int:
    """Derived per-trial seed, logged in the summary."""
    ss = np.random.SeedSequence([int(master_seed), int(trial_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _make_layout(cfg: ExperimentConfig):
    cost = cfg.cost.to_cost()
    if cfg.observer.layout == "full":
        return WeightLayout.full(cost.n, cost.m), cost
    return WeightLayout.from_cost(cost), cost


def run_trial(cfg: ExperimentConfig, trial_index: int) -> TrialRecord:
    """Simulate one trial; deterministic given (cfg, trial_index).

    BLAS pools are pinned to one thread for the duration: the loop is
    dominated by many small LAPACK calls whose thread synchronization
    costs more than the arithmetic, and pinning keeps worker processes
    from oversubscribing cores under trial-level parallelism.
    """
    with threadpool_limits(limits=1):
        return _run_trial(cfg, trial_index)


def _run_trial(cfg: ExperimentConfig, trial_index: int) -> TrialRecord:
    seed = trial_seed(cfg.master_seed, trial_index)
    rng = np.random.default_rng(seed)
    system = build_linear_model(cfg.quad)
    layout, cost = _make_layout(cfg)
    policy = synthesize_pilot(system, cost)
    stack = HistoryStack(system, layout, capacity=cfg.observer.stack_capacity,
                         epsilon=cfg.observer.epsilon)
    observer = initial_observer(layout, cfg.observer.epsilon, rng,
                                cfg.observer.init_mode, cfg.observer.init_range)
    if cfg.observer.mode == "hso":
        observer = make_hso_mode(observer)

    # Weights are drawn before the initial state so both init modes
    # consume the stream identically.
    if cfg.sim.initial_state_mode == "explicit":
        x = np.array(cfg.sim.initial_state, dtype=float)
        rng.uniform(*cfg.sim.hover_box, size=2)
    else:
        x = np.zeros(12)
        x[0:2] = rng.uniform(*cfg.sim.hover_box, size=2)

    dt = cfg.sim.dt
    per_sample = cfg.steps_per_sample
    n_steps = int(round(cfg.sim.horizon / dt))
    k_gain = policy.k_expert
    a_mat, b_mat = system.a_matrix, system.b_matrix
    nonlinear = cfg.sim.plant == "nonlinear"
    quad = cfg.quad
    exc_cfg = cfg.excitation

    traj_rows = []
    met_rows = []
    fi_rows = []
    max_increase = 0.0
    prev_delta = None
    last_version = stack.version
    stack_full_sample = -1
    diverged = False

    def plant_deriv(t: float, state: np.ndarray) -> np.ndarray:
        u_cmd = -(k_gain @ state) + excitation_signal(exc_cfg, t)
        if nonlinear:
            return nonlinear_derivative(quad, state, u_cmd)
        return a_mat @ state + b_mat @ u_cmd

    for istep in range(n_steps + 1):
        t = istep * dt
        if istep % per_sample == 0:
            u_pilot, u_cmd = commanded_input(policy, exc_cfg, x, t)
            stack.record(t, x, u_pilot)
            if stack.is_full and stack_full_sample < 0:
                stack_full_sample = len(met_rows)
            fresh_delta = float(np.linalg.norm(delta(stack, observer.w)))
            m = metrics(observer, system, policy)
            report = stack.informativity_report()
            met_rows.append((t, fresh_delta, m.gain_error, m.q_error,
                             m.r_error, m.hjb_res, stack.condition_number()))
            fi_rows.append((report.state_spans, report.sym_spans,
                            report.range_ok))
            traj_rows.append((t, x.copy(), u_pilot, u_cmd))
        if istep == n_steps:
            break
        if stack.version != last_version:
            prev_delta = None
            last_version = stack.version
        observer = step(observer, stack, dt)
        if observer.diverged_flag:
            diverged = True
            break
        if prev_delta is not None:
            max_increase = max(max_increase, observer.last_delta_norm - prev_delta)
        prev_delta = observer.last_delta_norm
        k1 = plant_deriv(t, x)
        k2 = plant_deriv(t + dt / 2, x + dt / 2 * k1)
        k3 = plant_deriv(t + dt / 2, x + dt / 2 * k2)
        k4 = plant_deriv(t + dt, x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    if diverged:
        nan = float("nan")
        final = EquivalenceMetrics(nan, nan, nan, nan, nan)
    else:
        m = metrics(observer, system, policy)
        final = EquivalenceMetrics(
            delta_norm=met_rows[-1][1], gain_error=m.gain_error,
            q_error=m.q_error, r_error=m.r_error, hjb_res=m.hjb_res)

    met = np.array(met_rows, dtype=float)
    fi = np.array(fi_rows, dtype=bool)
    return TrialRecord(
        trial_index=trial_index,
        seed=seed,
        diverged=diverged,
        init_mode=cfg.observer.init_mode,
        traj_t=np.array([r[0] for r in traj_rows]),
        traj_states=np.array([r[1] for r in traj_rows]),
        traj_u_pilot=np.array([r[2] for r in traj_rows]),
        traj_u_cmd=np.array([r[3] for r in traj_rows]),
        metrics_t=met[:, 0],
        delta_norms=met[:, 1],
        gain_errors=met[:, 2],
        q_errors=met[:, 3],
        r_errors=met[:, 4],
        hjb_residuals=met[:, 5],
        cond_numbers=met[:, 6],
        fi_state_span=fi[:, 0],
        fi_sym_span=fi[:, 1],
        fi_range=fi[:, 2],
        stack_full_sample=stack_full_sample,
        max_step_delta_increase=max_increase,
        final=final,
    )


def resolve_threads(explicit: int = None, trials: int = 1) -> int:
    """Worker count: explicit argument, then IRLPILOT_THREADS, then CPUs."""
    if explicit is None:
        env = os.environ.get("IRLPILOT_THREADS", "").strip()
        explicit = int(env) if env else (os.cpu_count() or 1)
    if explicit <= 0:
        return 1
    return max(1, min(int(explicit), int(trials)))


def _trial_task(args):
    cfg, idx = args
    return run_trial(cfg, idx)


def run_montecarlo(cfg: ExperimentConfig, threads: int = None) -> MonteCarloResult:
    """Run all configured trials and aggregate their final gain errors."""
    workers = resolve_threads(threads, cfg.trials)
    indices = list(range(cfg.trials))
    if workers == 1:
        records = [run_trial(cfg, i) for i in indices]
    else:
        with Pool(processes=workers) as pool:
            records = pool.map(_trial_task, [(cfg, i) for i in indices])
    finals = np.array([r.final.gain_error for r in records], dtype=float)
    single = cfg.trials == 1
    summary = MonteCarloSummary(
        trials=cfg.trials,
        mean_gain_error=float(np.mean(finals)),
        var_gain_error=0.0 if single else float(np.var(finals, ddof=1)),
        diverged_count=int(sum(r.diverged for r in records)),
        single_sample=single,
    )
    return MonteCarloResult(records=records, summary=summary)


# -- CSV emission --------------------------------------------------------


def _fmt(value) -> str:
    f = float(value)
    if math.isnan(f):
        return "NaN"
    if math.isinf(f):
        return "Inf" if f > 0 else "-Inf"
    return format(f, ".17g")


def write_trajectory_csv(record: TrialRecord, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(TRAJECTORY_COLUMNS) + "\n")
        for i in range(record.traj_t.shape[0]):
            cells = [_fmt(record.traj_t[i])]
            cells += [_fmt(v) for v in record.traj_states[i]]
            cells += [_fmt(v) for v in record.traj_u_pilot[i]]
            cells += [_fmt(v) for v in record.traj_u_cmd[i]]
            fh.write(",".join(cells) + "\n")


def write_metrics_csv(record: TrialRecord, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for i in range(record.metrics_t.shape[0]):
            cells = [
                _fmt(record.metrics_t[i]),
                _fmt(record.delta_norms[i]),
                _fmt(record.gain_errors[i]),
                _fmt(record.q_errors[i]),
                _fmt(record.r_errors[i]),
                _fmt(record.hjb_residuals[i]),
                _fmt(record.cond_numbers[i]),
                str(int(record.fi_state_span[i])),
                str(int(record.fi_sym_span[i])),
                str(int(record.fi_range[i])),
            ]
            fh.write(",".join(cells) + "\n")


def write_summary_csv(records, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for r in records:
            fh.write(",".join([
                str(r.trial_index),
                str(r.seed),
                _fmt(r.final.gain_error),
                _fmt(r.final.q_error),
                _fmt(r.final.r_error),
                str(int(r.diverged)),
            ]) + "\n")


def write_outputs(result: MonteCarloResult, out_dir) -> None:
    """Per-trial trajectory/metrics files plus the study summary."""
    os.makedirs(out_dir, exist_ok=True)
    for r in result.records:
        trial_dir = os.path.join(out_dir, f"trial_{r.trial_index:02d}")
        os.makedirs(trial_dir, exist_ok=True)
        write_trajectory_csv(r, os.path.join(trial_dir, "trajectory.csv"))
        write_metrics_csv(r, os.path.join(trial_dir, "metrics.csv"))
    write_summary_csv(result.records, os.path.join(out_dir, "summary.csv"))
