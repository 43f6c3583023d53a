"""History stack: stored regressor pairs with condition-number replacement.

Each recorded sample (t, X, U) contributes five regressor rows (one
scalar-equation row, four vector-equation rows) and the matching data
vector [-U1^2 r1, -2 U1 r1, 0, 0, 0]. Until the stack is full, samples
are appended. Once full, an incoming sample replaces the stored slot
whose replacement minimizes the condition number of S'S + eps I over all
slots, and only if that strictly beats the current value; otherwise the
sample is discarded.

The per-slot Gram contributions are cached so the N candidate matrices
are formed by rank-limited updates rather than rebuilding S'S; candidate
evaluation still performs one dense symmetric eigendecomposition per
slot, which dominates the simulation runtime. The committed Gram matrix
is taken verbatim from the evaluated candidate so the accepted condition
number is reproducible bit for bit.

Single-writer type: one trial loop mutates a stack; diagnostic reads
happen between writes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .basis import (
    R1_VALUE,
    WeightLayout,
    sigma_delta_row,
    sigma_delta_u_block,
)
from .lti import LinearSystem

__all__ = ["HistoryStack", "InformativityReport", "RANGE_RESIDUAL_TOL"]

# |Sigma w_ls - Sigma_u| below this counts as Sigma_u in range(Sigma).
RANGE_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class InformativityReport:
    """Data-informativity diagnostics for a stack's stored samples.

    ``state_spans`` and ``sym_spans`` are the span conditions on the
    stored states and their symmetric outer products; ``range_ok`` is the
    least-squares proxy for the data vector lying in the regressor's
    range. The ``min_eig_*`` fields quantify the eps-informativity
    margins against ``eps_fi``.
    """

    n_samples: int
    state_rank: int
    state_spans: bool
    sym_rank: int
    sym_spans: bool
    range_residual: float
    range_ok: bool
    min_eig_states: float
    min_eig_sym: float
    eps_fi: float

    @property
    def eps_informative(self) -> bool:
        return self.min_eig_states > self.eps_fi and self.min_eig_sym > self.eps_fi


class HistoryStack:
    """Fixed-capacity store of regressor rows with greedy data selection."""

    def __init__(self, system: LinearSystem, layout: WeightLayout,
                 capacity: int = 100, epsilon: float = 0.002):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        self.system = system
        self.layout = layout
        self.capacity = int(capacity)
        self.epsilon = float(epsilon)
        d = layout.total_dim
        rows_per = 1 + layout.m
        self._t = np.zeros(capacity)
        self._x = np.zeros((capacity, layout.n))
        self._u = np.zeros((capacity, layout.m))
        self._rows = np.zeros((capacity, rows_per, d))
        self._su = np.zeros((capacity, rows_per))
        self._grams = np.zeros((capacity, d, d))
        self._gram = np.zeros((d, d))
        self._eps_eye = epsilon * np.eye(d)
        self._occ = 0
        self._last_t = -np.inf
        self._version = 0
        self._solver_cache: dict[float, tuple[int, object]] = {}
        self._cond_cache: tuple[int, float] = None

    # -- bookkeeping ----------------------------------------------------

    @property
    def occupancy(self) -> int:
        return self._occ

    @property
    def is_full(self) -> bool:
        return self._occ == self.capacity

    @property
    def version(self) -> int:
        """Increments whenever the stored contents change."""
        return self._version

    @property
    def sigma(self) -> np.ndarray:
        """Stacked regressor rows over occupied slots, shape (5k, dim)."""
        d = self.layout.total_dim
        return self._rows[:self._occ].reshape(-1, d)

    @property
    def sigma_u(self) -> np.ndarray:
        return self._su[:self._occ].reshape(-1)

    @property
    def times(self) -> np.ndarray:
        return self._t[:self._occ].copy()

    @property
    def states(self) -> np.ndarray:
        return self._x[:self._occ].copy()

    @property
    def controls(self) -> np.ndarray:
        return self._u[:self._occ].copy()

    def build_rows(self, x, u) -> tuple[np.ndarray, np.ndarray]:
        """Regressor rows and data vector one sample would contribute."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        rows = np.vstack([
            sigma_delta_row(self.system, self.layout, x, u),
            sigma_delta_u_block(self.system, self.layout, x, u),
        ])
        su = np.zeros(1 + self.layout.m)
        su[0] = -u[0] ** 2 * R1_VALUE
        su[1] = -2.0 * u[0] * R1_VALUE
        return rows, su

    # -- condition numbers ----------------------------------------------

    def _cond_of(self, gram: np.ndarray) -> float:
        ev = np.linalg.eigvalsh(gram + self._eps_eye)
        if ev[-1] == 0.0:
            return 1.0
        if ev[0] <= 0.0:
            return np.inf
        return float(ev[-1] / ev[0])

    def condition_number(self) -> float:
        """Eigenvalue ratio of S'S + eps I (1.0 for an empty stack)."""
        if self._cond_cache is None or self._cond_cache[0] != self._version:
            self._cond_cache = (self._version, self._cond_of(self._gram))
        return self._cond_cache[1]

    # -- recording --------------------------------------------------------

    def record(self, t: float, x, u) -> bool:
        """Offer a sample; returns whether it was stored.

        Samples must arrive in strictly increasing time order. A full
        stack accepts the sample only through the single replacement that
        strictly lowers the condition number the most.
        """
        t = float(t)
        if t <= self._last_t:
            raise ValueError(f"samples must be time-ordered: {t} after {self._last_t}")
        self._last_t = t
        rows, su = self.build_rows(x, u)
        gram_c = rows.T @ rows

        if self._occ < self.capacity:
            i = self._occ
            self._occ += 1
            self._store(i, t, x, u, rows, su)
            self._gram = self._gram + gram_c
            self._version += 1
            return True

        m_plus = self._gram + gram_c
        cands = m_plus[None, :, :] - self._grams
        conds = np.empty(self.capacity)
        for i in range(self.capacity):
            conds[i] = self._cond_of(cands[i])
        best = int(np.argmin(conds))
        if not conds[best] < self.condition_number():
            return False
        self._gram = cands[best].copy()
        self._store(best, t, x, u, rows, su)
        self._version += 1
        return True

    def _store(self, i, t, x, u, rows, su) -> None:
        self._t[i] = t
        self._x[i] = x
        self._u[i] = u
        self._rows[i] = rows
        self._su[i] = su
        self._grams[i] = rows.T @ rows

    # -- solves -----------------------------------------------------------

    def regularized_cholesky(self, epsilon: float):
        """Cached Cholesky factor of S'S + epsilon I for the current contents.

        Raises ``numpy.linalg.LinAlgError`` when the matrix is not
        positive definite (possible only for epsilon = 0).
        """
        key = float(epsilon)
        cached = self._solver_cache.get(key)
        if cached is not None and cached[0] == self._version:
            return cached[1]
        mat = self._gram + key * np.eye(self.layout.total_dim)
        factor = scipy.linalg.cho_factor(mat, lower=True)
        self._solver_cache[key] = (self._version, factor)
        return factor

    # -- diagnostics ------------------------------------------------------

    def informativity_report(self, eps_fi: float = None) -> InformativityReport:
        """Finite-informativity diagnostics over the stored samples."""
        if self._occ == 0:
            raise ValueError("stack is empty")
        eps_fi = self.epsilon if eps_fi is None else float(eps_fi)
        n = self.layout.n
        xs = self._x[:self._occ]
        x_mat = xs.T
        outer = xs[:, :, None] * xs[:, None, :]
        rows, cols = np.triu_indices(n)
        z_mat = outer[:, rows, cols].T

        state_rank = int(np.linalg.matrix_rank(x_mat))
        sym_rank = int(np.linalg.matrix_rank(z_mat))
        sym_dim = n * (n + 1) // 2

        sig = self.sigma
        sig_u = self.sigma_u
        w_ls, *_ = scipy.linalg.lstsq(sig, sig_u, lapack_driver="gelsy")
        range_residual = float(np.linalg.norm(sig @ w_ls - sig_u))

        return InformativityReport(
            n_samples=self._occ,
            state_rank=state_rank,
            state_spans=state_rank == n,
            sym_rank=sym_rank,
            sym_spans=sym_rank == sym_dim,
            range_residual=range_residual,
            range_ok=range_residual < RANGE_RESIDUAL_TOL,
            min_eig_states=float(np.linalg.eigvalsh(x_mat @ x_mat.T)[0]),
            min_eig_sym=float(np.linalg.eigvalsh(z_mat @ z_mat.T)[0]),
            eps_fi=eps_fi,
        )

    def to_csv(self, path) -> None:
        """Dump stored samples, one row per slot (debugging aid)."""
        state_names = ["x", "y", "z", "xdot", "ydot", "zdot",
                       "phi", "theta", "psi", "phidot", "thetadot", "psidot"]
        if self.layout.n != len(state_names):
            state_names = [f"x{i+1}" for i in range(self.layout.n)]
        header = ["t"] + state_names + [f"u{j+1}" for j in range(self.layout.m)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self._occ):
                writer.writerow(
                    [repr(float(self._t[i]))]
                    + [repr(float(v)) for v in self._x[i]]
                    + [repr(float(v)) for v in self._u[i]]
                )
