"""Quadratic basis functions, regressor rows, and weight packing.

Quadratic forms are parameterized by their upper triangle in row-major
order. Two packings appear:

*   ``sigma_quad(x)`` evaluates the basis
    [x1^2, 2 x1 x2, ..., 2 x1 xn, x2^2, ...]; pairing it with ``uvec(M)``
    (upper triangle, no doubling) reproduces x' M x.
*   ``uvec(x x')`` is the plain vectorization used by the data
    informativity checks; it carries no factors of 2.

A `WeightLayout` selects which state-penalty and control-penalty
components are estimated. The full layout keeps all 78 + 78 + 9 = 165
unknowns; the sparse layout derived from the experiment's diagonal cost
keeps 78 + 4 + 3 = 85. The first control-penalty component r1 = R(1,1)
is never estimated; it is pinned to one to fix the scale of the
recovered cost functional.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .lti import CostFunctional, LinearSystem

__all__ = [
    "sigma_quad",
    "grad_sigma_quad",
    "sigma_r1",
    "sigma_r2",
    "uvec",
    "sym_from_uvec",
    "tri_dim",
    "WeightLayout",
    "WeightVector",
    "pack_weights",
    "extract_matrices",
    "sigma_delta_row",
    "sigma_delta_u_block",
]

R1_VALUE = 1.0  # pinned scale: first control-penalty component


def tri_dim(n: int) -> int:
    return n * (n + 1) // 2


@lru_cache(maxsize=16)
def _tri_indices(n: int):
    """(rows, cols, doubling) for the row-major upper triangle of n x n."""
    rows, cols = np.triu_indices(n)
    doubling = np.where(rows == cols, 1.0, 2.0)
    for arr in (rows, cols, doubling):
        arr.setflags(write=False)
    return rows, cols, doubling


@lru_cache(maxsize=16)
def _tri_position(n: int) -> dict:
    """Maps (i, j), i <= j, to its packed upper-triangle index."""
    rows, cols, _ = _tri_indices(n)
    return {(int(i), int(j)): k for k, (i, j) in enumerate(zip(rows, cols))}


def _quad_basis(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    rows, cols, doubling = _tri_indices(v.shape[0])
    return doubling * v[rows] * v[cols]


def sigma_quad(x: np.ndarray) -> np.ndarray:
    """State quadratic basis; uvec(M) @ sigma_quad(x) == x' M x."""
    return _quad_basis(x)


def grad_sigma_quad(x: np.ndarray) -> np.ndarray:
    """Analytic Jacobian of sigma_quad, shape (n(n+1)/2, n)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    rows, cols, doubling = _tri_indices(n)
    k = np.arange(tri_dim(n))
    grad = np.zeros((tri_dim(n), n))
    np.add.at(grad, (k, rows), doubling * x[cols])
    np.add.at(grad, (k, cols), doubling * x[rows])
    return grad


def sigma_r1(u: np.ndarray) -> np.ndarray:
    """Control quadratic basis; uvec(R) @ sigma_r1(u) == u' R u."""
    return _quad_basis(u)


def sigma_r2(u: np.ndarray) -> np.ndarray:
    """Matrix basis with sigma_r2(u) @ uvec(R) == R u, shape (m, m(m+1)/2)."""
    u = np.asarray(u, dtype=float)
    m = u.shape[0]
    pos = _tri_position(m)
    out = np.zeros((m, tri_dim(m)))
    for i in range(m):
        for j in range(m):
            out[i, pos[(min(i, j), max(i, j))]] += u[j]
    return out


def uvec(mat: np.ndarray) -> np.ndarray:
    """Row-major upper-triangle vectorization of a symmetric matrix."""
    mat = np.asarray(mat, dtype=float)
    rows, cols, _ = _tri_indices(mat.shape[0])
    return mat[rows, cols]


def sym_from_uvec(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`uvec`."""
    v = np.asarray(v, dtype=float)
    if v.shape != (tri_dim(n),):
        raise ValueError(f"expected length {tri_dim(n)}, got {v.shape}")
    rows, cols, _ = _tri_indices(n)
    mat = np.zeros((n, n))
    mat[rows, cols] = v
    mat[cols, rows] = v
    return mat


@dataclass(frozen=True)
class WeightLayout:
    """Which packed components of the cost are estimated.

    ``q_indices`` index into the n(n+1)/2 state-penalty components;
    ``r_indices`` index into the m(m+1)/2 control-penalty components and
    never include component 0 (that is r1, pinned to one).
    """

    n: int
    m: int
    q_indices: tuple
    r_indices: tuple

    def __post_init__(self):
        q = tuple(int(i) for i in self.q_indices)
        r = tuple(int(i) for i in self.r_indices)
        if any(b <= a for a, b in zip(q, q[1:])) or any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("index lists must be strictly increasing")
        if q and not (0 <= q[0] and q[-1] < tri_dim(self.n)):
            raise ValueError("q_indices out of range")
        if r:
            if r[0] == 0:
                raise ValueError("r_indices must exclude component 0 (r1)")
            if not (0 < r[0] and r[-1] < tri_dim(self.m)):
                raise ValueError("r_indices out of range")
        object.__setattr__(self, "q_indices", q)
        object.__setattr__(self, "r_indices", r)

    @property
    def s_dim(self) -> int:
        return tri_dim(self.n)

    @property
    def total_dim(self) -> int:
        return self.s_dim + len(self.q_indices) + len(self.r_indices)

    @classmethod
    def full(cls, n: int = 12, m: int = 4) -> "WeightLayout":
        return cls(n=n, m=m, q_indices=tuple(range(tri_dim(n))),
                   r_indices=tuple(range(1, tri_dim(m))))

    @classmethod
    def from_cost(cls, cost: CostFunctional) -> "WeightLayout":
        """Sparse layout keeping only the masked-nonzero cost components.

        The state-penalty vector stays dense (the value matrix S is dense
        even for diagonal costs); only the Q and R components are pruned.
        """
        pos_q = _tri_position(cost.n)
        pos_r = _tri_position(cost.m)
        q_idx = sorted(pos_q[(i, j)] for i, j in zip(*np.nonzero(cost.q_mask))
                       if i <= j)
        r_idx = sorted(pos_r[(i, j)] for i, j in zip(*np.nonzero(cost.r_mask))
                       if i <= j and pos_r[(i, j)] != 0)
        return cls(n=cost.n, m=cost.m, q_indices=tuple(q_idx),
                   r_indices=tuple(r_idx))


@dataclass(frozen=True)
class WeightVector:
    """Packed estimate [w_s; w_q; w_r_minus] for one layout.

    ``r1`` is constant: the (1,1) control-penalty entry is the scale
    anchor and is never part of the estimate.
    """

    layout: WeightLayout
    w_s: np.ndarray
    w_q: np.ndarray
    w_r_minus: np.ndarray

    r1 = R1_VALUE

    def __post_init__(self):
        lay = self.layout
        w_s = np.ascontiguousarray(self.w_s, dtype=float)
        w_q = np.ascontiguousarray(self.w_q, dtype=float)
        w_r = np.ascontiguousarray(self.w_r_minus, dtype=float)
        if w_s.shape != (lay.s_dim,):
            raise ValueError(f"w_s must have shape ({lay.s_dim},)")
        if w_q.shape != (len(lay.q_indices),):
            raise ValueError(f"w_q must have shape ({len(lay.q_indices)},)")
        if w_r.shape != (len(lay.r_indices),):
            raise ValueError(f"w_r_minus must have shape ({len(lay.r_indices)},)")
        for arr in (w_s, w_q, w_r):
            arr.setflags(write=False)
        object.__setattr__(self, "w_s", w_s)
        object.__setattr__(self, "w_q", w_q)
        object.__setattr__(self, "w_r_minus", w_r)

    @property
    def packed(self) -> np.ndarray:
        return np.concatenate([self.w_s, self.w_q, self.w_r_minus])

    @classmethod
    def from_packed(cls, layout: WeightLayout, packed: np.ndarray) -> "WeightVector":
        packed = np.asarray(packed, dtype=float)
        if packed.shape != (layout.total_dim,):
            raise ValueError(f"expected length {layout.total_dim}")
        nq = len(layout.q_indices)
        return cls(layout=layout, w_s=packed[:layout.s_dim],
                   w_q=packed[layout.s_dim:layout.s_dim + nq],
                   w_r_minus=packed[layout.s_dim + nq:])

    @classmethod
    def zeros(cls, layout: WeightLayout) -> "WeightVector":
        return cls.from_packed(layout, np.zeros(layout.total_dim))


def pack_weights(layout: WeightLayout, s_hat: np.ndarray, q_hat: np.ndarray,
                 r_hat: np.ndarray) -> WeightVector:
    """Pack (S, Q, R) matrices into a weight vector for the layout.

    Only the components the layout retains are read; the caller is
    responsible for scaling so that R(1,1) equals one if round-trip
    consistency with :func:`extract_matrices` is wanted.
    """
    w_s = uvec(s_hat)
    w_q = uvec(q_hat)[list(layout.q_indices)]
    w_r = uvec(r_hat)[list(layout.r_indices)]
    return WeightVector(layout=layout, w_s=w_s, w_q=w_q, w_r_minus=w_r)


def extract_matrices(layout: WeightLayout, w: WeightVector
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rebuild (S_hat, Q_hat, R_hat) from a weight vector.

    Components the layout dropped are exactly zero; R_hat(1,1) is the
    pinned scale r1 = 1.
    """
    s_hat = sym_from_uvec(w.w_s, layout.n)
    q_vec = np.zeros(tri_dim(layout.n))
    q_vec[list(layout.q_indices)] = w.w_q
    q_hat = sym_from_uvec(q_vec, layout.n)
    r_vec = np.zeros(tri_dim(layout.m))
    r_vec[0] = w.r1
    r_vec[list(layout.r_indices)] = w.w_r_minus
    r_hat = sym_from_uvec(r_vec, layout.m)
    return s_hat, q_hat, r_hat


def sigma_delta_row(system: LinearSystem, layout: WeightLayout,
                    x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Scalar-equation regressor row, length ``layout.total_dim``.

    Concatenates the value-derivative block (A x + B u)' (grad sigma)',
    the retained state-penalty basis components, and the retained
    control-penalty basis components (the u1^2 component is never
    retained; its contribution sits on the data side of the regression).
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    xdot = system.a_matrix @ x + system.b_matrix @ u
    grad = grad_sigma_quad(x)
    return np.concatenate([
        grad @ xdot,
        sigma_quad(x)[list(layout.q_indices)],
        sigma_r1(u)[list(layout.r_indices)],
    ])


def sigma_delta_u_block(system: LinearSystem, layout: WeightLayout,
                        x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vector-equation regressor block, shape (m, layout.total_dim).

    Concatenates B' (grad sigma)', a zero block over the state-penalty
    components, and twice the retained columns of sigma_r2.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    grad = grad_sigma_quad(x)
    block = np.zeros((layout.m, layout.total_dim))
    block[:, :layout.s_dim] = (grad @ system.b_matrix).T
    block[:, layout.s_dim + len(layout.q_indices):] = \
        2.0 * sigma_r2(u)[:, list(layout.r_indices)]
    return block
