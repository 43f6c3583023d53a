"""Linear time-invariant systems, LQR synthesis, and equivalence checks.

Provides the continuous algebraic Riccati equation (CARE) solvers used to
build the surrogate pilot, PBH structural tests for stabilizability and
detectability, and the residual/gain metrics that decide whether an
estimated cost functional is equivalent to the true one.

Two independent CARE methods are implemented on purpose: the ordered-Schur
decomposition of the Hamiltonian matrix (primary) and the Newton-Kleinman
iteration (cross-check), so each can serve as an oracle for the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import schur, solve_continuous_lyapunov

__all__ = [
    "LtiError",
    "DimensionMismatch",
    "NoStabilizingSolution",
    "NotPSD",
    "SingularRHat",
    "LinearSystem",
    "CostFunctional",
    "RiccatiSolution",
    "EquivalenceReport",
    "solve_are",
    "solve_are_newton",
    "pbh_stabilizable",
    "pbh_detectable",
    "sqrtm_psd",
    "hjb_residual",
    "check_equivalent_solution",
]

# Singular values below RANK_RTOL * (largest singular value) count as zero.
RANK_RTOL = 1e-9
# Eigenvalues with real part >= -UNSTABLE_RTOL must pass the PBH rank test.
UNSTABLE_RTOL = 1e-9
# R-hat condition numbers above this are treated as singular.
RHAT_COND_MAX = 1e12


class LtiError(Exception):
    """Base class for errors raised by this module."""


class DimensionMismatch(LtiError):
    """Matrix shapes are inconsistent with each other."""


class NoStabilizingSolution(LtiError):
    """The CARE solve did not produce a stabilizing solution."""


class NotPSD(LtiError):
    """A matrix required to be positive semidefinite is not."""


class SingularRHat(LtiError):
    """An estimated control penalty matrix is not invertible at threshold."""


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    a = np.array(a, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LinearSystem:
    """State-space pair (A, B) for dX/dt = A X + B U."""

    a_matrix: np.ndarray
    b_matrix: np.ndarray

    def __post_init__(self):
        a = _as_matrix(self.a_matrix, "a_matrix")
        b = _as_matrix(self.b_matrix, "b_matrix")
        if a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"a_matrix must be square, got {a.shape}")
        if b.shape[0] != a.shape[0]:
            raise DimensionMismatch(
                f"b_matrix has {b.shape[0]} rows, expected {a.shape[0]}"
            )
        if a.shape[0] < 1 or b.shape[1] < 1:
            raise DimensionMismatch("state and input dimensions must be >= 1")
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "b_matrix", b)

    @property
    def n(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def m(self) -> int:
        return self.b_matrix.shape[1]


@dataclass(frozen=True)
class CostFunctional:
    """Quadratic penalty pair (Q, R) with structural sparsity masks.

    The masks mark entries that are structurally nonzero; masked-off
    entries must be exactly zero. When omitted they default to the exact
    nonzero pattern of the given matrices.
    """

    q_matrix: np.ndarray
    r_matrix: np.ndarray
    q_mask: np.ndarray = None
    r_mask: np.ndarray = None

    def __post_init__(self):
        q = _as_matrix(self.q_matrix, "q_matrix")
        r = _as_matrix(self.r_matrix, "r_matrix")
        if q.shape[0] != q.shape[1] or r.shape[0] != r.shape[1]:
            raise DimensionMismatch("Q and R must be square")
        if np.abs(q - q.T).max() > 1e-12:
            raise ValueError("Q must be symmetric within 1e-12")
        if np.abs(r - r.T).max() > 1e-12:
            raise ValueError("R must be symmetric within 1e-12")
        if np.linalg.eigvalsh(q).min() < -1e-10:
            raise NotPSD("Q has an eigenvalue below -1e-10")
        if np.linalg.eigvalsh(r).min() <= 0:
            raise ValueError("R must be positive definite")
        q_mask = self.q_mask if self.q_mask is not None else q != 0
        r_mask = self.r_mask if self.r_mask is not None else r != 0
        q_mask = np.ascontiguousarray(np.asarray(q_mask, dtype=bool))
        r_mask = np.ascontiguousarray(np.asarray(r_mask, dtype=bool))
        if q_mask.shape != q.shape or r_mask.shape != r.shape:
            raise DimensionMismatch("mask shapes must match their matrices")
        if not (np.array_equal(q_mask, q_mask.T) and np.array_equal(r_mask, r_mask.T)):
            raise ValueError("masks must be symmetric")
        if np.any(q[~q_mask] != 0) or np.any(r[~r_mask] != 0):
            raise ValueError("masked-off entries must be exactly zero")
        q_mask.setflags(write=False)
        r_mask.setflags(write=False)
        object.__setattr__(self, "q_matrix", q)
        object.__setattr__(self, "r_matrix", r)
        object.__setattr__(self, "q_mask", q_mask)
        object.__setattr__(self, "r_mask", r_mask)

    @property
    def n(self) -> int:
        return self.q_matrix.shape[0]

    @property
    def m(self) -> int:
        return self.r_matrix.shape[0]


@dataclass(frozen=True)
class RiccatiSolution:
    """Stabilizing CARE solution S with its feedback gain K = R^-1 B' S."""

    s_matrix: np.ndarray
    k_gain: np.ndarray
    residual_norm: float


@dataclass(frozen=True)
class EquivalenceReport:
    """Both distances checked by an equivalence test."""

    hjb_residual: float
    gain_error: float
    varpi: float

    @property
    def equivalent(self) -> bool:
        return self.hjb_residual <= self.varpi and self.gain_error <= self.varpi


def _check_dims(system: LinearSystem, cost: CostFunctional) -> None:
    if cost.n != system.n or cost.m != system.m:
        raise DimensionMismatch(
            f"cost is ({cost.n}, {cost.m}), system is ({system.n}, {system.m})"
        )


def _care_residual(a, b, q, r, s) -> float:
    res = a.T @ s + s @ a - s @ b @ np.linalg.solve(r, b.T @ s) + q
    return float(np.linalg.norm(res, "fro"))


def _finish_solution(system: LinearSystem, cost: CostFunctional, s: np.ndarray,
                     method: str) -> RiccatiSolution:
    a, b, q, r = system.a_matrix, system.b_matrix, cost.q_matrix, cost.r_matrix
    s = 0.5 * (s + s.T)
    k = np.linalg.solve(r, b.T @ s)
    closed = np.linalg.eigvals(a - b @ k)
    if closed.real.max() >= 0:
        raise NoStabilizingSolution(f"{method}: closed loop is not Hurwitz")
    if np.linalg.eigvalsh(s).min() < -1e-10 * max(1.0, np.linalg.norm(s, 2)):
        raise NoStabilizingSolution(f"{method}: solution is not PSD")
    residual = _care_residual(a, b, q, r, s)
    if residual >= 1e-9 * max(1.0, np.linalg.norm(q, "fro")):
        raise NoStabilizingSolution(
            f"{method}: residual {residual:.3e} exceeds tolerance"
        )
    s.setflags(write=False)
    k.setflags(write=False)
    return RiccatiSolution(s_matrix=s, k_gain=k, residual_norm=residual)


def solve_are(system: LinearSystem, cost: CostFunctional) -> RiccatiSolution:
    """Solve the CARE by the ordered-Schur method on the Hamiltonian.

    The stable invariant subspace of H = [[A, -B R^-1 B'], [-Q, -A']] is
    extracted with a real Schur decomposition sorted to the left half
    plane; S follows from the subspace basis. Requires (A, B) stabilizable
    and (A, sqrt(Q)) detectable (see the PBH tests).
    """
    _check_dims(system, cost)
    a, b, q, r = system.a_matrix, system.b_matrix, cost.q_matrix, cost.r_matrix
    n = system.n
    brb = b @ np.linalg.solve(r, b.T)
    ham = np.block([[a, -brb], [-q, -a.T]])
    try:
        _, z, sdim = schur(ham, output="real", sort="lhp")
    except np.linalg.LinAlgError as exc:
        raise NoStabilizingSolution(f"Schur decomposition failed: {exc}") from exc
    if sdim != n:
        raise NoStabilizingSolution(
            f"Hamiltonian has {sdim} stable eigenvalues, expected {n}"
        )
    u1 = z[:n, :n]
    u2 = z[n:, :n]
    try:
        s = np.linalg.solve(u1.T, u2.T).T
    except np.linalg.LinAlgError as exc:
        raise NoStabilizingSolution("stable subspace basis is singular") from exc
    return _finish_solution(system, cost, s, "schur")


def solve_are_newton(system: LinearSystem, cost: CostFunctional,
                     k_init: np.ndarray = None, max_iter: int = 60,
                     tol: float = 1e-12) -> RiccatiSolution:
    """Solve the CARE by Newton-Kleinman iteration (Lyapunov sweeps).

    Used as an independent cross-check of :func:`solve_are`. Iterates
    until the residual drops below ``tol * max(1, |Q|_F)`` or stalls.
    When no stabilizing initial gain is supplied, one is built with
    Bass's method, which needs (A, B) controllable unless A is already
    Hurwitz.
    """
    _check_dims(system, cost)
    a, b, q, r = system.a_matrix, system.b_matrix, cost.q_matrix, cost.r_matrix
    if k_init is not None:
        k = np.asarray(k_init, dtype=float)
    elif np.linalg.eigvals(a).real.max() < -1e-6:
        # comfortably stable: the zero policy seeds the iteration; for
        # marginal A the Lyapunov solve would be ill posed, so fall
        # through to Bass
        k = np.zeros((system.m, system.n))
    else:
        # Bass: P solves (A + beta I) P + P (A + beta I)' = 2 B B' with
        # beta beyond the spectral radius; K0 = B' P^-1 stabilizes A - B K0.
        beta = np.linalg.norm(a, "fro") + 1.0
        p = solve_continuous_lyapunov(a + beta * np.eye(system.n),
                                      2.0 * b @ b.T)
        try:
            k = np.linalg.solve(p, b).T
        except np.linalg.LinAlgError as exc:
            raise NoStabilizingSolution(
                "Bass initialization failed; (A, B) may be uncontrollable"
            ) from exc
    if np.linalg.eigvals(a - b @ k).real.max() >= 0:
        raise NoStabilizingSolution("initial policy is not stabilizing")
    # Quadratic convergence down to a roundoff plateau set by the Lyapunov
    # solves; stop at the plateau and keep the best iterate seen.
    best_s, best_res = None, np.inf
    stalled = 0
    for _ in range(max_iter):
        acl = a - b @ k
        s = solve_continuous_lyapunov(acl.T, -(q + k.T @ r @ k))
        s = 0.5 * (s + s.T)
        k = np.linalg.solve(r, b.T @ s)
        res = _care_residual(a, b, q, r, s)
        if res < best_res:
            best_s, best_res = s, res
            stalled = 0
        else:
            stalled += 1
        if best_res <= tol * max(1.0, np.linalg.norm(q, "fro")) or stalled >= 3:
            break
    if best_s is None:
        raise NoStabilizingSolution("Newton-Kleinman did not converge")
    return _finish_solution(system, cost, best_s, "newton-kleinman")


def sqrtm_psd(q: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in [-1e-10, 0) are clipped to zero to tolerate roundoff;
    anything lower raises NotPSD.
    """
    q = np.asarray(q, dtype=float)
    w, v = np.linalg.eigh(0.5 * (q + q.T))
    if w.min() < -1e-10:
        raise NotPSD(f"matrix has eigenvalue {w.min():.3e} < -1e-10")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def _unstable_eigs(a: np.ndarray) -> np.ndarray:
    eigs = np.linalg.eigvals(a)
    return eigs[eigs.real >= -UNSTABLE_RTOL]


def _rank(mat: np.ndarray) -> int:
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.count_nonzero(sv > RANK_RTOL * sv[0]))


def pbh_stabilizable(system: LinearSystem) -> bool:
    """PBH test: rank [A - lambda I, B] = n for every unstable eigenvalue."""
    a, b, n = system.a_matrix, system.b_matrix, system.n
    eye = np.eye(n)
    for lam in _unstable_eigs(a):
        if _rank(np.hstack([a - lam * eye, b])) < n:
            return False
    return True


def pbh_detectable(system_a: np.ndarray, q_sqrt: np.ndarray) -> bool:
    """PBH test: rank [A - lambda I; sqrt(Q)] = n for every unstable eigenvalue.

    ``q_sqrt`` is a square root of the state penalty, e.g. from
    :func:`sqrtm_psd`.
    """
    a = np.asarray(system_a, dtype=float)
    c = np.asarray(q_sqrt, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or c.shape[1] != n:
        raise DimensionMismatch("A must be square and sqrt(Q) conformable")
    eye = np.eye(n)
    for lam in _unstable_eigs(a):
        if _rank(np.vstack([a - lam * eye, c])) < n:
            return False
    return True


def hjb_residual(system: LinearSystem, s_hat: np.ndarray, q_hat: np.ndarray,
                 r_hat: np.ndarray) -> float:
    """Frobenius norm of A'S + SA - S B R^-1 B' S + Q for the estimates."""
    r_hat = np.asarray(r_hat, dtype=float)
    if np.linalg.cond(r_hat) >= RHAT_COND_MAX:
        raise SingularRHat("estimated R is not invertible at threshold 1e12")
    return _care_residual(system.a_matrix, system.b_matrix,
                          np.asarray(q_hat, float), r_hat,
                          np.asarray(s_hat, float))


def check_equivalent_solution(system: LinearSystem, s_hat, q_hat, r_hat,
                              k_expert, varpi: float) -> tuple[bool, EquivalenceReport]:
    """Decide whether (S, Q, R) estimates are a varpi-equivalent solution.

    Equivalence requires both the HJB residual and the induced 2-norm
    distance between R^-1 B' S and the expert gain to be at most varpi.
    """
    res = hjb_residual(system, s_hat, q_hat, r_hat)
    k_hat = np.linalg.solve(np.asarray(r_hat, float),
                            system.b_matrix.T @ np.asarray(s_hat, float))
    gain_err = float(np.linalg.norm(k_hat - np.asarray(k_expert, float), 2))
    report = EquivalenceReport(hjb_residual=res, gain_error=gain_err,
                               varpi=float(varpi))
    return report.equivalent, report
