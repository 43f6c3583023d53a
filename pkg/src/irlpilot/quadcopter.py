"""Quadcopter plant with an embedded velocity/attitude autopilot.

State vector (12 entries, NED frame, SI units):

    X = [x, y, z, xdot, ydot, zdot, phi, theta, psi,
         phidot, thetadot, psidot]

Command vector (what the pilot issues, 4 entries):

    U = [xdot_d, ydot_d, zdot_d, psidot_d]

The autopilot converts velocity commands into thrust and torques through
proportional velocity loops and PD attitude loops. Closing that loop and
linearizing about hover gives the 12-state model consumed by the LQR
pilot and the observer; `verify_linearization` checks the hand-derived
matrices against a finite-difference Jacobian of the nonlinear closed
loop.

The desired-angle computation exists in two variants: the exact arctan
form and the small-angle form that replaces arctan with a slope of pi/4.
The linear model matches the pi/4 variant; the arctan variant differs in
its velocity couplings by the factor 4/pi at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lti import LinearSystem

__all__ = [
    "QuadParams",
    "SingularThrustDenominator",
    "paper_params",
    "autopilot_angles",
    "thrust_and_torques",
    "nonlinear_derivative",
    "build_linear_model",
    "verify_linearization",
    "LinearizationReport",
]

# Minimum magnitude of the thrust denominator g + kp13 (zdot_d - zdot).
DENOM_MIN = 1e-6

VARIANTS = ("linearized", "full_arctan")


class SingularThrustDenominator(Exception):
    """The autopilot's thrust denominator is too close to zero."""


@dataclass(frozen=True)
class QuadParams:
    """Physical parameters and autopilot gains.

    ``k_p23`` is carried along with the other gains for completeness but
    no control law uses it.
    """

    mass: float
    arm_length: float
    i_xx: float
    i_yy: float
    i_zz: float
    k_t: float
    gravity: float
    k_p11: float
    k_p12: float
    k_p13: float
    k_p21: float
    k_p22: float
    k_p23: float
    k_d1: float
    k_d2: float
    k_d3: float

    def __post_init__(self):
        for name in ("mass", "arm_length", "i_xx", "i_yy", "i_zz", "gravity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.k_t < 0:
            raise ValueError("k_t must be nonnegative")

    @property
    def b1(self) -> float:
        return self.arm_length / self.i_xx

    @property
    def b2(self) -> float:
        return self.arm_length / self.i_yy

    @property
    def b3(self) -> float:
        return 1.0 / self.i_zz


def paper_params() -> QuadParams:
    """Parameters of the custom-built quadcopter used in the experiments."""
    return QuadParams(
        mass=0.579902,
        arm_length=0.107642,
        i_xx=0.002261,
        i_yy=0.002824,
        i_zz=0.002097,
        k_t=0.01,
        gravity=9.81,
        k_p11=-5.25,
        k_p12=-5.25,
        k_p13=3.0,
        k_p21=3.5,
        k_p22=3.5,
        k_p23=0.35,
        k_d1=0.4,
        k_d2=0.4,
        k_d3=0.1,
    )


def _check_variant(variant: str) -> None:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


def autopilot_angles(params: QuadParams, state: np.ndarray, cmd: np.ndarray,
                     variant: str = "linearized") -> tuple[float, float]:
    """Desired pitch and roll (theta_d, phi_d) from velocity errors."""
    _check_variant(variant)
    xd_err = cmd[0] - state[3]
    yd_err = cmd[1] - state[4]
    zd_err = cmd[2] - state[5]
    psi = state[8]
    denom = params.gravity + params.k_p13 * zd_err
    if abs(denom) <= DENOM_MIN:
        raise SingularThrustDenominator(
            f"thrust denominator {denom:.3e} is below {DENOM_MIN:.0e}"
        )
    kx = params.k_p11 * xd_err
    ky = params.k_p12 * yd_err
    if variant == "full_arctan":
        theta_d = math.atan((ky * math.sin(psi) + kx * math.cos(psi)) / denom)
        phi_d = math.atan(
            math.cos(theta_d) * (kx * math.sin(psi) - ky * math.cos(psi)) / denom
        )
    else:
        theta_d = (math.pi / 4.0) * (ky * psi + kx) / denom
        phi_d = (math.pi / 4.0) * (kx * psi - ky) / denom
    return theta_d, phi_d


def thrust_and_torques(params: QuadParams, state: np.ndarray, cmd: np.ndarray,
                       theta_d: float, phi_d: float
                       ) -> tuple[float, float, float, float]:
    """Thrust F and body torques (tau1, tau2, tau3) from the autopilot."""
    f = params.mass * params.gravity + params.mass * params.k_p13 * (state[5] - cmd[2])
    tau1 = params.k_p21 * (phi_d - state[6]) - params.k_d1 * state[9]
    tau2 = params.k_p22 * (theta_d - state[7]) - params.k_d2 * state[10]
    tau3 = params.k_d3 * (cmd[3] - state[11])
    return f, tau1, tau2, tau3


def nonlinear_derivative(params: QuadParams, state: np.ndarray, cmd: np.ndarray,
                         variant: str = "linearized") -> np.ndarray:
    """Time derivative of the closed-loop state (autopilot embedded).

    Translational accelerations use the small-angle rotation matrix; the
    rotational equations keep the gyroscopic coupling terms that the
    linear model drops.
    """
    state = np.asarray(state, dtype=float)
    cmd = np.asarray(cmd, dtype=float)
    if state.shape != (12,) or cmd.shape != (4,):
        raise ValueError("state must have shape (12,), cmd shape (4,)")
    theta_d, phi_d = autopilot_angles(params, state, cmd, variant)
    f, tau1, tau2, tau3 = thrust_and_torques(params, state, cmd, theta_d, phi_d)

    phi, theta, psi = state[6], state[7], state[8]
    phidot, thetadot, psidot = state[9], state[10], state[11]
    m, kt, g = params.mass, params.k_t, params.gravity

    # Third column of the small-angle rotation matrix against [0, 0, -F].
    deriv = np.empty(12)
    deriv[0:3] = state[3:6]
    deriv[3] = (-f * (theta + phi * psi) - kt * state[3]) / m
    deriv[4] = (-f * (theta * psi - phi) - kt * state[4]) / m
    deriv[5] = g - f / m - kt * state[5] / m
    deriv[6:9] = state[9:12]
    deriv[9] = (thetadot * psidot * (params.i_yy - params.i_zz)
                + params.arm_length * tau1) / params.i_xx
    deriv[10] = (phidot * psidot * (params.i_zz - params.i_xx)
                 + params.arm_length * tau2) / params.i_yy
    deriv[11] = (thetadot * phidot * (params.i_xx - params.i_yy)
                 + tau3) / params.i_zz
    return deriv


def build_linear_model(params: QuadParams) -> LinearSystem:
    """Closed-loop linearization about hover as an explicit (A, B) pair.

    The six second-order equations are augmented with the kinematic rows
    (position derivatives equal velocities, angle derivatives equal
    rates) to realize the full 12-state model.
    """
    m, kt, g = params.mass, params.k_t, params.gravity
    b1, b2, b3 = params.b1, params.b2, params.b3

    a = np.zeros((12, 12))
    b = np.zeros((12, 4))
    a[0, 3] = a[1, 4] = a[2, 5] = 1.0
    a[6, 9] = a[7, 10] = a[8, 11] = 1.0
    # xddot = -g theta - (kt/m) xdot
    a[3, 7] = -g
    a[3, 3] = -kt / m
    # yddot = g phi - (kt/m) ydot
    a[4, 6] = g
    a[4, 4] = -kt / m
    # zddot = kp13 (zdot_d - zdot) - (kt/m) zdot
    a[5, 5] = -params.k_p13 - kt / m
    b[5, 2] = params.k_p13
    # phiddot: velocity coupling through phi_d, then PD attitude loop
    cphi = b1 * math.pi * params.k_p21 * params.k_p12 / (4.0 * g)
    a[9, 4] = cphi
    b[9, 1] = -cphi
    a[9, 6] = -b1 * params.k_p21
    a[9, 9] = -b1 * params.k_d1
    # thetaddot: velocity coupling through theta_d
    ctheta = b2 * math.pi * params.k_p22 * params.k_p11 / (4.0 * g)
    a[10, 3] = -ctheta
    b[10, 0] = ctheta
    a[10, 7] = -b2 * params.k_p22
    a[10, 10] = -b2 * params.k_d2
    # psiddot = b3 kd3 (psidot_d - psidot)
    a[11, 11] = -b3 * params.k_d3
    b[11, 3] = b3 * params.k_d3
    return LinearSystem(a_matrix=a, b_matrix=b)


@dataclass(frozen=True)
class LinearizationReport:
    """Largest entrywise deviations between the analytic and FD Jacobians."""

    max_a_error: float
    max_b_error: float
    variant: str

    def passed(self, tol: float = 1e-6) -> bool:
        return self.max_a_error < tol and self.max_b_error < tol


def verify_linearization(params: QuadParams, variant: str = "linearized",
                         step: float = 1e-5) -> LinearizationReport:
    """Compare (A, B) against a central-difference Jacobian at the origin.

    The pi/4-slope variant must agree entrywise to 1e-6. The arctan
    variant is exposed for inspection; its velocity couplings differ by
    design (unit slope instead of pi/4).
    """
    system = build_linear_model(params)
    x0 = np.zeros(12)
    u0 = np.zeros(4)

    a_fd = np.zeros((12, 12))
    for j in range(12):
        dx = np.zeros(12)
        dx[j] = step
        fp = nonlinear_derivative(params, x0 + dx, u0, variant)
        fm = nonlinear_derivative(params, x0 - dx, u0, variant)
        a_fd[:, j] = (fp - fm) / (2.0 * step)
    b_fd = np.zeros((12, 4))
    for j in range(4):
        du = np.zeros(4)
        du[j] = step
        fp = nonlinear_derivative(params, x0, u0 + du, variant)
        fm = nonlinear_derivative(params, x0, u0 - du, variant)
        b_fd[:, j] = (fp - fm) / (2.0 * step)

    return LinearizationReport(
        max_a_error=float(np.abs(a_fd - system.a_matrix).max()),
        max_b_error=float(np.abs(b_fd - system.b_matrix).max()),
        variant=variant,
    )
