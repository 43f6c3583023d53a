"""Observer-based inverse reinforcement learning of an LQR pilot's cost.

Simulates a quadcopter whose velocity commands come from a surrogate LQR
pilot, and runs a regularized history stack observer that recovers, online,
a cost functional equivalent to the pilot's. See the harness subpackage
for the experiment runner and CLI.
"""

__version__ = "0.1.0"

from . import basis, harness, history_stack, lti, pilot, quadcopter, rhso
from .lti import CostFunctional, LinearSystem, RiccatiSolution, solve_are
from .pilot import ExcitationConfig, PilotPolicy, make_paper_cost, synthesize_pilot
from .quadcopter import QuadParams, build_linear_model, paper_params
from .basis import WeightLayout, WeightVector
from .history_stack import HistoryStack
from .rhso import EquivalenceMetrics, ObserverState

__all__ = [
    "basis",
    "harness",
    "history_stack",
    "lti",
    "pilot",
    "quadcopter",
    "rhso",
    "CostFunctional",
    "LinearSystem",
    "RiccatiSolution",
    "solve_are",
    "ExcitationConfig",
    "PilotPolicy",
    "make_paper_cost",
    "synthesize_pilot",
    "QuadParams",
    "build_linear_model",
    "paper_params",
    "WeightLayout",
    "WeightVector",
    "HistoryStack",
    "EquivalenceMetrics",
    "ObserverState",
    "__version__",
]
