"""Load management for anycast CDN edge layers.

Two algorithms over one system model: a provably convergent distributed
dual-decomposition solver whose node coupling rides an emulated anycast
control-packet channel, and the greedy threshold heuristic analyzed as a
damped ODE, plus the stability theory that says when the heuristic is safe.
"""

from .costs import OVERLOAD, OffloadCost, OverloadCost, eval_g, eval_h, is_overload
from .dual import DualConfig, DualRun, run_dual
from .fastcontrol import ChannelConfig
from .greedy import GreedyConfig, Trajectory, integrate
from .harness import ExperimentConfig, SweepResult, generate_instance, run_sweep
from .model import SystemInstance, compute_load, load_instance, make_instance, routing_matrix, validate
from .stability import StabilityReport, analyze

__version__ = "0.1.0"

__all__ = [
    "OVERLOAD",
    "ChannelConfig",
    "DualConfig",
    "DualRun",
    "ExperimentConfig",
    "GreedyConfig",
    "OffloadCost",
    "OverloadCost",
    "StabilityReport",
    "SweepResult",
    "SystemInstance",
    "Trajectory",
    "analyze",
    "compute_load",
    "eval_g",
    "eval_h",
    "generate_instance",
    "integrate",
    "is_overload",
    "load_instance",
    "make_instance",
    "routing_matrix",
    "run_dual",
    "run_sweep",
    "validate",
]
