"""Energy-efficient trajectory design for a UAV carrying a reconfigurable surface.

Modules:

* :mod:`~aris_empc.scenario`: configuration, validation, user layout
* :mod:`~aris_empc.channel`: line-of-sight links, steering vectors, MRT
* :mod:`~aris_empc.phase`: closed-form SNR and least-squares phase design
* :mod:`~aris_empc.flight`: dynamics, propulsion energy, EE accounting
* :mod:`~aris_empc.empc`: receding-horizon trajectory optimizer
* :mod:`~aris_empc.cli`: ``aris-empc`` command line
"""
from .errors import (ArisError, GeometryError, InfeasibleError, InfeasibleScenario,
                     ModelDomainError, ScenarioError, StallError)
from .scenario import ClusterSpec, ScenarioConfig, SolverSettings, UserSet, load_config, load_config_file
from .flight import State, TrajectoryLog, baseline_constant_acceleration, evaluate_trajectory
from .empc import HorizonProblem, run_receding_horizon, solve_horizon

__version__ = "0.1.0"

__all__ = [
    "ArisError", "GeometryError", "InfeasibleError", "InfeasibleScenario", "ModelDomainError",
    "ScenarioError", "StallError", "ClusterSpec", "ScenarioConfig", "SolverSettings", "UserSet",
    "load_config", "load_config_file", "State", "TrajectoryLog", "baseline_constant_acceleration",
    "evaluate_trajectory", "HorizonProblem", "run_receding_horizon", "solve_horizon",
]
