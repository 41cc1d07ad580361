"""Cost-driven MaxWeight scheduling on controlled random walk networks."""
from .crw import ArrivalSpec, Network, feasible_controls, make_rng, step_crw, step_meyn
from .fields import CostFunction, Perturbation, SchedulingField, build_field, maxweight_field
from .metrics import MetricsLedger, OutageBand
from .policies import (HMaxWeightScheduler, MaxWeightScheduler, MuMaxWeightScheduler,
                       PickAndCompare, make_scheduler)
from .power import PowerBudget, ScaState, bppc_link_weights, sca_params, sca_power_control
from .scenarios import build_crosslayer, build_energy, build_multimedia, build_tandem
from .simulate import simulate, simulate_crosslayer

__version__ = "0.1.0"

__all__ = [
    "ArrivalSpec", "Network", "feasible_controls", "make_rng", "step_crw", "step_meyn",
    "CostFunction", "Perturbation", "SchedulingField", "build_field", "maxweight_field",
    "MetricsLedger", "OutageBand",
    "HMaxWeightScheduler", "MaxWeightScheduler", "MuMaxWeightScheduler", "PickAndCompare",
    "make_scheduler",
    "PowerBudget", "ScaState", "bppc_link_weights", "sca_params", "sca_power_control",
    "build_crosslayer", "build_energy", "build_multimedia", "build_tandem",
    "simulate", "simulate_crosslayer",
]
