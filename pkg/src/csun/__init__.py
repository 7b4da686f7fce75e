"""Resource allocation for a UAV swarm sharing satellite spectrum."""

from .model import (Allocation, ConstraintSet, NumericalError, Scenario, SlackState,
                    check_feasibility, dbm_to_watts, objective_min, objective_sum,
                    watts_to_dbm)
from .channel import ScenarioConfig, generate_scenario, load_scenario, save_scenario
from .blocks import SolverConfig
from .sum_alloc import joint_sum
from .maxmin_alloc import joint_maxmin
from .bench import baseline_equal

__version__ = "0.1.0"
