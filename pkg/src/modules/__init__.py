# Modules Package
from .network import NetworkModel, SystemState, ControlInput
from .limits import CostModel, ObjectiveWeights, FrequencyLimits, StorageLimits
from .dp_solver import DPSolver
from .traj_opt import TrajectoryOptimizer
from .scenario import Scenario, ScenarioLoader
from .runner import ScenarioRunner
from .output_handler import OutputHandler
