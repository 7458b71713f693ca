# Utils Package
from .tracker import RunTracker
from .errors import InertiaControlError, ValidationError, SolverError
