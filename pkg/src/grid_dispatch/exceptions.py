"""
Exceptions for grid-dispatch

Every failure raised by the library derives from GridDispatchError and carries a
short machine-readable code so the CLI can report it uniformly.
"""

from typing import Optional


class GridDispatchError(Exception):
    """Base class for all grid-dispatch errors"""

    code = "GRID_DISPATCH_ERROR"

    def __init__(self, message: str, code: Optional[str] = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class FeederTopologyError(GridDispatchError):
    """Feeder is not a connected radial network rooted at its source"""

    code = "TOPOLOGY"


class PhaseError(GridDispatchError):
    """A phase is referenced where the feeder does not carry it"""

    code = "PHASE"


class PowerFlowError(GridDispatchError):
    """Power flow produced a non-physical solution"""

    code = "POWER_FLOW"


class PowerFlowConvergenceError(PowerFlowError):
    """Backward/forward sweep failed to converge"""

    code = "NON_CONVERGENCE"


class SocInfeasibleError(GridDispatchError):
    """Battery energy left its state-of-charge envelope"""

    code = "SOC_INFEASIBLE"


class ScenarioError(GridDispatchError):
    """Regulation scenario violates its schema or bounds"""

    code = "SCENARIO"


class LpDimensionError(GridDispatchError):
    """LP arrays do not agree in shape"""

    code = "LP_DIMENSION"


class LpIterationLimitError(GridDispatchError):
    """Simplex hit its iteration cap before proving a status"""

    code = "LP_ITERATION_LIMIT"


class MilpNodeLimitError(GridDispatchError):
    """Branch-and-bound exhausted its node budget"""

    code = "MILP_NODE_LIMIT"


class PerformanceGateError(GridDispatchError):
    """Previous performance index is below the market minimum"""

    code = "PERFORMANCE_GATE"


class UnplacedBatteryError(GridDispatchError):
    """Battery references a node or phase missing from the feeder"""

    code = "UNPLACED_BATTERY"


class InsufficientDataError(GridDispatchError):
    """Replay buffer holds fewer transitions than a batch"""

    code = "INSUFFICIENT_DATA"


class EmptyBufferError(GridDispatchError):
    """Both replay pools are empty"""

    code = "EMPTY_BUFFER"


class CheckpointError(GridDispatchError):
    """Checkpoint is unreadable or does not match the configuration"""

    code = "CHECKPOINT"


class ConfigError(GridDispatchError):
    """Run configuration failed validation"""

    code = "CONFIG"
