"""
Environment Module

Constrained dispatch environment, transitions and trajectory logging.
"""

from .dispatch_env import DispatchEnv
from .transitions import (
    Transition,
    TrajectoryLogger,
    discounted_return,
    load_transitions,
    save_transitions,
)

__all__ = [
    "DispatchEnv",
    "Transition",
    "TrajectoryLogger",
    "discounted_return",
    "load_transitions",
    "save_transitions"
]
