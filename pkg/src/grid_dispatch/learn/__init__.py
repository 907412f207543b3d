"""
Learning stack for grid-dispatch

Numpy MLPs, the constrained soft actor-critic agent, the SQIL replay buffer and
the training loop.
"""

from .agent import (
    AGENT_PRESETS,
    CsacAgent,
    CsacConfig,
    LossReport,
    PolicySample,
    load_checkpoint,
    save_checkpoint,
)
from .mlp import Adam, Mlp
from .replay import Batch, ReplayBuffer
from .trainer import (
    METRICS_COLUMNS,
    EvaluationResult,
    TrainingArtifact,
    TrainingConfig,
    episodes_to_threshold,
    make_policy,
    rollout,
    train_run,
    write_metrics,
)

__all__ = [
    "AGENT_PRESETS",
    "Adam",
    "Batch",
    "CsacAgent",
    "CsacConfig",
    "EvaluationResult",
    "LossReport",
    "METRICS_COLUMNS",
    "Mlp",
    "PolicySample",
    "ReplayBuffer",
    "TrainingArtifact",
    "TrainingConfig",
    "episodes_to_threshold",
    "load_checkpoint",
    "make_policy",
    "rollout",
    "save_checkpoint",
    "train_run",
    "write_metrics",
]
