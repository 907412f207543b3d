"""
Validation utilities for grid-dispatch

Provides data validation functions for feeder documents, scenario series and CSV inputs.
"""

import math
import re
from typing import Any, Dict, Iterable, List, Sequence

PHASES = ("a", "b", "c")


def validate_phase(phase: str) -> bool:
    """Validate a single phase label"""
    if not phase or not isinstance(phase, str):
        return False

    return phase.lower() in PHASES


def validate_phase_set(phases: Sequence[str]) -> bool:
    """Validate a phase list: non-empty, known labels, no repeats"""
    if not phases:
        return False

    if not all(validate_phase(p) for p in phases):
        return False

    return len(set(p.lower() for p in phases)) == len(phases)


def validate_node_id(node_id: Any) -> bool:
    """Validate node ID format"""
    if node_id is None:
        return False

    node_id = str(node_id)

    # Node IDs are short alphanumeric labels, optionally with separators
    if not re.match(r'^[A-Za-z0-9\-_.]+$', node_id):
        return False

    return 1 <= len(node_id) <= 32


def validate_battery_id(battery_id: str) -> bool:
    """Validate battery ID format"""
    if not battery_id:
        return False

    if not re.match(r'^[A-Za-z0-9\-_]+$', battery_id):
        return False

    return len(battery_id) <= 32


def validate_finite(value: Any) -> bool:
    """Validate that a value is a finite real number"""
    try:
        return math.isfinite(float(value))
    except (TypeError, ValueError):
        return False


def validate_voltage_limits(v_min: float, v_max: float) -> bool:
    """Validate a voltage band"""
    if not (validate_finite(v_min) and validate_finite(v_max)):
        return False

    return 0.0 < v_min < v_max


def missing_keys(document: Dict[str, Any], required: Iterable[str]) -> List[str]:
    """Return required keys absent from a mapping"""
    return [key for key in required if key not in document]


def missing_columns(columns: Iterable[str], required: Iterable[str]) -> List[str]:
    """Return required CSV columns absent from a header"""
    present = set(columns)
    return [column for column in required if column not in present]
