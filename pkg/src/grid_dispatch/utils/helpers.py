"""
Helper utilities for grid-dispatch

Provides common helper functions and utilities.
"""

import hashlib
import json
import os
import tempfile
import time
from pathlib import Path
from typing import Any, Dict, Union


def hash_data(data: str, algorithm: str = "sha256") -> str:
    """Hash data using specified algorithm"""
    if algorithm == "sha1":
        return hashlib.sha1(data.encode()).hexdigest()
    elif algorithm == "sha256":
        return hashlib.sha256(data.encode()).hexdigest()
    elif algorithm == "sha512":
        return hashlib.sha512(data.encode()).hexdigest()
    else:
        raise ValueError(f"Unsupported hash algorithm: {algorithm}")


def canonical_json(obj: Any) -> str:
    """Serialize to JSON with sorted keys and no incidental whitespace"""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def deep_merge_dicts(dict1: Dict, dict2: Dict) -> Dict:
    """Deep merge two dictionaries"""
    result = dict1.copy()

    for key, value in dict2.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = deep_merge_dicts(result[key], value)
        else:
            result[key] = value

    return result


def atomic_write(path: Union[str, Path], data: Union[str, bytes]) -> Path:
    """Write a file through a temporary sibling and an atomic rename"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode) as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise

    return path


class Stopwatch:
    """Accumulates wall-clock time over repeated measured sections"""

    def __init__(self):
        self.total = 0.0
        self.count = 0
        self._start = None

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.total += time.perf_counter() - self._start
        self.count += 1
        self._start = None
        return False

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else 0.0
