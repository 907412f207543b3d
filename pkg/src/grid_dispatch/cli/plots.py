"""
Plot output for grid-dispatch

Reward and violation curves rendered to SVG with a fixed hash salt and no
date metadata, so identical inputs produce identical files.
"""

import io
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from ..utils.helpers import atomic_write  # noqa: E402
from ..utils.logger import get_logger  # noqa: E402

logger = get_logger(__name__)

plt.rcParams["svg.hashsalt"] = "grid-dispatch"


def _save_svg(fig, path: Union[str, Path]) -> Path:
    buffer = io.StringIO()
    fig.savefig(buffer, format="svg", metadata={"Date": None})
    plt.close(fig)
    return atomic_write(path, buffer.getvalue())


def line_plot(x: Sequence[float],
              series: dict,
              path: Union[str, Path],
              title: str,
              xlabel: str,
              ylabel: str,
              smooth: Optional[int] = None) -> Path:
    """One SVG with a line per named series"""
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, values in series.items():
        values = pd.Series(np.asarray(values, dtype=float))
        if smooth and smooth > 1:
            values = values.rolling(smooth, min_periods=1).mean()
        ax.plot(np.asarray(x), values.to_numpy(), label=label, linewidth=1.2)

    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()

    path = _save_svg(fig, path)
    logger.debug(f"Wrote plot {path}")
    return path


def plot_training_curves(metrics: pd.DataFrame, output_dir: Union[str, Path], smooth: int = 10):
    """reward_curve.svg and violation_curve.svg from a metrics frame"""
    output_dir = Path(output_dir)
    episodes = metrics["episode"].to_numpy()
    reward = line_plot(episodes, {"mean reward": metrics["mean_reward"]},
                       output_dir / "reward_curve.svg", "Training reward", "episode",
                       "mean step reward", smooth=smooth)
    violations = line_plot(episodes, {"mean violations": metrics["mean_cost"]},
                           output_dir / "violation_curve.svg", "Voltage violations", "episode",
                           "violations per step", smooth=smooth)
    return reward, violations


def plot_violation_curve(evaluation: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Violations per held-out evaluation episode"""
    steps = evaluation["steps"].to_numpy(dtype=float)
    per_step = np.divide(evaluation["violations"].to_numpy(dtype=float), steps,
                         out=np.zeros_like(steps), where=steps > 0)
    return line_plot(evaluation["episode"].to_numpy(), {"violations": evaluation["violations"],
                                                        "violations per step": per_step},
                     path, "Evaluation violations", "evaluation episode", "violations")


def plot_voltage_profile(profile: pd.DataFrame, path: Union[str, Path], v_min: float, v_max: float) -> Path:
    """Voltage magnitude per node-phase with the limit band"""
    fig, ax = plt.subplots(figsize=(8, 4))
    for phase, group in profile.groupby("phase", sort=True):
        ax.plot(group["node"].astype(str).to_numpy(), group["v_mag_pu"].to_numpy(),
                marker="o", linestyle="", label=f"phase {phase}")
    ax.axhline(v_min, color="grey", linestyle="--", linewidth=0.8)
    ax.axhline(v_max, color="grey", linestyle="--", linewidth=0.8)
    ax.set_ylabel("|V| (pu)")
    ax.tick_params(axis="x", rotation=45)
    ax.legend()
    fig.tight_layout()
    return _save_svg(fig, path)
