"""
Run aggregation for grid-dispatch

Ordering checks between modes, decision-time ratios and the per-seed table that
compare writes when runs carry their seed: episodes each learner needs to reach a
share of the expert's profit, and how many seeds keep the expected ordering.
"""

import math
from typing import Any, Dict, List, Mapping, Optional

import numpy as np
import pandas as pd

from ..learn.trainer import episodes_to_threshold
from ..utils.logger import get_logger

logger = get_logger(__name__)

EXPERT_FRACTION = 0.9
ORDERING_SHARE = 0.8
MAX_LEARNING_RATIO = 0.5
MIN_SPEED_RATIO = 10.0

SEED_COLUMNS = ["seed", "milp_profit", "sqil_profit", "csac_profit", "sqil_episodes", "csac_episodes",
                "profit_order", "violation_order", "speed_ratio"]

LEARNERS = (("csac-sqil", "sqil"), ("csac", "csac"))


def ordering_checks(rows: List[Dict[str, Any]]) -> Dict[str, Optional[bool]]:
    """Directional checks between modes; None when a mode is absent"""
    by_mode = {row["mode"]: row for row in rows}
    checks: Dict[str, Optional[bool]] = {}

    def profit(mode):
        return by_mode[mode]["avg_profit"]

    def violations(mode):
        return by_mode[mode]["avg_violations_per_step"]

    have = set(by_mode)
    checks["profit milp >= csac-sqil"] = profit("milp") >= profit("csac-sqil") if {"milp", "csac-sqil"} <= have else None
    checks["profit csac-sqil >= csac"] = profit("csac-sqil") >= profit("csac") if {"csac-sqil", "csac"} <= have else None
    checks["violations csac-sqil <= csac"] = (
        violations("csac-sqil") <= violations("csac") if {"csac-sqil", "csac"} <= have else None
    )
    return checks


def speed_ratio(rows: List[Dict[str, Any]]) -> Optional[float]:
    """Expert decision time over the fastest learned policy's"""
    expert = [r["decision_time_s"] for r in rows if r["mode"] == "milp"]
    learned = [r["decision_time_s"] for r in rows if r["mode"] != "milp" and r["decision_time_s"] > 0]
    if not expert or not learned:
        return None
    return expert[0] / min(learned)


def profit_threshold(expert_profit: float, fraction: float = EXPERT_FRACTION) -> float:
    """fraction of the expert's profit, measured below it when the profit is negative"""
    return expert_profit - (1.0 - fraction) * abs(expert_profit)


def learning_episodes(metrics: Optional[pd.DataFrame],
                      expert: Mapping[str, Any],
                      fraction: float = EXPERT_FRACTION) -> float:
    """Episodes until training reaches the expert threshold; inf if never, NaN without metrics

    Held-out evaluation rewards are episode sums and compare against the expert's
    average profit. Runs trained without periodic evaluation fall back to the mean
    step reward against the expert's profit per step.
    """
    if metrics is None or metrics.empty:
        return math.nan

    if metrics["eval_reward"].notna().any():
        reached = episodes_to_threshold(metrics, profit_threshold(expert["avg_profit"], fraction),
                                        column="eval_reward")
    else:
        per_step = expert.get("avg_profit_per_step")
        if per_step is None:
            return math.nan
        reached = episodes_to_threshold(metrics, profit_threshold(per_step, fraction), column="mean_reward")
    return math.inf if reached is None else float(reached)


def _all_or_none(values: List[Optional[bool]]) -> Optional[bool]:
    if any(v is None for v in values):
        return None
    return all(values)


def seed_table(rows: List[Dict[str, Any]],
               metrics: Mapping[str, pd.DataFrame],
               fraction: float = EXPERT_FRACTION) -> pd.DataFrame:
    """One row per seed; metrics are keyed by each row's run_dir"""
    by_seed: Dict[int, Dict[str, Dict[str, Any]]] = {}
    for row in rows:
        modes = by_seed.setdefault(int(row["seed"]), {})
        if row["mode"] in modes:
            logger.warning(f"Seed {row['seed']} has several {row['mode']} runs, keeping {row['run']}")
        modes[row["mode"]] = row

    records = []
    for seed in sorted(by_seed):
        modes = by_seed[seed]
        expert = modes.get("milp")
        record: Dict[str, Any] = {"seed": seed}
        record["milp_profit"] = expert["avg_profit"] if expert else math.nan
        for mode, prefix in LEARNERS:
            run = modes.get(mode)
            record[f"{prefix}_profit"] = run["avg_profit"] if run else math.nan
            if run and expert:
                record[f"{prefix}_episodes"] = learning_episodes(metrics.get(run["run_dir"]), expert, fraction)
            else:
                record[f"{prefix}_episodes"] = math.nan

        checks = ordering_checks(list(modes.values()))
        record["profit_order"] = _all_or_none([checks["profit milp >= csac-sqil"], checks["profit csac-sqil >= csac"]])
        record["violation_order"] = checks["violations csac-sqil <= csac"]
        ratio = speed_ratio(list(modes.values()))
        record["speed_ratio"] = math.nan if ratio is None else ratio
        records.append(record)

    return pd.DataFrame.from_records(records, columns=SEED_COLUMNS)


def _median(values: pd.Series) -> Optional[float]:
    values = values.dropna().to_numpy(dtype=float)
    return float(np.median(values)) if values.size else None


def _count(values: pd.Series) -> int:
    return int(sum(1 for v in values if not pd.isna(v) and bool(v)))


def summarize_seeds(table: pd.DataFrame,
                    share: float = ORDERING_SHARE,
                    max_learning_ratio: float = MAX_LEARNING_RATIO,
                    min_speed_ratio: float = MIN_SPEED_RATIO) -> Dict[str, Any]:
    """Seed counts, medians and pass/fail (None when undecidable) for the seed table"""
    n = len(table)
    needed = math.ceil(round(share * n, 9))

    sqil = _median(table["sqil_episodes"])
    csac = _median(table["csac_episodes"])
    ratio = None
    if sqil is not None and csac is not None:
        if math.isinf(csac):
            ratio = 0.0 if math.isfinite(sqil) else None
        elif csac > 0:
            ratio = sqil / csac

    speed = _median(table["speed_ratio"])
    profit_seeds = _count(table["profit_order"])
    violation_seeds = _count(table["violation_order"])

    checks = {
        f"median episodes to {EXPERT_FRACTION:.0%} of expert profit, csac-sqil <= {max_learning_ratio:g} x csac":
            None if ratio is None else ratio <= max_learning_ratio,
        f"profit milp >= csac-sqil >= csac in >= {needed}/{n} seeds":
            None if table["profit_order"].isna().all() else profit_seeds >= needed,
        f"violations csac-sqil <= csac in >= {needed}/{n} seeds":
            None if table["violation_order"].isna().all() else violation_seeds >= needed,
        f"median decision time milp >= {min_speed_ratio:g} x learned":
            None if speed is None else speed >= min_speed_ratio,
    }
    return {
        "seeds": n,
        "required_seeds": needed,
        "profit_order_seeds": profit_seeds,
        "violation_order_seeds": violation_seeds,
        "median_sqil_episodes": sqil,
        "median_csac_episodes": csac,
        "learning_ratio": ratio,
        "median_speed_ratio": speed,
        "checks": checks,
    }
