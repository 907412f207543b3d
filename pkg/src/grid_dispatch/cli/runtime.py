"""
Runtime assembly for grid-dispatch

Builds feeders, fleets, scenarios, environments and agent settings from a
validated RunConfig.
"""

from typing import Callable, List, Optional, Tuple

from ..bess.battery import BatterySpec, fleet_from_dicts
from ..env.dispatch_env import DispatchEnv
from ..exceptions import ConfigError
from ..expert.demonstrations import ExpertPolicy
from ..grid.feeder import Feeder, load_feeder, scale_loads, with_limits
from ..learn.agent import CsacConfig
from ..learn.trainer import TrainingConfig
from ..market.scenario import RegulationScenario, load_scenario, synthesize_scenario
from ..market.settlement import MarketAccount
from ..utils.logger import get_logger
from .config import RunConfig

logger = get_logger(__name__)


def build_feeder(config: RunConfig) -> Feeder:
    feeder = load_feeder(config.feeder.path)
    if config.feeder.load_scale != 1.0:
        feeder = scale_loads(feeder, config.feeder.load_scale)
    if config.feeder.v_min is not None or config.feeder.v_max is not None:
        feeder = with_limits(feeder, config.feeder.v_min, config.feeder.v_max)
    return feeder


def build_fleet(config: RunConfig) -> List[BatterySpec]:
    try:
        return fleet_from_dicts([entry.model_dump() for entry in config.fleet.batteries])
    except ValueError as e:
        raise ConfigError(f"Invalid fleet: {e}") from e


def build_account(config: RunConfig) -> MarketAccount:
    market = config.market
    return MarketAccount(
        capacity_kw=market.capacity_kw,
        capacity_cap_kw=market.capacity_cap_kw,
        rho_min=market.rho_min,
        tolerance_kw=market.tolerance_kw,
        performance_weight=market.performance_weight,
        aging_coefficient=market.aging_coefficient,
        window=market.window,
    )


def build_scenario(config: RunConfig, held_out: bool = False) -> RegulationScenario:
    """Training scenario, or the held-out evaluation scenario"""
    section = config.scenario
    path = section.eval_path if held_out else section.path
    if path is not None:
        return load_scenario(path, step_seconds=section.step_seconds)

    seed = section.eval_synth_seed if held_out else section.synth_seed
    return synthesize_scenario(seed, section.steps, step_seconds=section.step_seconds)


def env_factory(config: RunConfig, held_out: bool = False) -> Callable[[], DispatchEnv]:
    feeder = build_feeder(config)
    specs = build_fleet(config)
    scenario = build_scenario(config, held_out=held_out)

    def factory() -> DispatchEnv:
        return DispatchEnv(
            feeder=feeder,
            specs=specs,
            scenario=scenario,
            account=build_account(config),
            episode_steps=config.env.episode_steps,
            random_offset=config.env.random_offset,
        )

    return factory


def agent_config(config: RunConfig) -> CsacConfig:
    values = config.agent.model_dump(exclude={"preset"})
    values["hidden"] = tuple(values["hidden"])
    values["horizon"] = config.env.episode_steps
    return CsacConfig(**values)


def training_config(config: RunConfig, episodes: Optional[int] = None) -> TrainingConfig:
    section = config.training
    return TrainingConfig(
        episodes=section.episodes if episodes is None else episodes,
        warmup_steps=section.warmup_steps,
        update_every=section.update_every,
        updates_per_step=section.updates_per_step,
        eval_every=section.eval_every,
        eval_episodes=section.eval_episodes,
        buffer_capacity=section.buffer_capacity,
        seed=config.run.seed,
        sqil=config.run.mode == "csac-sqil",
        progress=section.progress,
    )


def expert_policy(config: RunConfig) -> ExpertPolicy:
    return ExpertPolicy(
        horizon=config.expert.horizon,
        voltage_margin=config.expert.voltage_margin,
        node_limit=config.expert.node_limit,
    )


def evaluation_seeds(config: RunConfig) -> Tuple[int, ...]:
    base = config.run.seed + 1_000_000
    return tuple(base + k for k in range(config.evaluation.episodes))
