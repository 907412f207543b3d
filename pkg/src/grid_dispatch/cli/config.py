"""
Run configuration for grid-dispatch

YAML run documents validated by pydantic, with GRIDDISPATCH_<SECTION>_<KEY>
environment overrides and line-precise error messages.
"""

import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..exceptions import ConfigError
from ..learn.agent import AGENT_PRESETS
from ..utils.helpers import canonical_json, deep_merge_dicts, hash_data
from ..utils.logger import get_logger

logger = get_logger(__name__)

ENV_PREFIX = "GRIDDISPATCH_"
DEFAULT_CONFIG_PATH = "config/config.yaml"
LEARNING_MODES = ("csac", "csac-sqil")


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RunSection(Section):
    mode: Literal["csac", "csac-sqil", "milp"] = "csac"
    seed: int = 0
    output_dir: str = "runs/default"


class FeederSection(Section):
    path: str = "data/feeders/thirteen_node.json"
    load_scale: float = Field(1.0, ge=0.0)
    v_min: Optional[float] = None
    v_max: Optional[float] = None


class ScenarioSection(Section):
    path: Optional[str] = None
    synth_seed: int = 0
    steps: int = Field(2000, ge=1)
    step_seconds: float = Field(4.0, gt=0.0)
    eval_path: Optional[str] = None
    eval_synth_seed: int = 1


class BatteryEntry(Section):
    id: str
    node: str
    phase: str
    power_kw: float = 10.0
    energy_kwh: float = 4.21
    efficiency: float = 0.9
    soc_min: float = 0.1
    soc_max: float = 0.9
    availability: List[int] = Field(default_factory=list)
    priority: float = 1.0
    energy_budget_kwh: Optional[float] = None
    initial_soc: float = 0.5


class FleetSection(Section):
    batteries: List[BatteryEntry] = Field(default_factory=list)

    @field_validator("batteries")
    @classmethod
    def _unique_ids(cls, batteries: List[BatteryEntry]) -> List[BatteryEntry]:
        ids = [b.id for b in batteries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate battery ids {ids}")
        return batteries


class MarketSection(Section):
    capacity_kw: float = Field(20.0, ge=0.0)
    capacity_cap_kw: Optional[float] = None
    rho_min: float = Field(0.4, ge=0.0, le=1.0)
    tolerance_kw: Optional[float] = None
    performance_weight: float = 1.0
    aging_coefficient: float = Field(0.05, ge=0.0)
    window: int = Field(75, ge=1)


class EnvSection(Section):
    episode_steps: int = Field(48, ge=1)
    random_offset: bool = True


class AgentSection(Section):
    preset: Optional[str] = None
    hidden: List[int] = Field(default_factory=lambda: [64, 32])
    batch_size: int = Field(256, ge=1)
    gamma: float = Field(0.99, gt=0.0, lt=1.0)
    lr: float = Field(1e-3, gt=0.0)
    tau: float = Field(0.005, gt=0.0, le=1.0)
    alpha: float = Field(0.1, gt=0.0)
    auto_alpha: bool = False
    alpha_lr: float = Field(3e-4, gt=0.0)
    lambda_init: float = Field(0.0, ge=0.0)
    lambda_lr: float = Field(0.005, ge=0.0)
    lambda_max: Optional[float] = None
    cost_limit: float = Field(0.0, ge=0.0)
    param_noise: float = Field(0.05, ge=0.0)
    use_param_noise: bool = False
    reward_scale: float = 0.1

    @model_validator(mode="before")
    @classmethod
    def _apply_preset(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("preset") is not None:
            preset = data["preset"]
            if preset not in AGENT_PRESETS:
                raise ValueError(f"unknown preset {preset!r}, choose from {sorted(AGENT_PRESETS)}")
            return {**AGENT_PRESETS[preset], **data}
        return data


class TrainingSection(Section):
    episodes: int = Field(200, ge=0)
    warmup_steps: int = Field(256, ge=0)
    update_every: int = Field(1, ge=1)
    updates_per_step: int = Field(1, ge=0)
    eval_every: int = Field(10, ge=0)
    eval_episodes: int = Field(1, ge=1)
    buffer_capacity: int = Field(100_000, ge=1)
    demos_path: Optional[str] = None
    demo_episodes: int = Field(10, ge=1)
    progress: bool = False


class EvaluationSection(Section):
    episodes: int = Field(10, ge=0)
    checkpoint: Optional[str] = None


class ExpertSection(Section):
    enabled: bool = True
    horizon: int = Field(1, ge=1)
    voltage_margin: float = Field(1e-6, ge=0.0)
    node_limit: int = Field(5000, ge=1)


class LoggingSection(Section):
    level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    file: Optional[str] = None


class RunConfig(Section):
    """Complete run document"""
    run: RunSection = Field(default_factory=RunSection)
    feeder: FeederSection = Field(default_factory=FeederSection)
    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    fleet: FleetSection = Field(default_factory=FleetSection)
    market: MarketSection = Field(default_factory=MarketSection)
    env: EnvSection = Field(default_factory=EnvSection)
    agent: AgentSection = Field(default_factory=AgentSection)
    training: TrainingSection = Field(default_factory=TrainingSection)
    evaluation: EvaluationSection = Field(default_factory=EvaluationSection)
    expert: ExpertSection = Field(default_factory=ExpertSection)
    logging: LoggingSection = Field(default_factory=LoggingSection)

    @model_validator(mode="after")
    def _check_mode(self) -> "RunConfig":
        if self.run.mode == "csac-sqil":
            has_demos = self.training.demos_path is not None and Path(self.training.demos_path).exists()
            if not has_demos and not self.expert.enabled:
                raise ValueError("csac-sqil needs training.demos_path or expert.enabled")
        return self

    @property
    def is_learning(self) -> bool:
        return self.run.mode in LEARNING_MODES


def section_names() -> Tuple[str, ...]:
    return tuple(RunConfig.model_fields)


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Dict[str, Any]]:
    """Collect GRIDDISPATCH_<SECTION>_<KEY> values as a nested mapping"""
    environ = os.environ if environ is None else environ
    sections = sorted(section_names(), key=len, reverse=True)
    overrides: Dict[str, Dict[str, Any]] = {}

    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        for section in sections:
            if rest.startswith(section + "_"):
                key = rest[len(section) + 1:]
                overrides.setdefault(section, {})[key] = yaml.safe_load(raw) if raw != "" else None
                break
        else:
            logger.warning(f"Ignoring environment override {name}: unknown section")

    return overrides


def _key_lines(text: str) -> Dict[Tuple[str, ...], int]:
    """Map key paths of a YAML document to 1-based line numbers"""
    lines: Dict[Tuple[str, ...], int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                child = path + (str(key_node.value),)
                lines[child] = key_node.start_mark.line + 1
                walk(value_node, child)
        elif isinstance(node, yaml.SequenceNode):
            for k, item in enumerate(node.value):
                child = path + (str(k),)
                lines[child] = item.start_mark.line + 1
                walk(item, child)

    if root is not None:
        walk(root, ())
    return lines


def _format_errors(error: ValidationError, source: str, lines: Dict[Tuple[str, ...], int]) -> str:
    messages = []
    for item in error.errors():
        loc = tuple(str(part) for part in item["loc"])
        line = None
        for depth in range(len(loc), 0, -1):
            if loc[:depth] in lines:
                line = lines[loc[:depth]]
                break
        where = f"{source}:{line}" if line is not None else source
        messages.append(f"{where}: {'.'.join(loc) or '<root>'}: {item['msg']}")
    return "\n".join(messages)


def parse_config(text: str,
                 source: str = "<config>",
                 environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Validate a YAML document after merging environment overrides"""
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"{source}: invalid YAML: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")

    data = deep_merge_dicts(data, env_overrides(environ))

    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_errors(e, source, _key_lines(text)))


def load_config(path: Union[str, Path], environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Read and validate a run configuration file"""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"Cannot read configuration {path}: {e}")

    config = parse_config(text, source=str(path), environ=environ)
    check_paths(config, source=str(path))
    logger.info(f"Loaded configuration from {path}")
    return config


def check_paths(config: RunConfig, source: str = "<config>"):
    """Referenced input files must exist"""
    missing = []
    if not Path(config.feeder.path).exists():
        missing.append(f"feeder.path: {config.feeder.path}")
    for key in ("path", "eval_path"):
        value = getattr(config.scenario, key)
        if value is not None and not Path(value).exists():
            missing.append(f"scenario.{key}: {value}")
    if missing:
        raise ConfigError(f"{source}: missing files: " + "; ".join(missing))


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)


def config_hash(config: RunConfig) -> str:
    return hash_data(canonical_json(config.model_dump(mode="json")))


def demos_key(config: RunConfig) -> str:
    """Hash of every setting that shapes expert demonstrations, seed included"""
    document = config.model_dump(mode="json", include={"feeder", "scenario", "fleet", "market", "env", "expert"})
    document["seed"] = config.run.seed
    document["demo_episodes"] = config.training.demo_episodes
    return hash_data(canonical_json(document))
