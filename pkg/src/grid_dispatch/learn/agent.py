"""
Constrained soft actor-critic agent for grid-dispatch

Gaussian tanh-squashed policy, twin action-value critics with targets, a state
value network with target, entropy temperature and a Lagrange multiplier on the
discounted constraint cost. All gradients are computed by hand on numpy MLPs.
"""

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from ..exceptions import CheckpointError
from ..utils.helpers import atomic_write
from ..utils.logger import get_logger
from .mlp import Adam, Mlp
from .replay import Batch

logger = get_logger(__name__)

CHECKPOINT_VERSION = 1
LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 2.0
ACTION_LIMIT = 1.0 - 1e-6
SQUASH_EPS = 1e-6
LOG_2PI = math.log(2.0 * math.pi)

AGENT_PRESETS: Dict[str, Dict[str, Any]] = {
    "feeder34": {"gamma": 0.99, "lr": 1e-3, "param_noise": 0.05},
    "feeder123": {"gamma": 0.97, "lr": 1e-2, "param_noise": 0.02},
}


@dataclass
class CsacConfig:
    """Hyperparameters of the constrained soft actor-critic"""
    hidden: Tuple[int, ...] = (64, 32)
    batch_size: int = 256
    gamma: float = 0.99
    lr: float = 1e-3
    tau: float = 0.005
    alpha: float = 0.1
    auto_alpha: bool = False
    alpha_lr: float = 3e-4
    lambda_init: float = 0.0
    lambda_lr: float = 0.005
    lambda_max: Optional[float] = None
    cost_limit: float = 0.0
    horizon: int = 450
    param_noise: float = 0.05
    use_param_noise: bool = False
    reward_scale: float = 0.1

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0 < self.gamma < 1:
            raise ValueError(f"Discount must lie in (0, 1), got {self.gamma}")
        if not 0 < self.tau <= 1:
            raise ValueError(f"Soft-target rate must lie in (0, 1], got {self.tau}")
        if self.batch_size < 1 or self.horizon < 1:
            raise ValueError("Batch size and horizon must be positive")
        if self.alpha <= 0:
            raise ValueError(f"Entropy temperature must be positive, got {self.alpha}")
        if self.lambda_init < 0:
            raise ValueError("Initial Lagrange multiplier must be non-negative")

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "CsacConfig":
        if name not in AGENT_PRESETS:
            raise ValueError(f"Unknown agent preset {name!r}; choose from {sorted(AGENT_PRESETS)}")
        return cls(**{**AGENT_PRESETS[name], **overrides})

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CsacConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    @property
    def discount_horizon(self) -> float:
        """(1 - gamma^T) / (1 - gamma)"""
        return (1.0 - self.gamma ** self.horizon) / (1.0 - self.gamma)

    @property
    def value_limit(self) -> float:
        return self.discount_horizon * self.cost_limit


@dataclass
class PolicySample:
    """Reparameterized policy draw for a batch of states"""
    action: np.ndarray
    log_prob: np.ndarray
    pre_squash: np.ndarray
    mean: np.ndarray
    log_var: np.ndarray
    noise: np.ndarray
    raw_log_var: np.ndarray = field(repr=False, default=None)


@dataclass
class LossReport:
    q1_loss: float
    q2_loss: float
    v_loss: float
    pi_loss: float
    lam: float
    alpha: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def _squash(u: np.ndarray) -> np.ndarray:
    return np.clip(np.tanh(u), -ACTION_LIMIT, ACTION_LIMIT)


class CsacAgent:
    """Constrained soft actor-critic over numpy networks"""

    def __init__(self, obs_dim: int, act_dim: int, config: Optional[CsacConfig] = None, seed: int = 0):
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        self.config = config or CsacConfig()
        self.rng = np.random.default_rng(seed)

        hidden = list(self.config.hidden)
        init = np.random.default_rng(seed)
        self.policy = Mlp([obs_dim, *hidden, 2 * act_dim], rng=init)
        self.q1 = Mlp([obs_dim + act_dim, *hidden, 1], rng=init)
        self.q2 = Mlp([obs_dim + act_dim, *hidden, 1], rng=init)
        self.value = Mlp([obs_dim, *hidden, 1], rng=init)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.value_target = self.value.copy()

        lr = self.config.lr
        self.policy_opt = Adam(self.policy.params, lr=lr)
        self.q1_opt = Adam(self.q1.params, lr=lr)
        self.q2_opt = Adam(self.q2.params, lr=lr)
        self.value_opt = Adam(self.value.params, lr=lr)

        self.log_alpha = np.array([math.log(self.config.alpha)])
        self.alpha_opt = Adam([self.log_alpha], lr=self.config.alpha_lr)
        self.target_entropy = -float(act_dim)

        self.lam = float(self.config.lambda_init)
        self.updates = 0
        self._rollout_policy = self.policy

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    def networks(self) -> Dict[str, Mlp]:
        return {
            "policy": self.policy,
            "q1": self.q1,
            "q2": self.q2,
            "value": self.value,
            "q1_target": self.q1_target,
            "q2_target": self.q2_target,
            "value_target": self.value_target,
        }

    # policy

    def _head(self, net: Mlp, states: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        out = net.forward(states)
        mean = out[:, :self.act_dim]
        raw = out[:, self.act_dim:]
        return mean, np.clip(raw, LOG_VAR_MIN, LOG_VAR_MAX), raw

    def sample(self, states: np.ndarray, deterministic: bool = False, net: Optional[Mlp] = None) -> PolicySample:
        """Squashed Gaussian draw a = tanh(mu + sigma * eps) with its log-probability"""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if states.shape[1] != self.obs_dim:
            raise ValueError(f"Expected state width {self.obs_dim}, got {states.shape[1]}")

        mean, log_var, raw = self._head(net or self.policy, states)
        if deterministic:
            noise = np.zeros_like(mean)
        else:
            noise = self.rng.standard_normal(mean.shape)
        sigma = np.exp(0.5 * log_var)
        u = mean + sigma * noise
        action = _squash(u)

        log_prob = np.sum(-0.5 * noise ** 2 - 0.5 * log_var - 0.5 * LOG_2PI, axis=1)
        log_prob -= np.sum(np.log(1.0 - action ** 2 + SQUASH_EPS), axis=1)

        return PolicySample(action=action, log_prob=log_prob, pre_squash=u,
                            mean=mean, log_var=log_var, noise=noise, raw_log_var=raw)

    def sample_action(self, state: np.ndarray, deterministic: bool = False) -> Tuple[np.ndarray, float]:
        draw = self.sample(state, deterministic=deterministic)
        return draw.action[0], float(draw.log_prob[0])

    def begin_episode(self):
        """Refresh the exploration policy (parameter noise when enabled)"""
        if self.config.use_param_noise and self.config.param_noise > 0:
            self._rollout_policy = self.policy.perturbed(self.config.param_noise, self.rng)
        else:
            self._rollout_policy = self.policy

    def act(self, state: np.ndarray, deterministic: bool = False) -> np.ndarray:
        net = self.policy if deterministic else self._rollout_policy
        return self.sample(state, deterministic=deterministic, net=net).action[0]

    # updates

    def _q_input(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return np.concatenate([states, actions], axis=1)

    def _fit(self, net: Mlp, opt: Adam, inputs: np.ndarray, targets: np.ndarray) -> float:
        pred = net.forward(inputs)[:, 0]
        err = pred - targets
        grads, _ = net.backward((2.0 * err / err.size)[:, None])
        opt.step(grads)
        return float(np.mean(err ** 2))

    def update_lambda(self, costs: np.ndarray) -> float:
        """Projected ascent on the multiplier from a batch of constraint costs"""
        cfg = self.config
        estimate = cfg.discount_horizon * float(np.mean(costs))
        lam = self.lam + cfg.lambda_lr * (estimate - cfg.value_limit)
        lam = max(lam, 0.0)
        if cfg.lambda_max is not None:
            lam = min(lam, cfg.lambda_max)
        self.lam = lam
        return lam

    def train_step(self, batch: Batch) -> LossReport:
        """One gradient update of critics, value, policy, temperature and multiplier"""
        cfg = self.config
        s, a = batch.states, batch.actions

        # critics
        next_v = self.value_target.forward(batch.next_states)[:, 0]
        y = batch.rewards - self.lam * batch.costs + cfg.gamma * (1.0 - batch.dones) * next_v
        sa = self._q_input(s, a)
        q1_loss = self._fit(self.q1, self.q1_opt, sa, y)
        q2_loss = self._fit(self.q2, self.q2_opt, sa, y)

        # state value
        draw = self.sample(s)
        s_new = self._q_input(s, draw.action)
        q_bar = np.minimum(self.q1_target.forward(s_new)[:, 0], self.q2_target.forward(s_new)[:, 0])
        v_loss = self._fit(self.value, self.value_opt, s, q_bar - self.alpha * draw.log_prob)

        # policy
        pi_loss = self._policy_step(s, draw)

        if cfg.auto_alpha:
            grad = -float(np.mean(draw.log_prob + self.target_entropy))
            self.alpha_opt.step([np.array([grad])])

        lam = self.update_lambda(batch.costs)

        self.q1_target.soft_update(self.q1, cfg.tau)
        self.q2_target.soft_update(self.q2, cfg.tau)
        self.value_target.soft_update(self.value, cfg.tau)
        self.updates += 1

        return LossReport(q1_loss=q1_loss, q2_loss=q2_loss, v_loss=v_loss,
                          pi_loss=pi_loss, lam=lam, alpha=self.alpha)

    def _policy_step(self, states: np.ndarray, draw: PolicySample) -> float:
        n = states.shape[0]
        alpha = self.alpha
        sa = self._q_input(states, draw.action)

        q1 = self.q1.forward(sa)[:, 0]
        _, dsa1 = self.q1.backward(np.ones((n, 1)))
        q2 = self.q2.forward(sa)[:, 0]
        _, dsa2 = self.q2.backward(np.ones((n, 1)))

        use_first = (q1 <= q2)[:, None]
        dq_da = np.where(use_first, dsa1, dsa2)[:, self.obs_dim:]
        q_min = np.minimum(q1, q2)

        a = draw.action
        one_minus = 1.0 - a ** 2
        dlogp_du = 2.0 * a * one_minus / (one_minus + SQUASH_EPS)
        d_u = (alpha * dlogp_du - dq_da * one_minus) / n

        sigma = np.exp(0.5 * draw.log_var)
        d_mean = d_u
        d_log_var = d_u * 0.5 * sigma * draw.noise - 0.5 * alpha / n
        inside = (draw.raw_log_var >= LOG_VAR_MIN) & (draw.raw_log_var <= LOG_VAR_MAX)
        d_log_var = np.where(inside, d_log_var, 0.0)

        self.policy.forward(states)
        grads, _ = self.policy.backward(np.concatenate([d_mean, d_log_var], axis=1))
        self.policy_opt.step(grads)

        return float(np.mean(alpha * draw.log_prob - q_min))

    # persistence

    def to_checkpoint(self, config_hash: str = "") -> Dict[str, Any]:
        return {
            "version": CHECKPOINT_VERSION,
            "config_hash": config_hash,
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "agent": {**asdict(self.config), "hidden": list(self.config.hidden)},
            "networks": {name: net.to_dict() for name, net in self.networks().items()},
            "lambda": self.lam,
            "log_alpha": float(self.log_alpha[0]),
        }

    @classmethod
    def from_checkpoint(cls, data: Dict[str, Any]) -> "CsacAgent":
        if data.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"Unsupported checkpoint version {data.get('version')!r}")

        try:
            agent = cls(data["obs_dim"], data["act_dim"], CsacConfig.from_dict(data.get("agent", {})))
            for name, net in agent.networks().items():
                loaded = Mlp.from_dict(data["networks"][name])
                if loaded.sizes != net.sizes:
                    raise CheckpointError(f"Network {name} has sizes {loaded.sizes}, expected {net.sizes}")
                net.set_flat(loaded.get_flat())
            agent.lam = float(data["lambda"])
            agent.log_alpha[0] = float(data["log_alpha"])
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"Malformed checkpoint: {e}")

        return agent


def save_checkpoint(agent: CsacAgent, path: Union[str, Path], config_hash: str = "") -> Path:
    path = atomic_write(path, json.dumps(agent.to_checkpoint(config_hash)))
    logger.info(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path: Union[str, Path],
                    config_hash: Optional[str] = None,
                    obs_dim: Optional[int] = None,
                    act_dim: Optional[int] = None) -> CsacAgent:
    """Load an agent, checking it against the expected configuration when given"""
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}")

    if config_hash and data.get("config_hash") and data["config_hash"] != config_hash:
        logger.warning(f"Checkpoint {path} was trained under config {data['config_hash'][:12]}")
    if obs_dim is not None and data.get("obs_dim") != obs_dim:
        raise CheckpointError(f"Checkpoint observation width {data.get('obs_dim')} does not match {obs_dim}")
    if act_dim is not None and data.get("act_dim") != act_dim:
        raise CheckpointError(f"Checkpoint action width {data.get('act_dim')} does not match {act_dim}")

    return CsacAgent.from_checkpoint(data)
