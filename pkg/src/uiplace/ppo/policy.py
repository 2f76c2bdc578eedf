"""Diagonal-Gaussian actor with a tanh-squashed mean, plus the critic."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mlp import MlpParams, init_mlp, mlp_forward

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class PolicyParams:
    actor: MlpParams
    log_std: np.ndarray
    critic: MlpParams

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in checkpoint order: actor, log_std, critic."""
        return self.actor.arrays() + [self.log_std] + self.critic.arrays()

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.actor.copy(), self.log_std.copy(), self.critic.copy())

    @property
    def obs_dim(self) -> int:
        return self.actor.dims[0]

    @property
    def hidden(self) -> list[int]:
        return self.actor.dims[1:-1]

    @property
    def act_dim(self) -> int:
        return self.actor.dims[-1]


def init_policy(rng: np.random.Generator, obs_dim: int = 171, hidden=(128, 128), act_dim: int = 3,
                log_std: float = math.log(0.5), dtype=np.float32) -> PolicyParams:
    actor = init_mlp(rng, [obs_dim, *hidden, act_dim], head_gain=0.01, dtype=dtype)
    critic = init_mlp(rng, [obs_dim, *hidden, 1], head_gain=1.0, dtype=dtype)
    return PolicyParams(actor, np.full(act_dim, log_std, dtype), critic)


def policy_mean(policy: PolicyParams, obs: np.ndarray) -> np.ndarray:
    return np.tanh(mlp_forward(policy.actor, obs))


def value(policy: PolicyParams, obs: np.ndarray) -> np.ndarray:
    return mlp_forward(policy.critic, obs)[..., 0]


def gaussian_log_prob(x, mean, log_std) -> np.ndarray:
    z = (x - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def gaussian_entropy(log_std) -> float:
    return float(np.sum(log_std + 0.5 * (1.0 + LOG_2PI)))


def policy_sample(policy: PolicyParams, obs: np.ndarray, rng: np.random.Generator):
    """Sample actions for one observation or a batch.

    Returns ``(action, raw, log_prob)``: ``raw`` is the Gaussian draw the
    log-density refers to, ``action`` is ``raw`` clamped to [-1, 1].
    """
    mean = policy_mean(policy, obs).astype(np.float64)
    std = np.exp(policy.log_std.astype(np.float64))
    raw = mean + std * rng.standard_normal(mean.shape)
    logp = gaussian_log_prob(raw, mean, policy.log_std.astype(np.float64))
    return np.clip(raw, -1.0, 1.0), raw, logp


def policy_act(policy: PolicyParams, obs: np.ndarray, rng: np.random.Generator | None = None,
               deterministic: bool = True) -> np.ndarray:
    if deterministic or rng is None:
        return np.clip(policy_mean(policy, obs).astype(np.float64), -1.0, 1.0)
    return policy_sample(policy, obs, rng)[0]
