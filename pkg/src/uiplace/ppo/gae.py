from __future__ import annotations

import numpy as np


def gae(rewards, values, dones, bootstrap_value, gamma: float = 0.99, lam: float = 0.95):
    """Generalized advantage estimates over the leading (time) axis.

    ``dones[t]`` marks that the episode ended after step ``t``, cutting
    both the bootstrap and the advantage recursion. Extra trailing axes
    (parallel environments) are handled elementwise.
    """
    rewards = np.asarray(rewards, np.float64)
    values = np.asarray(values, np.float64)
    dones = np.asarray(dones, np.float64)
    if not rewards.shape == values.shape == dones.shape:
        raise ValueError("rewards, values and dones must have equal shapes")
    adv = np.zeros_like(rewards)
    next_value = np.asarray(bootstrap_value, np.float64)
    running = np.zeros_like(rewards[0]) if len(rewards) else 0.0
    for t in range(len(rewards) - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values
