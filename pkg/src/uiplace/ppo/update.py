"""Clipped-surrogate loss, its analytic gradient, and the Adam update."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mlp import mlp_backward, mlp_forward_cached
from .policy import LOG_2PI, PolicyParams, gaussian_entropy


class UpdateError(RuntimeError):
    """Raised when a loss or gradient goes non-finite."""


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray  # pre-clamp samples
    log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray


@dataclass(frozen=True)
class LossCoefs:
    clip_eps: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 5e-3


def clipped_surrogate(ratio, adv, clip_eps: float) -> np.ndarray:
    """Per-sample min(rho*A, clip(rho)*A)."""
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv)


def ppo_loss(policy: PolicyParams, batch: Batch, coefs: LossCoefs = LossCoefs(), with_grad: bool = True):
    """Total PPO loss and (optionally) its gradient as a PolicyParams.

    loss = -mean(surrogate) + value_coef * mean((V - R)^2) - entropy_coef * entropy
    """
    n = len(batch.obs)
    raw_mean, a_inputs = mlp_forward_cached(policy.actor, batch.obs)
    mean = np.tanh(raw_mean)
    log_std = policy.log_std
    inv_std = np.exp(-log_std)
    z = (batch.actions - mean) * inv_std
    logp = np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)
    ratio = np.exp(logp - batch.log_probs)
    adv = batch.advantages
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - coefs.clip_eps, 1.0 + coefs.clip_eps) * adv
    policy_loss = -np.mean(np.minimum(surr1, surr2))

    v_out, c_inputs = mlp_forward_cached(policy.critic, batch.obs)
    v = v_out[:, 0]
    err = v - batch.returns
    value_loss = np.mean(err * err)
    entropy = gaussian_entropy(log_std)
    loss = policy_loss + coefs.value_coef * value_loss - coefs.entropy_coef * entropy
    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "approx_kl": float(np.mean(batch.log_probs - logp)),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > coefs.clip_eps)),
    }
    if not np.isfinite(loss):
        raise UpdateError(f"non-finite loss: {stats}")
    if not with_grad:
        return float(loss), None, stats

    # d loss / d logp per sample; zero where the clipped branch is selected.
    unclipped = surr1 <= surr2
    g_logp = -(adv * ratio * unclipped) / n
    g_mean = g_logp[:, None] * z * inv_std
    g_log_std = np.sum(g_logp[:, None] * (z * z - 1.0), axis=0) - coefs.entropy_coef
    g_raw = g_mean * (1.0 - mean * mean)
    actor_grad = mlp_backward(policy.actor, a_inputs, g_raw)
    g_v = (coefs.value_coef * 2.0 / n) * err
    critic_grad = mlp_backward(policy.critic, c_inputs, g_v[:, None])
    grad = PolicyParams(actor_grad, g_log_std.astype(log_std.dtype), critic_grad)
    return float(loss), grad, stats


def global_norm(arrays) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(a, dtype=np.float64))) for a in arrays)))


def clip_by_global_norm(arrays: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    norm = global_norm(arrays)
    if not np.isfinite(norm):
        raise UpdateError("non-finite gradient norm")
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        arrays = [a * a.dtype.type(scale) for a in arrays]
    return arrays, norm


def linear_lr(step: int, total_steps: int, lr0: float) -> float:
    return lr0 * max(0.0, 1.0 - step / total_steps)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, arrays) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float) -> None:
    """In-place Adam update with bias correction."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        step = (lr / c1) * m / (np.sqrt(v / c2) + state.eps)
        p -= step.astype(p.dtype, copy=False)


def normalize_advantages(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    adv = np.asarray(adv, np.float64)
    return (adv - adv.mean()) / (adv.std() + eps)


@dataclass
class UpdateConfig:
    epochs: int = 3
    batch_size: int = 2048
    grad_clip_norm: float = 0.5
    coefs: LossCoefs = field(default_factory=LossCoefs)


def ppo_update(policy: PolicyParams, buffer: Batch, opt: AdamState, lr: float, config: UpdateConfig,
               rng: np.random.Generator) -> dict:
    """Run the minibatch epochs over a full buffer; mutates ``policy`` and ``opt``.

    Advantages in ``buffer`` must already be normalized. On a non-finite
    loss the policy is restored to its pre-update values and UpdateError
    propagates.
    """
    n = len(buffer.obs)
    if n % config.batch_size:
        raise ValueError("batch_size must divide the buffer size")
    backup = [a.copy() for a in policy.arrays()]
    params = policy.arrays()
    totals: dict[str, float] = {}
    count = 0
    try:
        for _ in range(config.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = perm[start : start + config.batch_size]
                mb = Batch(buffer.obs[idx], buffer.actions[idx], buffer.log_probs[idx],
                           buffer.advantages[idx], buffer.returns[idx])
                _, grad, stats = ppo_loss(policy, mb, config.coefs)
                grads, norm = clip_by_global_norm(grad.arrays(), config.grad_clip_norm)
                adam_step(params, grads, opt, lr)
                stats["grad_norm"] = norm
                for k, val in stats.items():
                    totals[k] = totals.get(k, 0.0) + val
                count += 1
        if not all(np.all(np.isfinite(a)) for a in params):
            raise UpdateError("non-finite parameters after update")
    except UpdateError:
        for p, b in zip(params, backup):
            p[...] = b
        raise
    return {k: v / count for k, v in totals.items()}
