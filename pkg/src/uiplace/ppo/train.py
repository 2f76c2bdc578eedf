"""On-policy training loop over a vectorized environment."""
from __future__ import annotations

import json
import logging
import math
import time
from collections import deque
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..env import VecEnv
from ..sensing import OBS_DIM
from .checkpoint import PolicyCheckpoint, save_checkpoint
from .gae import gae
from .policy import init_policy, policy_sample, value
from .update import AdamState, Batch, LossCoefs, UpdateConfig, UpdateError, linear_lr, normalize_advantages, ppo_update

log = logging.getLogger(__name__)

TERMS = ("visibility", "reachability", "physicality", "stability")


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 5_000_000
    buffer_size: int = 409_600
    batch_size: int = 2048
    lr0: float = 3e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs_per_update: int = 3
    entropy_coef: float = 5e-3
    value_coef: float = 0.5
    grad_clip_norm: float = 0.5
    n_envs: int = 6
    hidden: tuple[int, ...] = (128, 128)
    init_log_std: float = math.log(0.5)
    checkpoint_every: int = 10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        for name in ("total_steps", "buffer_size", "batch_size", "lr0", "epochs_per_update", "n_envs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.buffer_size % self.batch_size:
            raise ValueError("batch_size must divide buffer_size")
        if not (0 <= self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


PRESETS = {
    "paper": dict(total_steps=5_000_000, buffer_size=409_600, batch_size=2048, n_envs=6),
    "desk": dict(total_steps=1_000_000, buffer_size=16_384, batch_size=512, n_envs=6),
}


class TrainingError(RuntimeError):
    def __init__(self, message: str, last_checkpoint: str | None = None):
        super().__init__(message if last_checkpoint is None else f"{message} (last good checkpoint: {last_checkpoint})")
        self.last_checkpoint = last_checkpoint


def collect_rollout(venv: VecEnv, policy, obs: np.ndarray, horizon: int, rng: np.random.Generator,
                    on_episode=None):
    """Step every instance ``horizon`` times with sampled actions.

    Returns arrays shaped (horizon, n_envs, ...) plus the next observation.
    """
    n = len(venv)
    out_obs = np.empty((horizon, n, obs.shape[-1]), np.float32)
    actions = np.empty((horizon, n, 3), np.float32)
    logps = np.empty((horizon, n))
    values = np.empty((horizon, n))
    rewards = np.empty((horizon, n))
    dones = np.empty((horizon, n))
    terms = np.zeros(4)
    for t in range(horizon):
        o32 = obs.astype(np.float32)
        act, raw, logp = policy_sample(policy, o32, rng)
        out_obs[t] = o32
        actions[t] = raw
        logps[t] = logp
        values[t] = value(policy, o32)
        results = venv.step(act)
        for i, res in enumerate(results):
            b = res.reward
            rewards[t, i] = b.total
            dones[t, i] = res.done
            terms += (b.visibility, b.reachability, b.physicality, b.stability)
            if res.done and on_episode is not None:
                on_episode(i, res.info["episode"], t)
        obs = np.stack([r.observation for r in results])
    boot = value(policy, obs.astype(np.float32))
    return dict(obs=out_obs, actions=actions, log_probs=logps, values=values, rewards=rewards, dones=dones,
                terms=terms / (horizon * n)), obs, boot


def train(venv: VecEnv, config: TrainConfig, out_dir=None, initial=None, progress: bool = False):
    """Alternate rollout collection and PPO updates until ``total_steps``.

    Writes ``train_log.jsonl``, ``episodes.jsonl``, periodic checkpoints
    and ``final.mrrl`` into ``out_dir`` when given. Returns the final
    checkpoint and the list of per-update log records.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    init_rng, act_rng, shuffle_rng = (np.random.default_rng(s) for s in seeds)
    policy = initial.copy() if initial is not None else init_policy(
        init_rng, OBS_DIM, config.hidden, 3, config.init_log_std)
    opt = AdamState.zeros_like(policy.arrays())
    upd_cfg = UpdateConfig(config.epochs_per_update, config.batch_size, config.grad_clip_norm,
                           LossCoefs(config.clip_eps, config.value_coef, config.entropy_coef))
    n = len(venv)
    horizon = math.ceil(config.buffer_size / n)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
        log_f = open(out / "train_log.jsonl", "w")
        ep_f = open(out / "episodes.jsonl", "w")
    records = []
    recent = deque(maxlen=100)
    step = 0
    update = 0
    last_good = None
    obs = venv.reset()
    started = time.perf_counter()

    def on_episode(i, ep, t):
        recent.append(ep["return"])
        if out is not None:
            rec = {"step": step + (t + 1) * n, "env": i, "return": ep["return"], "length": ep["length"],
                   "terms": ep["terms"]}
            ep_f.write(json.dumps(rec) + "\n")

    def make_ckpt():
        return PolicyCheckpoint(policy.copy(), step, {"train": config.to_dict()})

    try:
        while step < config.total_steps:
            lr = linear_lr(step, config.total_steps, config.lr0)
            roll, obs, boot = collect_rollout(venv, policy, obs, horizon, act_rng, on_episode)
            step += horizon * n
            adv, ret = gae(roll["rewards"], roll["values"], roll["dones"], boot, config.gamma, config.gae_lambda)
            # env-major flattening keeps each instance's trajectory contiguous; surplus is dropped
            take = config.buffer_size

            def flat(a):
                a = np.swapaxes(a, 0, 1)
                return a.reshape(n * horizon, *a.shape[2:])[:take]

            batch = Batch(flat(roll["obs"]), flat(roll["actions"]), flat(roll["log_probs"]),
                          normalize_advantages(flat(adv)), flat(ret))
            try:
                stats = ppo_update(policy, batch, opt, lr, upd_cfg, shuffle_rng)
            except UpdateError as exc:
                raise TrainingError(str(exc), last_good) from exc
            update += 1
            rec = {
                "update": update,
                "step": step,
                "lr": lr,
                "mean_return": float(np.mean(recent)) if recent else None,
                "std_return": float(np.std(recent)) if recent else None,
                "episodes": len(recent),
                "mean_step_reward": float(roll["rewards"].mean()),
                "reward_terms": dict(zip(TERMS, roll["terms"].tolist())),
                **{k: stats[k] for k in ("loss", "policy_loss", "value_loss", "entropy", "approx_kl", "clip_frac",
                                         "grad_norm")},
                "elapsed_s": round(time.perf_counter() - started, 2),
            }
            records.append(rec)
            if out is not None:
                log_f.write(json.dumps(rec) + "\n")
                log_f.flush()
                ep_f.flush()
                if update % config.checkpoint_every == 0:
                    last_good = str(out / "checkpoints" / f"step_{step:09d}.mrrl")
                    save_checkpoint(make_ckpt(), last_good)
            if progress:
                log.info("update %d step %d lr %.2e return %s step-reward %.4f kl %.4f", update, step, lr,
                         None if rec["mean_return"] is None else round(rec["mean_return"], 2),
                         rec["mean_step_reward"], rec["approx_kl"])
    finally:
        if out is not None:
            log_f.close()
            ep_f.close()
    ckpt = make_ckpt()
    if out is not None:
        save_checkpoint(ckpt, out / "final.mrrl")
    return ckpt, records
