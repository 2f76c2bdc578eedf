"""Episode orchestration: one decision = ``action_repeat`` physics substeps."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (ContentState, ObstacleParams, ObstacleState, PhysicsParams, apply_force, billboard,
                       content_box, make_content, obstacle_region, spawn_obstacle, step_obstacle)
from .reward import RewardBreakdown, RewardInfo, RewardParams, evaluate_reward
from .scene import ContractError, Scene, SemanticClass, sample_free_point
from .sensing import CameraModel, ObsNorms, RayFan, observe, ray_fan_directions, world_boxes
from .usersim import UserSimParams, UserSimulator, UserState, step_user


@dataclass(frozen=True)
class EnvConfig:
    dt: float = 0.02
    action_repeat: int = 5
    episode_length: int = 1000
    obstacle_enabled: bool = False
    spawn_radius: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.action_repeat < 1:
            raise ContractError("action_repeat must be >= 1")
        if self.episode_length < 1:
            raise ContractError("episode_length must be >= 1")
        if not self.dt > 0:
            raise ContractError("dt must be > 0")


@dataclass
class StepResult:
    observation: np.ndarray
    reward: RewardBreakdown
    done: bool
    info: dict = field(default_factory=dict)


class PlacementEnv:
    """Single scene, single user, single panel."""

    def __init__(self, scene: Scene, config: EnvConfig = EnvConfig(), physics: PhysicsParams = PhysicsParams(),
                 user_params: UserSimParams = UserSimParams(), reward_params: RewardParams = RewardParams(),
                 camera: CameraModel = CameraModel(), obstacle_params: ObstacleParams = ObstacleParams(),
                 fan: RayFan | None = None):
        self.scene = scene
        self.config = config
        self.physics = physics
        self.reward_params = reward_params
        self.camera = camera
        self.obstacle_params = obstacle_params
        self.users = UserSimulator(scene, user_params)
        self.fan = fan or ray_fan_directions()
        self.norms = ObsNorms.for_scene(scene, physics.max_speed)
        self.occ_ref = reward_params.resolve_occ_ref(camera)
        self.rng: np.random.Generator | None = None
        self.content: ContentState | None = None
        self.user: UserState | None = None
        self.obstacle: ObstacleState | None = None
        self.t = 0
        self.done = True
        self._ep_return = 0.0
        self._ep_terms = np.zeros(4)

    # -- episode protocol -------------------------------------------------
    def reset(self, seed: int | None = None) -> np.ndarray:
        self.rng = np.random.default_rng(self.config.seed if seed is None else seed)
        rng = self.rng
        self.user = self.users.initial_state(rng)
        eye = self.user.eye_pos
        w, h = 0.4, 0.3
        r = self.config.spawn_radius
        pos = None
        for _ in range(1000):
            cand = sample_free_point(self.scene, rng, math.hypot(w, h) / 2, eye - r, eye + r)
            if np.linalg.norm(cand - eye) <= r:
                pos = cand
                break
        if pos is None:
            pos = cand
        self.content = billboard(make_content(pos), eye)
        self.obstacle = None
        if self.config.obstacle_enabled:
            # the cube starts clear of furniture and of the freshly spawned panel
            lo, hi = obstacle_region(self.scene, self.obstacle_params)
            blockers = self.scene.arrays.with_box(content_box(self.content), SemanticClass.FURNITURE)
            center = sample_free_point(self.scene, rng, 0.5, lo - 0.5, hi + 0.5, extra=blockers)
            self.obstacle = spawn_obstacle(self.scene, rng, center, self.obstacle_params)
        self.t = 0
        self.done = False
        self._ep_return = 0.0
        self._ep_terms[:] = 0.0
        return self.observe()

    def observe(self) -> np.ndarray:
        return observe(self.scene, self.content, self.user, self.obstacle, self.fan, self.norms)

    def reward_info(self) -> RewardInfo:
        return evaluate_reward(self.scene, self.content, self.user, self.obstacle, self.camera,
                               self.reward_params, self.occ_ref)

    def substep(self, action: np.ndarray) -> None:
        dt = self.config.dt
        self.content = apply_force(self.content, action, self.physics, dt, self.scene)
        self.user = step_user(self.user, self.users, self.rng, dt)
        if self.obstacle is not None:
            self.obstacle = step_obstacle(self.obstacle, self.scene, self.rng, dt, self.obstacle_params)
        self.content = billboard(self.content, self.user.eye_pos)

    def step(self, action, hook=None) -> StepResult:
        """Hold ``action`` for ``action_repeat`` substeps, then observe and score.

        ``hook(env)`` runs after the substeps and before scoring; evaluation
        uses it for scripted placements.
        """
        if self.done:
            raise ContractError("step() called on a finished episode; call reset()")
        action = np.clip(np.asarray(action, float).reshape(3), -1.0, 1.0)
        for _ in range(self.config.action_repeat):
            self.substep(action)
        if hook is not None:
            hook(self)
        boxes = world_boxes(self.scene, self.obstacle)
        obs = observe(self.scene, self.content, self.user, self.obstacle, self.fan, self.norms, boxes)
        ri = evaluate_reward(self.scene, self.content, self.user, self.obstacle, self.camera,
                             self.reward_params, self.occ_ref, boxes)
        self.t += 1
        self.done = self.t >= self.config.episode_length
        b = ri.breakdown
        self._ep_return += b.total
        self._ep_terms += (b.visibility, b.reachability, b.physicality, b.stability)
        info = {"overlap": ri.overlapping, "f_vis": ri.f_vis, "distance": ri.distance, "occ": ri.occ,
                "in_front": ri.in_front, "t": self.t}
        if self.done:
            info["episode"] = {"return": self._ep_return, "length": self.t,
                               "terms": dict(zip(("visibility", "reachability", "physicality", "stability"),
                                                 self._ep_terms.tolist()))}
        return StepResult(obs, b, self.done, info)

    # -- test and evaluation hooks ---------------------------------------
    def set_content(self, content: ContentState) -> None:
        self.content = content

    def snapshot(self) -> dict:
        out = {
            "t": self.t,
            "user_eye": self.user.eye_pos.tolist(),
            "user_forward": self.user.forward.tolist(),
            "user_moving": bool(self.user.moving),
            "content_pos": self.content.pos.tolist(),
            "content_vel": self.content.vel.tolist(),
            "content_facing": self.content.facing.tolist(),
            "obstacle": None if self.obstacle is None else self.obstacle.center.tolist(),
        }
        return out


def env_threads() -> int:
    try:
        return max(0, int(os.environ.get("MRRL_THREADS", "0")))
    except ValueError:
        return 0


class VecEnv:
    """``n`` independent environments with private rng streams and auto-reset.

    ``threads > 0`` steps instances on a thread pool; results are identical
    to sequential stepping because instances share no mutable state.
    """

    def __init__(self, envs: list[PlacementEnv], seed: int = 0, threads: int | None = None):
        if not envs:
            raise ContractError("VecEnv needs at least one environment")
        self.envs = envs
        self.threads = env_threads() if threads is None else threads
        self._pool = ThreadPoolExecutor(min(self.threads, len(envs))) if self.threads > 0 else None
        children = np.random.SeedSequence(seed).spawn(len(envs))
        self._seed_rngs = [np.random.default_rng(c) for c in children]

    def __len__(self) -> int:
        return len(self.envs)

    def _next_seed(self, i: int) -> int:
        return int(self._seed_rngs[i].integers(2**63 - 1))

    def _map(self, fn, items):
        if self._pool is None:
            return [fn(*it) for it in items]
        return list(self._pool.map(lambda it: fn(*it), items))

    def reset(self, seeds=None) -> np.ndarray:
        if seeds is None:
            seeds = [self._next_seed(i) for i in range(len(self))]
        if len(seeds) != len(self):
            raise ContractError("one seed per environment required")
        return np.stack(self._map(lambda e, s: e.reset(s), list(zip(self.envs, seeds))))

    def _step_one(self, i: int, action) -> StepResult:
        env = self.envs[i]
        res = env.step(action)
        if res.done:
            res.info["final_observation"] = res.observation
            res.observation = env.reset(self._next_seed(i))
        return res

    def step(self, actions) -> list[StepResult]:
        actions = np.asarray(actions, float)
        if actions.shape != (len(self), 3):
            raise ContractError(f"expected actions of shape ({len(self)}, 3), got {actions.shape}")
        return self._map(self._step_one, list(enumerate(actions)))

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


def vec_reset(venv: VecEnv, seeds=None) -> np.ndarray:
    return venv.reset(seeds)


def vec_step(venv: VecEnv, actions) -> list[StepResult]:
    return venv.step(actions)


def make_vec_env(scenes: list[Scene], n_envs: int, seed: int = 0, threads: int | None = None, **env_kwargs) -> VecEnv:
    """Round-robin the scenes over ``n_envs`` instances."""
    envs = [PlacementEnv(scenes[i % len(scenes)], **env_kwargs) for i in range(n_envs)]
    return VecEnv(envs, seed, threads)
