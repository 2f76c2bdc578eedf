"""Continuous evaluation rollouts and the four placement heuristics.

Metrics are computed from a per-step state trace; :func:`replay_trace`
recomputes every per-step quantity from the logged states alone.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import ObstacleState, PhysicsParams, billboard, content_box, make_content
from .env import EnvConfig, PlacementEnv
from .ppo.policy import PolicyParams, policy_act
from .reward import RewardParams
from .scene import Scene, overlap_mask
from .sensing import CameraModel, visibility, world_boxes
from .usersim import UserSimParams, UserState

METRICS = ("visible_ui_pct", "non_collision_pct", "distance_offset", "speed")


@dataclass(frozen=True)
class EvalConfig:
    steps: int = 10_000
    obstacle_enabled: bool = False
    deterministic_policy: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


@dataclass
class EvalReport:
    scene: str
    condition: str
    steps: int
    visible_ui_pct: float
    non_collision_pct: float
    distance_offset: float
    speed: float
    mean_reward: float = 0.0
    config: dict = field(default_factory=dict)
    checkpoint_hash: str | None = None
    trace_path: str | None = None

    def metrics(self) -> dict:
        return {k: getattr(self, k) for k in METRICS}

    def to_dict(self) -> dict:
        return asdict(self)


class CheckpointPolicy:
    def __init__(self, policy: PolicyParams, deterministic: bool = True, seed: int = 0):
        self.policy = policy
        self.deterministic = deterministic
        self.rng = np.random.default_rng(seed)

    def act(self, obs: np.ndarray) -> np.ndarray:
        return policy_act(self.policy, obs.astype(np.float32), self.rng, self.deterministic)

    hook = None


class RandomPolicy:
    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def act(self, obs):
        return self.rng.uniform(-1.0, 1.0, 3)

    hook = None


class ZeroPolicy:
    def act(self, obs):
        return np.zeros(3)

    hook = None


class OraclePolicy:
    """Test-only scripted placement: after physics, put the panel at rest
    in front of the user, preferring 0.5 m and backing off when blocked."""

    distances = (0.5, 0.45, 0.4, 0.35, 0.3, 0.25)

    def act(self, obs):
        return np.zeros(3)

    def hook(self, env: PlacementEnv) -> None:
        user = env.user
        boxes = world_boxes(env.scene, env.obstacle)
        fallback = None
        for d in self.distances:
            c = billboard(make_content(user.eye_pos + d * user.forward), user.eye_pos)
            if overlap_mask(boxes, content_box(c)).any():
                continue
            fallback = fallback or c
            if visibility(env.scene, c, user, env.camera, env.obstacle, boxes).f_vis >= 1.0:
                env.set_content(c)
                return
        env.set_content(fallback or billboard(make_content(user.eye_pos + 0.5 * user.forward), user.eye_pos))


def aggregate(f_vis, overlap, distance, speed, ref_distance: float = 0.5) -> dict:
    f_vis = np.asarray(f_vis, float)
    overlap = np.asarray(overlap, bool)
    return {
        "visible_ui_pct": float(100.0 * f_vis.mean()),
        "non_collision_pct": float(100.0 * (~overlap).mean()),
        "distance_offset": float(np.abs(np.asarray(distance, float) - ref_distance).mean()),
        "speed": float(np.asarray(speed, float).mean()),
    }


def run_eval(scene: Scene, policy, config: EvalConfig = EvalConfig(), *, physics: PhysicsParams = PhysicsParams(),
             user_params: UserSimParams = UserSimParams(), reward_params: RewardParams = RewardParams(),
             camera: CameraModel = CameraModel(), env_dt: float = 0.02, action_repeat: int = 5,
             trace_path=None, checkpoint_hash: str | None = None, return_trace: bool = False):
    """One continuous rollout of ``config.steps`` decisions.

    ``policy`` is a PolicyParams (wrapped per ``config``) or any object with
    ``act(obs)`` and an optional ``hook(env)``. The panel is never respawned.
    """
    if isinstance(policy, PolicyParams):
        policy = CheckpointPolicy(policy, config.deterministic_policy, config.seed + 1)
    env_cfg = EnvConfig(dt=env_dt, action_repeat=action_repeat, episode_length=config.steps,
                        obstacle_enabled=config.obstacle_enabled, seed=config.seed)
    env = PlacementEnv(scene, env_cfg, physics, user_params, reward_params, camera)
    obs = env.reset(config.seed)
    trace = []
    rewards = []
    hook = getattr(policy, "hook", None)
    for _ in range(config.steps):
        res = env.step(policy.act(obs), hook)
        obs = res.observation
        entry = env.snapshot()
        entry.update(f_vis=res.info["f_vis"], overlap=res.info["overlap"], distance=res.info["distance"],
                     speed=env.content.speed, reward=res.reward.as_dict())
        trace.append(entry)
        rewards.append(res.reward.total)
    m = aggregate([e["f_vis"] for e in trace], [e["overlap"] for e in trace], [e["distance"] for e in trace],
                  [e["speed"] for e in trace], reward_params.ref_distance)
    report = EvalReport(scene.name, "dynamic" if config.obstacle_enabled else "static", config.steps, **m,
                        mean_reward=float(np.mean(rewards)), config=asdict(config),
                        checkpoint_hash=checkpoint_hash)
    if trace_path is not None:
        write_trace(trace, trace_path)
        report.trace_path = str(trace_path)
    if return_trace:
        return report, trace
    return report


def random_episode_returns(scenes: list[Scene], episodes_per_scene: int = 3, seed: int = 0,
                           config: EnvConfig = EnvConfig(), **env_kwargs) -> list[float]:
    """Full-episode returns of uniform random actions: the learning-curve floor."""
    returns = []
    seeds = np.random.SeedSequence(seed).spawn(len(scenes) * episodes_per_scene)
    for k, ss in enumerate(seeds):
        env = PlacementEnv(scenes[k % len(scenes)], config, **env_kwargs)
        rng = np.random.default_rng(ss)
        env.reset(int(rng.integers(2**63 - 1)))
        total, done = 0.0, False
        while not done:
            res = env.step(rng.uniform(-1.0, 1.0, 3))
            total += res.reward.total
            done = res.done
        returns.append(total)
    return returns


def write_trace(trace, path) -> None:
    with open(path, "w") as f:
        for e in trace:
            f.write(json.dumps(e) + "\n")


def read_trace(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def replay_trace(scene: Scene, trace: list[dict], camera: CameraModel = CameraModel(),
                 size=(0.4, 0.3), ref_distance: float = 0.5) -> dict:
    """Recompute visibility, overlap, distance and speed from logged states."""
    f_vis, overlap, distance, speed = [], [], [], []
    for e in trace:
        content = make_content(e["content_pos"], e["content_facing"], e["content_vel"], size)
        user = UserState(np.asarray(e["user_eye"]), np.asarray(e["user_forward"]), e["user_moving"])
        obstacle = None
        if e["obstacle"] is not None:
            obstacle = ObstacleState(np.asarray(e["obstacle"]), np.zeros(3))
        boxes = world_boxes(scene, obstacle)
        f_vis.append(visibility(scene, content, user, camera, obstacle, boxes).f_vis)
        overlap.append(bool(overlap_mask(boxes, content_box(content)).any()))
        distance.append(float(np.linalg.norm(content.pos - user.eye_pos)))
        speed.append(content.speed)
    return aggregate(f_vis, overlap, distance, speed, ref_distance)


def compare_conditions(scenes: list[Scene], policy, base: EvalConfig = EvalConfig(),
                       conditions=(False, True), **kwargs) -> dict:
    """Static and obstacle runs per scene, laid out like a results table.

    Columns are every scene under the first condition, then every scene
    under the second. ``deltas`` holds first-minus-second per scene.
    """
    if not scenes:
        raise ValueError("need at least one scene")
    columns, reports = [], []
    for label, flag in zip(("static", "dynamic"), conditions):
        for scene in scenes:
            cfg = EvalConfig(base.steps, flag, base.deterministic_policy, base.seed)
            rep = run_eval(scene, policy, cfg, **kwargs)
            rep.condition = label
            columns.append(f"{scene.name}/{label}")
            reports.append(rep)
    k = len(scenes)
    rows = {m: [getattr(r, m) for r in reports] for m in METRICS}
    deltas = {m: [rows[m][i] - rows[m][i + k] for i in range(k)] for m in METRICS}
    return {
        "columns": columns,
        "rows": rows,
        "deltas": {"scenes": [s.name for s in scenes], **deltas},
        "reports": [r.to_dict() for r in reports],
    }


def format_table(matrix: dict) -> str:
    cols = matrix["columns"]
    width = max(14, *(len(c) + 2 for c in cols))
    lines = ["metric".ljust(20) + "".join(c.rjust(width) for c in cols)]
    for m in METRICS:
        lines.append(m.ljust(20) + "".join(f"{v:{width}.2f}" for v in matrix["rows"][m]))
    return "\n".join(lines)
