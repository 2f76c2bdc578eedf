"""Point-mass dynamics for the UI panel and the roaming obstacle cube."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .scene import ContractError, OrientedBox, Scene

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhysicsParams:
    mass: float = 1.0
    force_scale: float = 20.0
    drag: float = 2.0
    max_speed: float = 3.0
    dt: float = 0.02

    def __post_init__(self):
        for name in ("mass", "force_scale", "drag", "max_speed", "dt"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be > 0")


@dataclass(frozen=True)
class ContentState:
    pos: np.ndarray
    vel: np.ndarray
    facing: np.ndarray
    size: tuple[float, float] = (0.4, 0.3)
    thickness: float = 0.02

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.vel))

    @property
    def yaw(self) -> float:
        return math.atan2(self.facing[0], self.facing[2])


@dataclass(frozen=True)
class ObstacleState:
    center: np.ndarray
    vel: np.ndarray
    active: bool = True
    waypoint: np.ndarray | None = None
    timer: float = 0.0
    half_extents: tuple[float, float, float] = (0.5, 0.5, 0.5)

    @property
    def box(self) -> OrientedBox:
        return OrientedBox(tuple(self.center), self.half_extents, 0.0)


def make_content(pos, facing=(0.0, 0.0, 1.0), vel=(0.0, 0.0, 0.0), size=(0.4, 0.3), thickness=0.02) -> ContentState:
    return ContentState(np.asarray(pos, float), np.asarray(vel, float), np.asarray(facing, float), tuple(size), thickness)


def apply_force(content: ContentState, action, params: PhysicsParams, dt: float | None = None, scene: Scene | None = None) -> ContentState:
    """One semi-implicit Euler step under a held action in [-1, 1]^3.

    Velocity is damped by ``1 - drag*dt`` and its norm clamped to
    ``max_speed``; position is then advanced with the new velocity and
    clamped to the scene bounds (zeroing the clamped velocity component).
    """
    dt = params.dt if dt is None else dt
    a = np.asarray(action, float)
    if np.any(np.abs(a) > 1.0):
        log.debug("action %s outside [-1, 1]; clamping", a)
        a = np.clip(a, -1.0, 1.0)
    vel = (content.vel + a * (params.force_scale / params.mass * dt)) * (1.0 - params.drag * dt)
    speed = math.sqrt(vel @ vel)
    if speed > params.max_speed:
        vel = vel * (params.max_speed / speed)
    pos = content.pos + vel * dt
    if scene is not None:
        lo, hi = scene.lo, scene.hi
        out = (pos < lo) | (pos > hi)
        if out.any():
            pos = np.clip(pos, lo, hi)
            vel = np.where(out, 0.0, vel)
    return replace(content, pos=pos, vel=vel)


def billboard(content: ContentState, eye_pos) -> ContentState:
    """Yaw the panel to face the user; vertical-only offsets keep the old facing."""
    d = np.asarray(eye_pos, float) - content.pos
    n = math.hypot(d[0], d[2])
    if n < 1e-6:
        return content
    return replace(content, facing=np.array([d[0] / n, 0.0, d[2] / n]))


def content_box(content: ContentState) -> OrientedBox:
    w, h = content.size
    return OrientedBox(tuple(content.pos), (w / 2, h / 2, content.thickness / 2), content.yaw)


def panel_frame(content: ContentState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(right, up, normal) unit vectors of the panel."""
    f = content.facing
    right = np.array([f[2], 0.0, -f[0]])
    return right, np.array([0.0, 1.0, 0.0]), f


@dataclass(frozen=True)
class ObstacleParams:
    speed: float = 0.8
    retarget_range: tuple[float, float] = (3.0, 6.0)
    height_range: tuple[float, float] = (0.5, 1.8)


def obstacle_region(scene: Scene, params: ObstacleParams, half: float = 0.5):
    lo = scene.lo + half
    hi = scene.hi - half
    lo[1] = max(lo[1], params.height_range[0])
    hi[1] = min(hi[1], params.height_range[1])
    return lo, np.maximum(hi, lo)


def spawn_obstacle(scene: Scene, rng: np.random.Generator, center, params: ObstacleParams = ObstacleParams()) -> ObstacleState:
    lo, hi = obstacle_region(scene, params)
    center = np.clip(np.asarray(center, float), lo, hi)
    waypoint = rng.uniform(lo, hi)
    timer = float(rng.uniform(*params.retarget_range))
    d = waypoint - center
    n = np.linalg.norm(d)
    vel = d / n * params.speed if n > 1e-9 else np.array([params.speed, 0.0, 0.0])
    return ObstacleState(center, vel, True, waypoint, timer)


def step_obstacle(obstacle: ObstacleState, scene: Scene, rng: np.random.Generator, dt: float,
                  params: ObstacleParams = ObstacleParams()) -> ObstacleState:
    """Move the cube at constant speed toward its private waypoint.

    The waypoint is redrawn on arrival or when the 3-6 s timer runs out.
    """
    if not obstacle.active:
        return obstacle
    lo, hi = obstacle_region(scene, params)
    waypoint, timer, vel = obstacle.waypoint, obstacle.timer - dt, obstacle.vel
    d = waypoint - obstacle.center
    dist = float(np.linalg.norm(d))
    stride = params.speed * dt
    if dist <= stride:
        center = waypoint.copy()
    else:
        vel = d / dist * params.speed
        center = obstacle.center + vel * dt
    center = np.clip(center, lo, hi)
    if dist <= stride or timer <= 0:
        waypoint = rng.uniform(lo, hi)
        timer = float(rng.uniform(*params.retarget_range))
        nd = waypoint - center
        nn = np.linalg.norm(nd)
        if nn > 1e-9:
            vel = nd / nn * params.speed
    return replace(obstacle, center=center, vel=vel, waypoint=waypoint, timer=timer)
