"""Simulated user that walks between random grid waypoints and dwells.

The user moves in straight lines (no path planning). Segments that pass
too close to furniture are rejected when the next waypoint is drawn.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .scene import BoxArrays, ContractError, Scene, SceneError, SemanticClass, point_box_distance

CLEARANCE = 0.3
UP = np.array([0.0, 1.0, 0.0])


class GridError(SceneError):
    pass


@dataclass(frozen=True)
class UserSimParams:
    walk_speed: float = 1.0
    dwell_range: tuple[float, float] = (2.0, 5.0)
    turn_rate: float = math.pi
    grid_spacing: float = 0.5
    eye_heights: tuple[float, ...] = (1.1, 1.6)

    def __post_init__(self):
        if self.walk_speed <= 0:
            raise ContractError("walk_speed must be > 0")
        lo, hi = self.dwell_range
        if not 0 < lo <= hi:
            raise ContractError("dwell_range must satisfy 0 < min <= max")
        if self.turn_rate <= 0:
            raise ContractError("turn_rate must be > 0")


@dataclass(frozen=True)
class WaypointGrid:
    points: np.ndarray  # (M, 3)
    spacing: float
    heights: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class UserState:
    eye_pos: np.ndarray
    forward: np.ndarray
    moving: bool = False
    dwell_remaining: float = 0.0
    target: np.ndarray | None = None  # waypoint while walking, None while dwelling
    facing_goal: np.ndarray | None = None  # facing to turn toward after arrival


def _blockers(scene: Scene) -> BoxArrays:
    return BoxArrays.from_objects([o for o in scene.objects if o.cls != SemanticClass.FLOOR])


def clearance_ok(blockers: BoxArrays, points: np.ndarray, clearance: float = CLEARANCE) -> np.ndarray:
    points = np.atleast_2d(points)
    if len(blockers) == 0:
        return np.ones(len(points), bool)
    return point_box_distance(blockers, points).min(axis=-1) >= clearance


def build_grid(scene: Scene, spacing: float = 0.5, heights=(1.1, 1.6)) -> WaypointGrid:
    """Lattice of (x, z) multiples of ``spacing`` inside bounds, times eye heights,
    keeping points at least 0.3 m from every non-floor object."""
    if spacing <= 0:
        raise ContractError("spacing must be > 0")
    heights = tuple(float(h) for h in heights)
    if not heights:
        raise ContractError("heights must be non-empty")
    lo, hi = scene.lo, scene.hi
    xs = np.arange(math.ceil(lo[0] / spacing - 1e-9), math.floor(hi[0] / spacing + 1e-9) + 1) * spacing
    zs = np.arange(math.ceil(lo[2] / spacing - 1e-9), math.floor(hi[2] / spacing + 1e-9) + 1) * spacing
    hs = np.array([h for h in heights if lo[1] <= h <= hi[1]])
    X, H, Z = np.meshgrid(xs, hs, zs, indexing="ij")
    cand = np.stack([X.ravel(), H.ravel(), Z.ravel()], axis=-1)
    keep = clearance_ok(_blockers(scene), cand) if len(cand) else np.zeros(0, bool)
    points = cand[keep]
    if len(points) == 0:
        raise GridError("waypoint grid is empty: no lattice point has enough clearance")
    return WaypointGrid(points, float(spacing), heights)


def segment_clear(blockers: BoxArrays, a: np.ndarray, b: np.ndarray, step: float = 0.1) -> bool:
    n = max(2, int(math.ceil(np.linalg.norm(b - a) / step)) + 1)
    s = np.linspace(0.0, 1.0, n)[:, None]
    return bool(clearance_ok(blockers, a + s * (b - a)).all())


def random_facing(rng: np.random.Generator) -> np.ndarray:
    a = rng.uniform(-math.pi, math.pi)
    return np.array([math.sin(a), 0.0, math.cos(a)])


def _rotate_toward(forward: np.ndarray, goal: np.ndarray, max_angle: float) -> np.ndarray:
    a = math.atan2(forward[0], forward[2])
    b = math.atan2(goal[0], goal[2])
    diff = (b - a + math.pi) % (2 * math.pi) - math.pi
    if abs(diff) <= max_angle:
        return goal.copy()
    a += math.copysign(max_angle, diff)
    return np.array([math.sin(a), 0.0, math.cos(a)])


class UserSimulator:
    """Holds the grid and the segment-check geometry for one scene."""

    def __init__(self, scene: Scene, params: UserSimParams = UserSimParams(), grid: WaypointGrid | None = None):
        self.scene = scene
        self.params = params
        self.grid = grid or build_grid(scene, params.grid_spacing, params.eye_heights)
        self.blockers = _blockers(scene)

    def initial_state(self, rng: np.random.Generator) -> UserState:
        pos = self.grid.points[int(rng.integers(len(self.grid)))].copy()
        dwell = float(rng.uniform(*self.params.dwell_range))
        return UserState(pos, random_facing(rng), False, dwell)

    def pick_target(self, pos: np.ndarray, rng: np.random.Generator, tries: int = 32) -> np.ndarray | None:
        pts = self.grid.points
        for _ in range(tries):
            cand = pts[int(rng.integers(len(pts)))]
            if np.allclose(cand, pos):
                continue
            if segment_clear(self.blockers, pos, cand):
                return cand.copy()
        return None

    def step(self, state: UserState, rng: np.random.Generator, dt: float) -> UserState:
        return step_user(state, self, rng, dt)


def step_user(state: UserState, sim: UserSimulator, rng: np.random.Generator, dt: float) -> UserState:
    """Advance the user by ``dt`` seconds.

    Dwelling: count down and turn toward the sampled facing; on expiry pick
    the next waypoint. Walking: advance at walk speed facing the travel
    direction; on arrival start a new dwell.
    """
    if dt <= 0:
        raise ContractError("dt must be > 0")
    p = sim.params
    if state.target is None:
        forward = state.forward
        if state.facing_goal is not None:
            forward = _rotate_toward(forward, state.facing_goal, p.turn_rate * dt)
        remaining = state.dwell_remaining - dt
        if remaining > 1e-12:
            return replace(state, forward=forward, moving=False, dwell_remaining=remaining)
        target = sim.pick_target(state.eye_pos, rng)
        if target is None:
            # Boxed in: dwell again rather than walk through furniture.
            return replace(state, forward=forward, moving=False, dwell_remaining=float(rng.uniform(*p.dwell_range)))
        return UserState(state.eye_pos, forward, False, 0.0, target, random_facing(rng))

    delta = state.target - state.eye_pos
    dist = float(np.linalg.norm(delta))
    stride = p.walk_speed * dt
    horiz = np.array([delta[0], 0.0, delta[2]])
    hn = np.linalg.norm(horiz)
    forward = horiz / hn if hn > 1e-9 else state.forward
    if dist <= stride:
        moved = dist > 1e-9
        dwell = float(rng.uniform(*p.dwell_range))
        return UserState(state.target.copy(), forward, moved, dwell, None, state.facing_goal)
    pos = state.eye_pos + delta * (stride / dist)
    return UserState(pos, forward, True, 0.0, state.target, state.facing_goal)
