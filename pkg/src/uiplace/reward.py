"""Per-decision placement reward: visibility, reachability, physicality, stability."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ContentState, ObstacleState, content_box
from .scene import BoxArrays, Scene, overlap_mask
from .sensing import CameraModel, VisibilitySample, reference_occupancy, visibility, world_boxes
from .usersim import UserState


@dataclass(frozen=True)
class RewardParams:
    ref_distance: float = 0.5
    kernel_width: float = 0.05
    speed_threshold: float = 0.3
    vis_scale: float = 0.1
    reach_scale: float = 0.1
    phys_scale: float = 0.01
    stab_scale: float = 0.01
    occ_ref: float | None = None  # None: head-on panel at ref_distance for the camera in use

    def __post_init__(self):
        for name in ("ref_distance", "kernel_width", "speed_threshold", "vis_scale", "reach_scale",
                     "phys_scale", "stab_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.occ_ref is not None and not self.occ_ref > 0:
            raise ValueError("occ_ref must be > 0")

    def resolve_occ_ref(self, camera: CameraModel, size=(0.4, 0.3)) -> float:
        if self.occ_ref is not None:
            return self.occ_ref
        return reference_occupancy(camera, size, self.ref_distance)


@dataclass(frozen=True)
class RewardBreakdown:
    visibility: float
    reachability: float
    physicality: float
    stability: float
    total: float

    @classmethod
    def of(cls, vis: float, reach: float, phys: float, stab: float) -> "RewardBreakdown":
        return cls(vis, reach, phys, stab, vis + reach + phys + stab)

    def as_dict(self) -> dict:
        return {"visibility": self.visibility, "reachability": self.reachability,
                "physicality": self.physicality, "stability": self.stability, "total": self.total}


def p_percent(vs: VisibilitySample, occ_ref: float) -> float:
    if vs.f_vis <= 0.0:
        return 0.0
    return vs.f_vis * min(vs.occ / occ_ref, 1.0)


def r_visibility(p: float, scale: float = 0.1) -> float:
    return scale * p if p > 0 else -scale


def reach_kernel(dist, ref: float = 0.5, width: float = 0.05):
    """Quartic bump exp(-(d - ref)^4 / width), peaking at ``ref``."""
    return np.exp(-((np.asarray(dist, float) - ref) ** 4) / width)


def r_reachability(dist: float, in_front: bool, params: RewardParams = RewardParams()) -> float:
    if not in_front:
        return -params.reach_scale
    return params.reach_scale * math.exp(-((dist - params.ref_distance) ** 4) / params.kernel_width)


def r_physicality(overlapping: bool, scale: float = 0.01) -> float:
    return -scale if overlapping else scale


def r_stability(user_moving: bool, speed: float, params: RewardParams = RewardParams()) -> float:
    if user_moving:
        return 0.0
    return params.stab_scale if speed < params.speed_threshold else -params.stab_scale


def is_in_front(user: UserState, content: ContentState) -> bool:
    return float(np.dot(user.forward, content.pos - user.eye_pos)) > 0.0


@dataclass(frozen=True)
class RewardInfo:
    breakdown: RewardBreakdown
    f_vis: float
    occ: float
    p_percent: float
    distance: float
    in_front: bool
    overlapping: bool


def evaluate_reward(scene: Scene, content: ContentState, user: UserState, obstacle: ObstacleState | None,
                    camera: CameraModel, params: RewardParams, occ_ref: float | None = None,
                    boxes: BoxArrays | None = None) -> RewardInfo:
    boxes = world_boxes(scene, obstacle) if boxes is None else boxes
    occ_ref = params.resolve_occ_ref(camera, content.size) if occ_ref is None else occ_ref
    vs = visibility(scene, content, user, camera, obstacle, boxes)
    p = p_percent(vs, occ_ref)
    dist = float(np.linalg.norm(content.pos - user.eye_pos))
    front = is_in_front(user, content)
    hit = bool(overlap_mask(boxes, content_box(content)).any())
    b = RewardBreakdown.of(
        r_visibility(p, params.vis_scale),
        r_reachability(dist, front, params),
        r_physicality(hit, params.phys_scale),
        r_stability(user.moving, content.speed, params),
    )
    return RewardInfo(b, vs.f_vis, vs.occ, p, dist, front, hit)


def total_reward(scene, content, user, obstacle, camera=CameraModel(), params=RewardParams()) -> RewardBreakdown:
    return evaluate_reward(scene, content, user, obstacle, camera, params).breakdown
