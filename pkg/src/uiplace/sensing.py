"""Observation vector and analytic panel visibility.

Observation layout (version 1, 171 floats, every entry in [-1, 1]):

====================  =====  ==============================================
slice                 size   content
====================  =====  ==============================================
0:154                 154    22 ray blocks of [one-hot class (5), no-hit,
                             distance / max_length]
154:157               3      content position, (p - bounds center) / half
157:160               3      content facing
160:163               3      content rotation (pitch, yaw, roll) / pi
163                   1      content speed / max_speed
164                   1      content-to-eye distance / 10 m
165:168               3      user eye position, normalized like content
168:171               3      user forward
====================  =====  ==============================================
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ContentState, ObstacleState, panel_frame
from .scene import N_CLASSES, BoxArrays, Scene, SemanticClass, raycast_boxes
from .usersim import UserState

OBS_VERSION = 1
N_RAYS = 22
RAY_BLOCK = N_CLASSES + 2
OBS_DIM = N_RAYS * RAY_BLOCK + 17


@dataclass(frozen=True)
class RayFan:
    directions: np.ndarray  # (22, 3)
    max_length: float = 5.0


def ray_fan_directions(max_length: float = 5.0, n: int = N_RAYS) -> RayFan:
    """Spherical Fibonacci lattice: near-uniform directions on the sphere."""
    i = np.arange(n) + 0.5
    y = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - y * y)
    theta = math.pi * (3.0 - math.sqrt(5.0)) * np.arange(n)
    d = np.stack([r * np.cos(theta), y, r * np.sin(theta)], axis=-1)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    d.setflags(write=False)
    return RayFan(d, max_length)


@dataclass(frozen=True)
class CameraModel:
    vertical_fov: float = math.radians(60.0)
    aspect: float = 16.0 / 9.0
    near: float = 0.05
    far: float = 20.0

    def __post_init__(self):
        if not 0 < self.vertical_fov < math.pi:
            raise ValueError("vertical_fov must lie in (0, pi)")
        if not 0 < self.near < self.far:
            raise ValueError("need 0 < near < far")

    @property
    def tan_v(self) -> float:
        return math.tan(self.vertical_fov / 2)

    @property
    def tan_h(self) -> float:
        return self.tan_v * self.aspect


@dataclass(frozen=True)
class ObsNorms:
    center: np.ndarray
    half: np.ndarray
    max_speed: float = 3.0
    user_distance: float = 10.0

    @classmethod
    def for_scene(cls, scene: Scene, max_speed: float = 3.0) -> "ObsNorms":
        return cls(scene.center, scene.half_size, max_speed)


def world_boxes(scene: Scene, obstacle: ObstacleState | None) -> BoxArrays:
    if obstacle is None or not obstacle.active:
        return scene.arrays
    return scene.arrays.with_box(obstacle.box, SemanticClass.OBSTACLE)


def ray_blocks(boxes: BoxArrays, origin: np.ndarray, fan: RayFan) -> np.ndarray:
    hit, dist, idx = raycast_boxes(boxes, origin[None], fan.directions, fan.max_length)
    block = np.zeros((len(fan.directions), RAY_BLOCK))
    if hit.any():
        block[hit, boxes.cls[idx[hit]]] = 1.0
    block[:, N_CLASSES] = ~hit
    block[:, N_CLASSES + 1] = np.where(hit, dist / fan.max_length, 1.0)
    return block


def observe(scene: Scene, content: ContentState, user: UserState, obstacle: ObstacleState | None,
            fan: RayFan, norms: ObsNorms, boxes: BoxArrays | None = None) -> np.ndarray:
    boxes = world_boxes(scene, obstacle) if boxes is None else boxes
    obs = np.empty(OBS_DIM)
    obs[: N_RAYS * RAY_BLOCK] = ray_blocks(boxes, content.pos, fan).ravel()
    k = N_RAYS * RAY_BLOCK
    obs[k : k + 3] = (content.pos - norms.center) / norms.half
    obs[k + 3 : k + 6] = content.facing
    obs[k + 6 : k + 9] = (0.0, content.yaw / math.pi, 0.0)
    obs[k + 9] = content.speed / norms.max_speed
    obs[k + 10] = np.linalg.norm(user.eye_pos - content.pos) / norms.user_distance
    obs[k + 11 : k + 14] = (user.eye_pos - norms.center) / norms.half
    obs[k + 14 : k + 17] = user.forward
    return np.clip(obs, -1.0, 1.0)


# ---------------------------------------------------------------------------
# Visibility
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VisibilitySample:
    f_vis: float
    occ: float


def camera_basis(forward: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    f = np.asarray(forward, float)
    f = f / np.linalg.norm(f)
    up = np.array([0.0, 1.0, 0.0])
    right = np.cross(f, up)
    rn = np.linalg.norm(right)
    right = right / rn if rn > 1e-9 else np.array([1.0, 0.0, 0.0])
    return right, np.cross(right, f), f


def to_view(points: np.ndarray, eye: np.ndarray, forward: np.ndarray) -> np.ndarray:
    """World points -> view coordinates (x right, y up, z along forward)."""
    r, u, f = camera_basis(forward)
    rel = np.atleast_2d(points) - eye
    return np.stack([rel @ r, rel @ u, rel @ f], axis=-1)


def panel_points(content: ContentState, n: int) -> np.ndarray:
    """Cell-centred n x n sample grid over the panel face."""
    right, up, _ = panel_frame(content)
    w, h = content.size
    s = (np.arange(n) + 0.5) / n - 0.5
    a, b = np.meshgrid(s * w, s * h, indexing="ij")
    return content.pos + a.reshape(-1, 1) * right + b.reshape(-1, 1) * up


def panel_corners(content: ContentState) -> np.ndarray:
    right, up, _ = panel_frame(content)
    w, h = content.size
    return content.pos + np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], float) @ np.stack([right * w / 2, up * h / 2])


def in_frustum(view: np.ndarray, camera: CameraModel) -> np.ndarray:
    z = view[:, 2]
    ok = (z >= camera.near) & (z <= camera.far)
    zs = np.where(ok, z, 1.0)
    return ok & (np.abs(view[:, 0]) <= zs * camera.tan_h) & (np.abs(view[:, 1]) <= zs * camera.tan_v)


def unoccluded(boxes: BoxArrays, eye: np.ndarray, points: np.ndarray) -> np.ndarray:
    d = points - eye
    dist = np.linalg.norm(d, axis=-1)
    safe = np.maximum(dist, 1e-12)
    hit, t, _ = raycast_boxes(boxes, eye[None], d / safe[:, None], np.maximum(dist - 1e-4, 1e-12))
    return ~hit | (dist <= 1e-4)


def clip_polygon(poly: list, inside, intersect) -> list:
    """One Sutherland-Hodgman pass of ``poly`` against a half-space."""
    out = []
    n = len(poly)
    for i in range(n):
        cur, prev = poly[i], poly[i - 1]
        cin, pin = inside(cur), inside(prev)
        if cin:
            if not pin:
                out.append(intersect(prev, cur))
            out.append(cur)
        elif pin:
            out.append(intersect(prev, cur))
    return out


def polygon_area(poly) -> float:
    if len(poly) < 3:
        return 0.0
    p = np.asarray(poly)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(x @ np.roll(y, -1) - y @ np.roll(x, -1)))


def viewport_fraction(corners_view: np.ndarray, camera: CameraModel) -> float:
    """Area of the projected, viewport-clipped polygon over viewport area."""
    near = camera.near

    def cut_near(a, b):
        t = (near - a[2]) / (b[2] - a[2])
        return a + t * (b - a)

    poly = clip_polygon(list(corners_view), lambda p: p[2] >= near, cut_near)
    if len(poly) < 3:
        return 0.0
    ndc = [np.array([p[0] / (p[2] * camera.tan_h), p[1] / (p[2] * camera.tan_v)]) for p in poly]
    for axis in (0, 1):
        for sign in (1.0, -1.0):
            def inside(p, axis=axis, sign=sign):
                return sign * p[axis] <= 1.0

            def cut(a, b, axis=axis, sign=sign):
                t = (sign - a[axis]) / (b[axis] - a[axis])
                return a + t * (b - a)

            ndc = clip_polygon(ndc, inside, cut)
            if len(ndc) < 3:
                return 0.0
    return min(polygon_area(ndc) / 4.0, 1.0)


def visibility(scene: Scene, content: ContentState, user: UserState, camera: CameraModel = CameraModel(),
               obstacle: ObstacleState | None = None, boxes: BoxArrays | None = None, grid: int = 8) -> VisibilitySample:
    """Fraction of panel samples seen by the user, and its viewport share.

    ``f_vis`` counts the ``grid x grid`` panel samples that sit inside the
    frustum with a clear line of sight; ``occ`` is the projected panel area
    after clipping to the near plane and viewport.
    """
    boxes = world_boxes(scene, obstacle) if boxes is None else boxes
    eye = np.asarray(user.eye_pos, float)
    pts = panel_points(content, grid)
    inside = in_frustum(to_view(pts, eye, user.forward), camera)
    if inside.any():
        seen = inside.copy()
        seen[inside] = unoccluded(boxes, eye, pts[inside])
        f_vis = float(seen.mean())
    else:
        f_vis = 0.0
    occ = viewport_fraction(to_view(panel_corners(content), eye, user.forward), camera)
    return VisibilitySample(f_vis, occ)


def reference_occupancy(camera: CameraModel, size=(0.4, 0.3), distance: float = 0.5) -> float:
    """Viewport share of a head-on panel at ``distance``."""
    w, h = size
    corners = np.array([[-w / 2, -h / 2, distance], [w / 2, -h / 2, distance],
                        [w / 2, h / 2, distance], [-w / 2, h / 2, distance]])
    return viewport_fraction(corners, camera)
