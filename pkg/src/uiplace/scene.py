"""Box-based indoor scenes and the geometric queries run against them.

Units are meters and radians; the world is Y-up and right-handed. Every
object is a box rotated only about the vertical axis (``yaw``). A box's
local +z axis maps to ``(sin yaw, 0, cos yaw)`` in world space.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


class SceneError(Exception):
    """Raised for malformed scene files and unsatisfiable scene queries."""


class ContractError(ValueError):
    """Raised when a caller violates an operation's precondition."""


class SemanticClass(enum.IntEnum):
    FLOOR = 0
    WALL = 1
    CEILING = 2
    FURNITURE = 3
    OBSTACLE = 4

    @classmethod
    def parse(cls, name: str) -> "SemanticClass":
        try:
            return cls[name.upper()]
        except KeyError:
            raise SceneError(f"class: unknown semantic class {name!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


N_CLASSES = len(SemanticClass)

# Overlap with the floor only counts beyond this penetration depth.
FLOOR_TOLERANCE = 0.01


def wrap_angle(a: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class OrientedBox:
    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]
    yaw: float = 0.0

    def axes(self) -> np.ndarray:
        """Rows are the world-space local x, y, z axes."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
        return np.asarray(self.center) + (signs * self.half_extents) @ self.axes()

    def contains(self, points: np.ndarray, eps: float = 0.0) -> np.ndarray:
        local = (np.atleast_2d(points) - np.asarray(self.center)) @ self.axes().T
        return np.all(np.abs(local) <= np.asarray(self.half_extents) + eps, axis=-1)


@dataclass(frozen=True)
class SceneObject:
    cls: SemanticClass
    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "cls", SemanticClass(self.cls))
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "half_extents", tuple(float(v) for v in self.half_extents))
        object.__setattr__(self, "yaw", float(self.yaw))
        if len(self.center) != 3 or len(self.half_extents) != 3:
            raise SceneError("center/half_extents must have 3 components")
        if not all(h > 0 for h in self.half_extents):
            raise SceneError("half_extents must be > 0")
        if not -math.pi <= self.yaw < math.pi:
            raise SceneError("yaw must lie in [-pi, pi)")

    @property
    def box(self) -> OrientedBox:
        return OrientedBox(self.center, self.half_extents, self.yaw)


@dataclass(frozen=True)
class RayHit:
    hit: bool
    distance: float = math.inf
    point: tuple[float, float, float] | None = None
    cls: SemanticClass | None = None
    index: int = -1


@dataclass(frozen=True)
class BoxArrays:
    """Struct-of-arrays view of a box set, used by the vectorized queries."""

    center: np.ndarray  # (N, 3)
    half: np.ndarray  # (N, 3)
    cos: np.ndarray  # (N,)
    sin: np.ndarray  # (N,)
    cls: np.ndarray  # (N,) int

    @classmethod
    def from_objects(cls, objects) -> "BoxArrays":
        n = len(objects)
        center = np.array([o.center for o in objects], float).reshape(n, 3)
        half = np.array([o.half_extents for o in objects], float).reshape(n, 3)
        yaw = np.array([o.yaw for o in objects], float)
        kinds = np.array([int(o.cls) for o in objects], int)
        return cls(center, half, np.cos(yaw), np.sin(yaw), kinds)

    def __len__(self) -> int:
        return len(self.cls)

    def with_box(self, box: OrientedBox, kind: SemanticClass) -> "BoxArrays":
        return BoxArrays(
            np.vstack([self.center, np.asarray(box.center, float)[None]]),
            np.vstack([self.half, np.asarray(box.half_extents, float)[None]]),
            np.append(self.cos, math.cos(box.yaw)),
            np.append(self.sin, math.sin(box.yaw)),
            np.append(self.cls, int(kind)),
        )

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """Express points (..., 3) in every box frame -> (..., N, 3)."""
        rel = points[..., None, :] - self.center
        x = self.cos * rel[..., 0] - self.sin * rel[..., 2]
        z = self.sin * rel[..., 0] + self.cos * rel[..., 2]
        return np.stack([x, rel[..., 1], z], axis=-1)

    def dirs_to_local(self, dirs: np.ndarray) -> np.ndarray:
        x = self.cos * dirs[..., None, 0] - self.sin * dirs[..., None, 2]
        z = self.sin * dirs[..., None, 0] + self.cos * dirs[..., None, 2]
        y = np.broadcast_to(dirs[..., None, 1], x.shape)
        return np.stack([x, y, z], axis=-1)


@dataclass(frozen=True, eq=True)
class Scene:
    objects: tuple[SceneObject, ...]
    bounds_min: tuple[float, float, float]
    bounds_max: tuple[float, float, float]
    name: str = "scene"

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "bounds_min", tuple(float(v) for v in self.bounds_min))
        object.__setattr__(self, "bounds_max", tuple(float(v) for v in self.bounds_max))

    @cached_property
    def arrays(self) -> BoxArrays:
        return BoxArrays.from_objects(self.objects)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.bounds_min)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.bounds_max)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_size(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    def of_class(self, cls: SemanticClass) -> list[SceneObject]:
        return [o for o in self.objects if o.cls == cls]

    def validate(self) -> None:
        """Check the structural invariants; raise SceneError on failure."""
        if not np.all(self.hi > self.lo):
            raise SceneError("bounds: max must exceed min componentwise")
        for i, obj in enumerate(self.objects):
            c = obj.box.corners()
            if np.any(c < self.lo - 1e-9) or np.any(c > self.hi + 1e-9):
                raise SceneError(f"objects[{i}]: extends outside bounds")
        if len(self.of_class(SemanticClass.FLOOR)) < 1:
            raise SceneError("objects: scene needs at least one floor")
        if len(self.of_class(SemanticClass.WALL)) < 4:
            raise SceneError("objects: scene needs at least four walls")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "bounds": {"min": list(self.bounds_min), "max": list(self.bounds_max)},
            "objects": [
                {
                    "class": o.cls.label,
                    "center": list(o.center),
                    "half_extents": list(o.half_extents),
                    "yaw": o.yaw,
                }
                for o in self.objects
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        def vec3(value, where):
            if not isinstance(value, (list, tuple)) or len(value) != 3:
                raise SceneError(f"{where}: expected a list of 3 numbers")
            out = []
            for v in value:
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                    raise SceneError(f"{where}: components must be finite numbers")
                out.append(float(v))
            return tuple(out)

        if not isinstance(data, dict):
            raise SceneError("scene: top level must be an object")
        unknown = set(data) - {"name", "bounds", "objects"}
        if unknown:
            raise SceneError(f"scene: unknown keys {sorted(unknown)}")
        name = data.get("name", "scene")
        if not isinstance(name, str):
            raise SceneError("name: must be a string")
        bounds = data.get("bounds")
        if not isinstance(bounds, dict) or "min" not in bounds or "max" not in bounds:
            raise SceneError("bounds: expected {'min': [...], 'max': [...]}")
        raw_objects = data.get("objects")
        if not isinstance(raw_objects, list):
            raise SceneError("objects: expected a list")
        objects = []
        for i, raw in enumerate(raw_objects):
            where = f"objects[{i}]"
            if not isinstance(raw, dict):
                raise SceneError(f"{where}: expected an object")
            for key in ("class", "center", "half_extents"):
                if key not in raw:
                    raise SceneError(f"{where}.{key}: missing")
            if not isinstance(raw["class"], str):
                raise SceneError(f"{where}.class: must be a string")
            kind = SemanticClass.parse(raw["class"])
            center = vec3(raw["center"], f"{where}.center")
            half = vec3(raw["half_extents"], f"{where}.half_extents")
            if not all(h > 0 for h in half):
                raise SceneError(f"{where}.half_extents: half_extents must be > 0")
            yaw = raw.get("yaw", 0.0)
            if isinstance(yaw, bool) or not isinstance(yaw, (int, float)) or not math.isfinite(yaw):
                raise SceneError(f"{where}.yaw: must be a finite number")
            if not -math.pi <= yaw < math.pi:
                raise SceneError(f"{where}.yaw: must lie in [-pi, pi)")
            objects.append(SceneObject(kind, center, half, float(yaw)))
        scene = cls(
            tuple(objects),
            vec3(bounds["min"], "bounds.min"),
            vec3(bounds["max"], "bounds.max"),
            name,
        )
        scene.validate()
        return scene


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene.to_dict(), indent=2) + "\n")


def load_scene(path) -> Scene:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: malformed JSON ({exc})") from None
    return Scene.from_dict(data)


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


def ray_box_intervals(boxes: BoxArrays, origins: np.ndarray, dirs: np.ndarray):
    """Slab test of rays (..., 3) against every box -> entry/exit (..., N).

    Misses come back with ``t_near > t_far``.
    """
    o = boxes.to_local(origins)
    d = boxes.dirs_to_local(dirs)
    h = boxes.half
    parallel = np.abs(d) < 1e-12
    safe = np.where(parallel, 1.0, d)
    t1 = (-h - o) / safe
    t2 = (h - o) / safe
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    inside_slab = np.abs(o) <= h
    lo = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), lo)
    hi = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), hi)
    return lo.max(axis=-1), hi.min(axis=-1)


def raycast_boxes(boxes: BoxArrays, origins: np.ndarray, dirs: np.ndarray, max_dist):
    """Nearest hit per ray. Returns (hit, distance, index), one entry per ray.

    A ray starting inside a box hits it at distance 0.
    """
    origins = np.atleast_2d(np.asarray(origins, float))
    dirs = np.atleast_2d(np.asarray(dirs, float))
    n_rays = max(len(origins), len(dirs))
    if len(boxes) == 0:
        return np.zeros(n_rays, bool), np.full(n_rays, np.inf), np.full(n_rays, -1)
    t_near, t_far = ray_box_intervals(boxes, origins, dirs)
    t = np.maximum(t_near, 0.0)
    valid = (t_near <= t_far) & (t_far >= 0.0) & (t <= np.asarray(max_dist, float)[..., None])
    t = np.where(valid, t, np.inf)
    idx = np.argmin(t, axis=-1)
    dist = np.take_along_axis(t, idx[:, None], axis=-1)[:, 0]
    hit = np.isfinite(dist)
    return hit, dist, np.where(hit, idx, -1)


def raycast(scene: Scene, origin, direction, max_dist: float) -> RayHit:
    direction = np.asarray(direction, float)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-6:
        raise ContractError("raycast direction must be unit length")
    if not max_dist > 0:
        raise ContractError("raycast max_dist must be positive")
    origin = np.asarray(origin, float)
    hit, dist, idx = raycast_boxes(scene.arrays, origin[None], direction[None], max_dist)
    if not hit[0]:
        return RayHit(False)
    point = origin + dist[0] * direction
    return RayHit(True, float(dist[0]), tuple(point), scene.objects[idx[0]].cls, int(idx[0]))


def overlap_mask(boxes: BoxArrays, box: OrientedBox, floor_tolerance: float = FLOOR_TOLERANCE) -> np.ndarray:
    """Per-object overlap flags for one yaw-oriented box (separating axes).

    Touching faces do not count. Floors are lowered by ``floor_tolerance``
    so resting contact is ignored.
    """
    if len(boxes) == 0:
        return np.zeros(0, bool)
    center = boxes.center
    half = boxes.half
    if floor_tolerance > 0:
        floor = boxes.cls == SemanticClass.FLOOR
        if floor.any():
            shift = np.where(floor, np.minimum(0.5 * floor_tolerance, 0.5 * half[:, 1]), 0.0)
            center = center.copy()
            half = half.copy()
            center[:, 1] -= shift
            half[:, 1] -= shift
    bc = np.asarray(box.center, float)
    bh = np.asarray(box.half_extents, float)
    vertical = np.abs(center[:, 1] - bc[1]) < half[:, 1] + bh[1]

    # Horizontal footprint: 2D oriented rectangles in the xz plane.
    cb, sb = math.cos(box.yaw), math.sin(box.yaw)
    a_axes = np.array([[cb, -sb], [sb, cb]])  # box local x, z
    o_x = np.stack([boxes.cos, -boxes.sin], axis=-1)  # (N, 2)
    o_z = np.stack([boxes.sin, boxes.cos], axis=-1)
    delta = center[:, [0, 2]] - bc[[0, 2]]
    separated = np.zeros(len(boxes), bool)
    for axis in (a_axes[0], a_axes[1]):
        r_a = bh[0] * abs(a_axes[0] @ axis) + bh[2] * abs(a_axes[1] @ axis)
        r_b = half[:, 0] * np.abs(o_x @ axis) + half[:, 2] * np.abs(o_z @ axis)
        separated |= np.abs(delta @ axis) >= r_a + r_b
    for axes_n, r_b in ((o_x, half[:, 0]), (o_z, half[:, 2])):
        r_a = bh[0] * np.abs(axes_n @ a_axes[0]) + bh[2] * np.abs(axes_n @ a_axes[1])
        separated |= np.abs(np.sum(delta * axes_n, axis=-1)) >= r_a + r_b
    return vertical & ~separated


def overlaps(scene: Scene, box: OrientedBox, extra: BoxArrays | None = None) -> bool:
    if not all(h > 0 for h in box.half_extents):
        raise ContractError("box half_extents must be > 0")
    boxes = scene.arrays if extra is None else extra
    return bool(overlap_mask(boxes, box).any())


def point_box_distance(boxes: BoxArrays, points: np.ndarray) -> np.ndarray:
    """Euclidean distance from points (..., 3) to every box (..., N); 0 inside."""
    local = boxes.to_local(np.asarray(points, float))
    excess = np.maximum(np.abs(local) - boxes.half, 0.0)
    return np.linalg.norm(excess, axis=-1)


def sample_free_point(
    scene: Scene,
    rng: np.random.Generator,
    clearance: float,
    lo=None,
    hi=None,
    max_tries: int = 10_000,
    extra: BoxArrays | None = None,
) -> np.ndarray:
    """Rejection-sample a point whose clearance cube overlaps nothing.

    ``lo``/``hi`` optionally narrow the sampling region (clipped to bounds).
    """
    if clearance < 0:
        raise ContractError("clearance must be >= 0")
    lo = scene.lo if lo is None else np.maximum(np.asarray(lo, float), scene.lo)
    hi = scene.hi if hi is None else np.minimum(np.asarray(hi, float), scene.hi)
    lo = lo + clearance
    hi = hi - clearance
    if np.any(hi <= lo):
        raise SceneError("no free space: clearance exceeds sampling region")
    boxes = scene.arrays if extra is None else extra
    half = (max(clearance, 1e-6),) * 3
    for _ in range(max_tries):
        p = rng.uniform(lo, hi)
        if not overlap_mask(boxes, OrientedBox(tuple(p), half)).any():
            return p
    raise SceneError(f"no free space found after {max_tries} samples")


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

WALL_THICKNESS = 0.1


def room_shell(width: float, height: float, depth: float) -> list[SceneObject]:
    """Floor, ceiling, and four walls around the interior
    ``[-w/2, w/2] x [0, h] x [-d/2, d/2]``."""
    t = WALL_THICKNESS / 2
    w2, d2 = width / 2, depth / 2
    F, W, C = SemanticClass.FLOOR, SemanticClass.WALL, SemanticClass.CEILING
    return [
        SceneObject(F, (0.0, -t, 0.0), (w2 + 2 * t, t, d2 + 2 * t)),
        SceneObject(C, (0.0, height + t, 0.0), (w2 + 2 * t, t, d2 + 2 * t)),
        SceneObject(W, (-w2 - t, height / 2, 0.0), (t, height / 2, d2)),
        SceneObject(W, (w2 + t, height / 2, 0.0), (t, height / 2, d2)),
        SceneObject(W, (0.0, height / 2, -d2 - t), (w2 + 2 * t, height / 2, t)),
        SceneObject(W, (0.0, height / 2, d2 + t), (w2 + 2 * t, height / 2, t)),
    ]


def make_room(width, height, depth, furniture=(), name="room") -> Scene:
    w = WALL_THICKNESS
    return Scene(
        tuple(room_shell(width, height, depth)) + tuple(furniture),
        (-width / 2 - w, -w, -depth / 2 - w),
        (width / 2 + w, height + w, depth / 2 + w),
        name,
    )


@dataclass(frozen=True)
class SceneGenParams:
    width: tuple[float, float] = (4.0, 8.0)
    depth: tuple[float, float] = (4.0, 8.0)
    height: tuple[float, float] = (2.5, 3.2)
    furniture: tuple[int, int] = (2, 6)
    corridor: float = 0.8
    max_tries: int = 1000

    def __post_init__(self):
        for name, low in (("width", 3.0), ("depth", 3.0), ("height", 2.5)):
            a, b = getattr(self, name)
            if a < low or b < a:
                raise SceneError(f"{name}: range must satisfy {low} <= min <= max")
        if self.furniture[0] < 0 or self.furniture[1] < self.furniture[0]:
            raise SceneError("furniture: count range must satisfy 0 <= min <= max")


# (half width, half height, half depth) ranges for furniture archetypes.
_FURNITURE_KINDS = (
    ((0.5, 0.9), (0.36, 0.38), (0.35, 0.5)),  # table / desk
    ((0.7, 1.1), (0.4, 0.45), (0.4, 0.5)),  # sofa
    ((0.4, 0.8), (0.8, 1.0), (0.15, 0.25)),  # shelf / cabinet
    ((0.2, 0.3), (0.22, 0.25), (0.2, 0.3)),  # chair / ottoman
)


def generate_scene(seed: int, params: SceneGenParams = SceneGenParams(), name: str | None = None) -> Scene:
    """Procedurally generate a room with non-overlapping furniture.

    Furniture footprints inflated by ``corridor / 2`` never overlap each
    other, which leaves walkable gaps of at least ``corridor`` meters.
    Raises SceneError when the layout cannot be packed.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5CE7E]))
    width = round(float(rng.uniform(*params.width)), 2)
    depth = round(float(rng.uniform(*params.depth)), 2)
    height = round(float(rng.uniform(*params.height)), 2)
    count = int(rng.integers(params.furniture[0], params.furniture[1] + 1))
    margin = params.corridor / 2
    placed: list[SceneObject] = []
    tries = 0
    while len(placed) < count:
        tries += 1
        if tries > params.max_tries:
            raise SceneError(f"could not place {count} furniture pieces after {params.max_tries} samples")
        kind = _FURNITURE_KINDS[int(rng.integers(len(_FURNITURE_KINDS)))]
        half = tuple(round(float(rng.uniform(*r)), 3) for r in kind)
        yaw = float(rng.choice([0.0, math.pi / 2, -math.pi / 2, rng.uniform(-math.pi, math.pi)]))
        yaw = wrap_angle(yaw)
        x = float(rng.uniform(-width / 2, width / 2))
        z = float(rng.uniform(-depth / 2, depth / 2))
        obj = SceneObject(SemanticClass.FURNITURE, (round(x, 3), half[1], round(z, 3)), half, yaw)
        corners = obj.box.corners()
        if np.any(np.abs(corners[:, 0]) > width / 2) or np.any(np.abs(corners[:, 2]) > depth / 2):
            continue
        inflated = OrientedBox(obj.center, (half[0] + margin, half[1], half[2] + margin), obj.yaw)
        others = BoxArrays.from_objects(
            [SceneObject(o.cls, o.center, (o.half_extents[0] + margin, o.half_extents[1], o.half_extents[2] + margin), o.yaw) for o in placed]
        )
        if len(placed) and overlap_mask(others, inflated, floor_tolerance=0.0).any():
            continue
        placed.append(obj)
    scene = make_room(width, height, depth, placed, name or f"generated-{seed}")
    scene.validate()
    return scene


_DATA = Path(__file__).parent / "data" / "scenes"

TRAINING_SCENES = ("office_small", "living_large")


def builtin_scene_path(name: str) -> Path:
    return _DATA / f"{name}.json"


def builtin_scene(name: str) -> Scene:
    path = builtin_scene_path(name)
    if not path.exists():
        raise SceneError(f"no built-in scene named {name!r}")
    return load_scene(path)
