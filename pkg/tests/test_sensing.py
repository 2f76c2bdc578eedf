import math

import numpy as np
import pytest

from oracles import dense_f_vis, dense_occ
from uiplace.dynamics import ObstacleState, billboard, make_content
from uiplace.scene import Scene, SceneObject, SemanticClass, builtin_scene, make_room
from uiplace.sensing import (OBS_DIM, CameraModel, ObsNorms, observe, ray_fan_directions, reference_occupancy,
                             visibility)
from uiplace.usersim import UserState

CAM = CameraModel()


def user_at(eye, forward=(0, 0, 1), moving=False):
    return UserState(np.asarray(eye, float), np.asarray(forward, float), moving, 3.0)


class TestRayFan:
    def test_unit_and_count(self):
        fan = ray_fan_directions()
        assert fan.directions.shape == (22, 3)
        assert np.allclose(np.linalg.norm(fan.directions, axis=1), 1.0, atol=1e-9)

    def test_min_pairwise_angle(self):
        d = ray_fan_directions().directions
        cos = np.clip(d @ d.T, -1, 1)
        np.fill_diagonal(cos, -1)
        assert math.degrees(math.acos(cos.max())) > 30.0

    def test_deterministic(self):
        assert np.array_equal(ray_fan_directions().directions, ray_fan_directions().directions)


def open_space():
    return Scene((), (-100, -100, -100), (100, 100, 100), "open")


class TestObserve:
    def test_no_hits(self):
        scene = open_space()
        obs = observe(scene, make_content((0, 0, 0)), user_at((0, 0, -1)), None, ray_fan_directions(),
                      ObsNorms.for_scene(scene))
        blocks = obs[:154].reshape(22, 7)
        assert np.all(blocks[:, :5] == 0)
        assert np.all(blocks[:, 5] == 1)
        assert np.all(blocks[:, 6] == 1)

    def test_wall_along_first_ray(self):
        fan = ray_fan_directions()
        d0 = fan.directions[0]
        pos = np.array([0.0, 1.0, 0.0])
        # horizontal slab whose lower face is 1 m away along ray 0
        face_y = pos[1] + d0[1]
        wall = SceneObject(SemanticClass.WALL, (0, face_y + 0.5, 0), (50, 0.5, 50))
        scene = Scene((wall,), (-60, -60, -60), (60, 60, 60))
        obs = observe(scene, make_content(pos), user_at((0, 1.6, -2)), None, fan, ObsNorms.for_scene(scene))
        block = obs[:7]
        assert np.array_equal(block[:5], [0, 1, 0, 0, 0])
        assert block[5] == 0
        assert block[6] == pytest.approx(0.2)

    def test_random_states_in_range(self):
        scene = builtin_scene("living_large")
        norms = ObsNorms.for_scene(scene)
        fan = ray_fan_directions()
        rng = np.random.default_rng(0)
        for _ in range(1000):
            c = make_content(rng.uniform(scene.lo, scene.hi), vel=rng.uniform(-5, 5, 3))
            a = rng.uniform(-math.pi, math.pi)
            u = user_at(rng.uniform(scene.lo, scene.hi), (math.sin(a), 0, math.cos(a)))
            c = billboard(c, u.eye_pos)
            obst = ObstacleState(rng.uniform(scene.lo, scene.hi), np.zeros(3)) if rng.random() < 0.5 else None
            obs = observe(scene, c, u, obst, fan, norms)
            assert obs.shape == (OBS_DIM,) == (171,)
            assert np.all(np.abs(obs) <= 1.0)

    def test_obstacle_seen_by_rays(self):
        scene = open_space()
        c = make_content((0, 1, 0))
        obst = ObstacleState(np.array([0.0, 1.0, 0.0]), np.zeros(3))
        obs = observe(scene, c, user_at((0, 1, -2)), obst, ray_fan_directions(), ObsNorms.for_scene(scene))
        blocks = obs[:154].reshape(22, 7)
        assert np.all(blocks[:, SemanticClass.OBSTACLE] == 1)
        assert np.all(blocks[:, 6] == 0)

    def test_horizontal_translation_invariance(self):
        scene = builtin_scene("office_small")
        shift = np.array([1.7, 0.0, -0.9])
        moved = Scene(tuple(SceneObject(o.cls, tuple(np.add(o.center, shift)), o.half_extents, o.yaw)
                            for o in scene.objects), tuple(scene.lo + shift), tuple(scene.hi + shift))
        fan = ray_fan_directions()
        rng = np.random.default_rng(4)
        for _ in range(50):
            c = make_content(rng.uniform(scene.lo, scene.hi), vel=rng.normal(size=3))
            u = user_at(rng.uniform(scene.lo, scene.hi), (0.6, 0, 0.8))
            c = billboard(c, u.eye_pos)
            a = observe(scene, c, u, None, fan, ObsNorms.for_scene(scene))
            c2 = make_content(c.pos + shift, c.facing, c.vel)
            u2 = user_at(u.eye_pos + shift, u.forward)
            b = observe(moved, c2, u2, None, fan, ObsNorms.for_scene(scene))
            keep = np.r_[0:154, 157:165, 168:171]
            assert np.allclose(a[keep], b[keep], atol=1e-9)
            assert not np.allclose(a[154:157], b[154:157])


class TestVisibility:
    def test_straight_ahead(self):
        room = make_room(8, 3, 8)
        u = user_at((0, 1.6, 0))
        c = billboard(make_content((0, 1.6, 0.5)), u.eye_pos)
        vs = visibility(room, c, u, CAM)
        assert vs.f_vis == 1.0
        assert vs.occ == pytest.approx(reference_occupancy(CAM))

    def test_behind(self):
        room = make_room(8, 3, 8)
        u = user_at((0, 1.6, 0))
        c = billboard(make_content((0, 1.6, -0.5)), u.eye_pos)
        vs = visibility(room, c, u, CAM)
        assert vs.f_vis == 0.0 and vs.occ == 0.0

    def test_reference_occupancy_closed_form(self):
        tv = math.tan(math.radians(30))
        expected = (0.3 / (0.5 * 2 * tv)) * (0.4 / (0.5 * 2 * tv * 16 / 9))
        assert reference_occupancy(CAM) == pytest.approx(expected, rel=1e-12)

    def test_half_hidden_behind_wall_edge(self):
        edge = SceneObject(SemanticClass.WALL, (-0.5, 1.5, 1.0), (0.5, 1.5, 0.05))  # x <= 0 blocked
        scene = Scene((edge,), (-5, -1, -5), (5, 4, 5))
        u = user_at((0, 1.6, 0))
        c = billboard(make_content((0, 1.6, 2.0)), u.eye_pos)
        vs = visibility(scene, c, u, CAM)
        oracle = dense_f_vis(scene.objects, c, u.eye_pos, u.forward, CAM)
        assert 0.3 < oracle < 0.7
        assert abs(vs.f_vis - oracle) <= 0.1
        occ_oracle = dense_occ(c, u.eye_pos, u.forward, CAM)
        assert vs.occ == pytest.approx(occ_oracle, rel=0.1)

    def test_occ_matches_pixel_oracle_partially_offscreen(self):
        scene = open_space()
        rng = np.random.default_rng(8)
        checked = 0
        for _ in range(200):
            u = user_at((0, 1.6, 0), (0, 0, 1))
            c = billboard(make_content(u.eye_pos + rng.uniform([-1, -0.6, 0.1], [1, 0.6, 1.5])), u.eye_pos)
            oracle = dense_occ(c, u.eye_pos, u.forward, CAM, n=200)
            if oracle < 0.02:
                continue
            checked += 1
            assert visibility(scene, c, u, CAM).occ == pytest.approx(oracle, rel=0.1)
        assert checked > 50

    def test_monotone_in_occluder_size(self):
        u = user_at((0, 1.6, 0))
        c = billboard(make_content((0.1, 1.55, 2.0)), u.eye_pos)
        prev = 1.0
        for half in np.linspace(0.01, 0.4, 25):
            occ = SceneObject(SemanticClass.FURNITURE, (0, 1.6, 1.0), (half, half, 0.05))
            f = visibility(Scene((occ,), (-5, -1, -5), (5, 4, 5)), c, u, CAM).f_vis
            assert f <= prev
            prev = f
        assert prev == 0.0

    def test_obstacle_occludes(self):
        u = user_at((0, 1.6, 0))
        c = billboard(make_content((0, 1.6, 2.0)), u.eye_pos)
        obst = ObstacleState(np.array([0, 1.6, 1.0]), np.zeros(3))
        assert visibility(open_space(), c, u, CAM, obst).f_vis == 0.0

    def test_random_configs_against_dense_oracle(self):
        scene = builtin_scene("office_small")
        rng = np.random.default_rng(21)
        for _ in range(60):
            u = user_at(rng.uniform(scene.lo + 0.4, scene.hi - 0.4), (1, 0, 0))
            a = rng.uniform(-math.pi, math.pi)
            u = user_at(u.eye_pos, (math.sin(a), 0, math.cos(a)))
            c = billboard(make_content(u.eye_pos + rng.uniform(-2, 2, 3)), u.eye_pos)
            vs = visibility(scene, c, u, CAM)
            assert abs(vs.f_vis - dense_f_vis(scene.objects, c, u.eye_pos, u.forward, CAM)) <= 0.1
