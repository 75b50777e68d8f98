'''
@author: tempo-bench developers
'''
import math
import unittest

import numpy as np

from tempo_bench import simulator
from tempo_bench.correlation import peak_displacement, xcorr2
from tempo_bench.exceptions import ConfigException, TrajectoryBoundsException
from tempo_bench.heatmap import Heatmap, Pose2D, SensorGeometry, heatmap_mse, normalize_angle

class WorldTest(unittest.TestCase):
    def test_presets_are_deterministic(self):
        for preset in simulator.PRESETS:
            self.assertEqual(simulator.build_world(preset, 3), simulator.build_world(preset, 3))
            self.assertTrue(simulator.build_world(preset, 3).contains(simulator.build_world(preset, 3).start.position())[0])
        self.assertNotEqual(simulator.build_world("room", 0), simulator.build_world("room", 1))

    def test_corridor_panels(self):
        world = simulator.build_world("corridor", 2)
        y = world.start.y
        walls, panels = world.segments[:4], world.segments[4:]
        self.assertEqual(sum(1 for s in walls if s[1] == s[3] and s[2] - s[0] == 30.0), 2)
        self.assertGreater(len(panels), 10)
        for x1, y1, x2, y2 in panels:
            self.assertEqual(x1, x2)
            self.assertLess(min(abs(y1 - y), abs(y2 - y)), 0.31)
        # mirrored about the centre line, pair by pair
        np.testing.assert_allclose(panels[0::2, [1, 3]] - y, -(panels[1::2, [1, 3]] - y))
        np.testing.assert_array_equal(panels[0::2, 0], panels[1::2, 0])

    def test_unknown_preset(self):
        with self.assertRaises(ConfigException):
            simulator.build_world("garden")

    def test_segments_inside_bounds(self):
        with self.assertRaises(ConfigException):
            simulator.World("bad", [(0, 0, 20, 0)], (0, 0, 10, 10), Pose2D(1, 1, 0))

class TrajectoryTest(unittest.TestCase):
    def test_straight(self):
        world = simulator.build_world("corridor")
        traj = simulator.simulate_trajectory(world, simulator.TrajectoryConfig(n_frames=11, speed=1.0, dt=0.1))
        self.assertEqual(len(traj), 11)
        np.testing.assert_allclose(traj.timestamps, np.arange(11) * 0.1)
        self.assertAlmostEqual(traj.path_length(), 1.0)
        self.assertAlmostEqual(list(traj)[-1][1].y, world.start.y)

    def test_loop_heading(self):
        world = simulator.build_world("room")
        cfg = simulator.TrajectoryConfig(kind="loop", speed=0.5, angular_rate=1.0, n_frames=64, dt=0.1)
        traj = simulator.simulate_trajectory(world, cfg)
        final = list(traj)[-1][1]
        self.assertAlmostEqual(final.theta, normalize_angle(63 * 0.1), places=9)
        # a 0.5 m radius circle stays around the start
        self.assertLess(np.linalg.norm(traj.positions() - world.start.position(), axis=1).max(), 1.01)

    def test_corridor_turns(self):
        world = simulator.build_world("corridor")
        cfg = simulator.TrajectoryConfig(kind="corridor-turns", angular_rate=math.pi / 2, n_frames=40, leg_frames=20)
        poses = [p for _, p in simulator.simulate_trajectory(world, cfg)]
        self.assertEqual(poses[20].theta, 0.0)
        self.assertAlmostEqual(abs(poses[30].theta), math.pi / 2, places=9)

    def test_leaving_world(self):
        world = simulator.build_world("room")
        with self.assertRaises(TrajectoryBoundsException) as ctx:
            simulator.simulate_trajectory(world, simulator.TrajectoryConfig(n_frames=100, speed=1.0, dt=0.1))
        self.assertEqual(ctx.exception.frame, 41)

    def test_config_validation(self):
        with self.assertRaises(ConfigException):
            simulator.TrajectoryConfig(n_frames=1)
        with self.assertRaises(ConfigException):
            simulator.TrajectoryConfig(kind="spiral")
        with self.assertRaises(ConfigException):
            simulator.TrajectoryConfig(dt=0)
        self.assertEqual(simulator.TrajectoryConfig(start=(1, 2, 0)).start, Pose2D(1, 2, 0))

class RenderTest(unittest.TestCase):
    geometry = SensorGeometry()

    def create_wall_world(self):
        return simulator.World("wall", [(2.0, -5.0, 2.0, 5.0)], (-5.0, -5.0, 5.0, 5.0), Pose2D(0, 0, 0))

    def test_cast_rays(self):
        world = self.create_wall_world()
        ranges = simulator.cast_rays(world, Pose2D(0, 0, 0), np.array([0.0, math.pi / 4, math.pi]))
        self.assertAlmostEqual(ranges[0], 2.0)
        self.assertAlmostEqual(ranges[1], 2.0 * math.sqrt(2))
        self.assertEqual(ranges[2], np.inf)

    def test_wall_return(self):
        h = simulator.render_lidar(self.create_wall_world(), Pose2D(0, 0, 0), self.geometry)
        column = h.values[:, 32]
        self.assertEqual(int(np.argmax(column)), 25)
        self.assertEqual(column[25], 1.0)
        self.assertAlmostEqual(float(column[26]), math.exp(-0.5), places=6)
        self.assertEqual(column[29], 0.0)
        self.assertTrue(np.all(h.values.max(axis=0) == 1.0))

    def test_nothing_in_range(self):
        h = simulator.render_lidar(self.create_wall_world(), Pose2D(0, 0, math.pi), self.geometry)
        self.assertEqual(h.values.sum(), 0.0)

    def test_pose_outside_world(self):
        with self.assertRaises(ConfigException):
            simulator.render_lidar(self.create_wall_world(), Pose2D(9, 9, 0), self.geometry)

    def test_render_sequence(self):
        world = simulator.build_world("corridor")
        traj = simulator.simulate_trajectory(world, simulator.TrajectoryConfig(n_frames=5))
        seq = simulator.render_sequence(world, traj, self.geometry)
        self.assertEqual(len(seq), 5)
        self.assertEqual(seq.modality_label, "lidar")
        self.assertEqual(seq.poses, [p for _, p in traj])

class DegradationTest(unittest.TestCase):
    geometry = SensorGeometry(100, 5, 32, 32)

    def create_impulse(self):
        values = np.zeros((32, 32))
        values[16, 16] = 1.0
        return Heatmap(self.geometry, values)

    def test_identity_model(self):
        h = self.create_impulse()
        degraded, shift = simulator.degrade_frame(h, simulator.DegradationModel(), 0)
        self.assertEqual(degraded, h)
        self.assertEqual(shift, (0, 0))

    def test_determinism(self):
        model = simulator.DegradationModel(gaussian_sigma=0.1, ghost_count=2, ghost_gain=0.5, dropout_prob=0.1,
                                           jitter_sigma=1.0, seed=7)
        h = self.create_impulse()
        self.assertEqual(simulator.degrade_frame(h, model, 3), simulator.degrade_frame(h, model, 3))
        self.assertNotEqual(simulator.degrade_frame(h, model, 3)[0], simulator.degrade_frame(h, model, 4)[0])

    def test_jitter_matches_correlation_peak(self):
        h = self.create_impulse()
        model = simulator.DegradationModel(jitter_sigma=2.0, seed=11)
        for index in range(10):
            degraded, shift = simulator.degrade_frame(h, model, index)
            if max(abs(s) for s in shift) >= 16:
                continue
            d = peak_displacement(xcorr2(h, degraded, method="direct"))
            self.assertEqual((d.d_range, d.d_azimuth), shift)

    def test_noise_and_dropout(self):
        h = self.create_impulse()
        noisy, _ = simulator.degrade_frame(h, simulator.DegradationModel(gaussian_sigma=0.3, seed=1), 0)
        self.assertGreater(heatmap_mse(noisy, h), 0.0)
        self.assertGreaterEqual(noisy.values.min(), 0.0)
        self.assertLessEqual(noisy.values.max(), 1.0)
        dropped, _ = simulator.degrade_frame(h, simulator.DegradationModel(dropout_prob=1.0), 0)
        self.assertEqual(dropped.values.sum(), 0.0)

    def test_ghosts(self):
        blank = Heatmap.zeros(self.geometry)
        ghosted, _ = simulator.degrade_frame(blank, simulator.DegradationModel(ghost_count=3, ghost_gain=0.8), 0)
        self.assertGreater(ghosted.values.max(), 0.5)

    def test_sequence(self):
        world = simulator.build_world("corridor")
        traj = simulator.simulate_trajectory(world, simulator.TrajectoryConfig(n_frames=4))
        truth = simulator.render_sequence(world, traj, self.geometry)
        degraded = simulator.degrade(truth, simulator.DegradationModel(gaussian_sigma=0.1), "radar")
        self.assertEqual(degraded.modality_label, "radar")
        self.assertEqual(degraded.timestamps, truth.timestamps)
        self.assertEqual(degraded.poses, truth.poses)

    def test_validation(self):
        with self.assertRaises(ConfigException):
            simulator.DegradationModel(gaussian_sigma=-1)
        with self.assertRaises(ConfigException):
            simulator.DegradationModel(dropout_prob=1.5)
        self.assertEqual(simulator.DegradationModel(seed=1).with_seed(5).seed, 5)
