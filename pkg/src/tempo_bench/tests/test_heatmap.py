'''
@author: tempo-bench developers
'''
import math
import unittest

import numpy as np

from tempo_bench import heatmap
from tempo_bench.exceptions import ConfigException, DataException, GeometryMismatchException

class GeometryTest(unittest.TestCase):
    def test_defaults(self):
        g = heatmap.SensorGeometry()
        self.assertEqual(g.shape, (64, 64))
        self.assertAlmostEqual(g.range_resolution, 5.0 / 64)
        self.assertAlmostEqual(g.azimuth_resolution, math.radians(100) / 64)

    def test_bin_centres(self):
        g = heatmap.SensorGeometry(100, 5, 10, 10)
        self.assertAlmostEqual(g.range_centers()[0], 0.25)
        self.assertAlmostEqual(g.azimuth_centers()[0], -math.radians(50) + math.radians(5))
        self.assertAlmostEqual(g.azimuth_centers().mean(), 0.0)

    def test_validation(self):
        with self.assertRaises(ConfigException):
            heatmap.SensorGeometry(azimuth_fov=0)
        with self.assertRaises(ConfigException):
            heatmap.SensorGeometry(max_range=-1)
        with self.assertRaises(ConfigException):
            heatmap.SensorGeometry(n_range_bins=4)

class HeatmapTest(unittest.TestCase):
    geometry = heatmap.SensorGeometry(100, 5, 16, 16)

    def test_values_are_read_only_float32(self):
        h = heatmap.Heatmap(self.geometry, np.full((16, 16), 0.5))
        self.assertEqual(h.values.dtype, np.float32)
        with self.assertRaises(ValueError):
            h.values[0, 0] = 1.0

    def test_rejects_invalid_values(self):
        with self.assertRaises(DataException):
            heatmap.Heatmap(self.geometry, np.full((16, 16), 1.5))
        with self.assertRaises(DataException):
            heatmap.Heatmap(self.geometry, np.full((16, 16), np.nan))
        with self.assertRaises(GeometryMismatchException):
            heatmap.Heatmap(self.geometry, np.zeros((8, 16)))

    def test_from_array_clamps(self):
        h = heatmap.Heatmap.from_array(self.geometry, np.full((16, 16), 2.0))
        self.assertEqual(h.values.max(), 1.0)

    def test_equality(self):
        a = heatmap.Heatmap.zeros(self.geometry)
        b = heatmap.Heatmap(self.geometry, np.zeros((16, 16)))
        self.assertEqual(a, b)
        self.assertNotEqual(a, heatmap.Heatmap(self.geometry, np.full((16, 16), 0.1)))

class PoseTest(unittest.TestCase):
    def test_angle_normalisation(self):
        self.assertAlmostEqual(heatmap.normalize_angle(3 * math.pi), math.pi)
        self.assertAlmostEqual(heatmap.normalize_angle(-math.pi), math.pi)
        self.assertEqual(heatmap.normalize_angle(0.25), 0.25)

    def test_compose(self):
        p = heatmap.Pose2D(1.0, 2.0, math.pi / 2)
        q = p.compose(heatmap.Pose2D(1.0, 0.0, 0.0))
        self.assertAlmostEqual(q.x, 1.0)
        self.assertAlmostEqual(q.y, 3.0)
        self.assertAlmostEqual(q.theta, math.pi / 2)

    def test_transform_points(self):
        p = heatmap.Pose2D(1.0, 0.0, math.pi)
        np.testing.assert_allclose(p.transform_points([[1.0, 0.0]]), [[0.0, 0.0]], atol=1e-12)

class SequenceTest(unittest.TestCase):
    geometry = heatmap.SensorGeometry(100, 5, 16, 16)

    def create_sequence(self, timestamps):
        return heatmap.FrameSequence(tuple(
            heatmap.Frame(t, heatmap.Heatmap.zeros(self.geometry), heatmap.Pose2D(t, 0.0, 0.0)) for t in timestamps
        ))

    def test_timestamps_must_increase(self):
        with self.assertRaises(DataException):
            self.create_sequence([0.0, 0.0])
        with self.assertRaises(DataException):
            heatmap.Trajectory.from_lists([1.0, 0.5], [heatmap.Pose2D(), heatmap.Pose2D()])

    def test_mixed_geometry_rejected(self):
        other = heatmap.SensorGeometry(100, 5, 8, 8)
        with self.assertRaises(GeometryMismatchException):
            heatmap.FrameSequence((
                heatmap.Frame(0.0, heatmap.Heatmap.zeros(self.geometry), heatmap.Pose2D()),
                heatmap.Frame(0.1, heatmap.Heatmap.zeros(other), heatmap.Pose2D()),
            ))

    def test_trajectory_and_with_heatmaps(self):
        seq = self.create_sequence([0.0, 0.1, 0.2])
        self.assertAlmostEqual(seq.trajectory().path_length(), 0.2)
        ones = [heatmap.Heatmap(self.geometry, np.ones((16, 16)))] * 3
        replaced = seq.with_heatmaps(ones, "fused")
        self.assertEqual(replaced.modality_label, "fused")
        self.assertEqual(replaced.timestamps, seq.timestamps)
        with self.assertRaises(DataException):
            seq.with_heatmaps(ones[:2])

class PolarToCartTest(unittest.TestCase):
    geometry = heatmap.SensorGeometry(100, 5, 10, 10)

    def create_impulse(self, row, col):
        values = np.zeros((10, 10))
        values[row, col] = 1.0
        return heatmap.Heatmap(self.geometry, values)

    def test_empty_heatmap(self):
        points = heatmap.polar_to_cart(heatmap.Heatmap.zeros(self.geometry), heatmap.Pose2D())
        self.assertEqual(points.shape, (0, 2))

    def test_single_cell(self):
        # row 4 is centred at 2.25 m, columns 4 and 5 straddle the boresight
        points = heatmap.polar_to_cart(self.create_impulse(4, 5), heatmap.Pose2D())
        expected = 2.25 * np.array([math.cos(math.radians(5)), math.sin(math.radians(5))])
        np.testing.assert_allclose(points, [expected], atol=1e-12)

    def test_rotation_invariance_of_distance(self):
        h = self.create_impulse(6, 2)
        a = heatmap.polar_to_cart(h, heatmap.Pose2D(1.0, 1.0, 0.0))
        b = heatmap.polar_to_cart(h, heatmap.Pose2D(1.0, 1.0, 2.0))
        self.assertAlmostEqual(np.linalg.norm(a - [1, 1]), np.linalg.norm(b - [1, 1]))

    def test_quarter_turn(self):
        h = self.create_impulse(9, 5)
        ahead = heatmap.polar_to_cart(h, heatmap.Pose2D())
        np.testing.assert_allclose(ahead, [[4.75 * math.cos(math.radians(5)), 4.75 * math.sin(math.radians(5))]],
                                   atol=1e-12)
        turned = heatmap.polar_to_cart(h, heatmap.Pose2D(0.0, 0.0, math.pi / 2))
        np.testing.assert_allclose(turned, [[-ahead[0, 1], ahead[0, 0]]], atol=1e-9)

    def test_rigid_motion_equivariance(self):
        values = np.zeros((10, 10))
        values[[1, 4, 9], [0, 7, 3]] = [0.6, 1.0, 0.8]
        h = heatmap.Heatmap(self.geometry, values)
        pose = heatmap.Pose2D(0.5, -1.0, 0.3)
        motion = heatmap.Pose2D(2.0, 3.0, -1.1)
        moved = heatmap.polar_to_cart(h, motion.compose(pose))
        expected = motion.transform_points(heatmap.polar_to_cart(h, pose))
        self.assertEqual(moved.shape, (3, 2))
        np.testing.assert_allclose(moved, expected, atol=1e-9)

    def test_threshold_range(self):
        with self.assertRaises(ConfigException):
            heatmap.polar_to_cart(self.create_impulse(0, 0), heatmap.Pose2D(), threshold=1.5)

class HelpersTest(unittest.TestCase):
    geometry = heatmap.SensorGeometry(100, 5, 8, 8)

    def test_mse(self):
        a = heatmap.Heatmap.zeros(self.geometry)
        b = heatmap.Heatmap(self.geometry, np.full((8, 8), 0.5))
        self.assertAlmostEqual(heatmap.heatmap_mse(a, b), 0.25)
        self.assertEqual(heatmap.heatmap_mse(a, a), 0.0)

    def test_translate(self):
        values = np.zeros((8, 8))
        values[2, 3] = 1.0
        moved = heatmap.translate(values, 2, -1)
        self.assertEqual(moved[4, 2], 1.0)
        self.assertEqual(moved.sum(), 1.0)
        self.assertEqual(heatmap.translate(values, 10, 0).sum(), 0.0)
