'''
@author: tempo-bench developers
'''
import math
import unittest

import numpy as np

from tempo_bench import correlation, simulator
from tempo_bench.exceptions import ConfigException, DataException, GeometryMismatchException
from tempo_bench.heatmap import Frame, FrameSequence, Heatmap, Pose2D, SensorGeometry, translate
from tempo_bench.metrics import ape

class XcorrTest(unittest.TestCase):
    geometry = SensorGeometry(100, 5, 16, 16)

    def create_impulse(self, row, col, value=1.0):
        values = np.zeros((16, 16))
        values[row, col] = value
        return Heatmap(self.geometry, values)

    def test_impulse_at_center(self):
        h = self.create_impulse(8, 8)
        c = correlation.xcorr2(h, h)
        self.assertEqual(c.shape, (31, 31))
        d = correlation.peak_displacement(c)
        self.assertEqual((d.d_range, d.d_azimuth), (0.0, 0.0))

    def test_shift_is_recovered(self):
        a = self.create_impulse(5, 6)
        for v in [(2, 0), (0, -3), (-4, 5)]:
            b = Heatmap(self.geometry, translate(a.values, *v))
            d = correlation.peak_displacement(correlation.xcorr2(a, b))
            self.assertEqual((d.d_range, d.d_azimuth), v)

    def test_fft_matches_direct(self):
        rng = np.random.default_rng(0)
        geometry = SensorGeometry(100, 5, 48, 48)
        for _ in range(100):
            a = Heatmap(geometry, rng.random((48, 48)))
            b = Heatmap(geometry, rng.random((48, 48)))
            direct = correlation.xcorr2(a, b, method="direct").values
            fft = correlation.xcorr2(a, b, method="fft").values
            np.testing.assert_allclose(fft, direct, rtol=1e-6, atol=1e-6 * np.abs(direct).max())

    def test_all_zero_maps(self):
        z = Heatmap.zeros(self.geometry)
        c = correlation.xcorr2(z, z)
        self.assertEqual(np.abs(c.values).max(), 0.0)
        d = correlation.peak_displacement(c)
        self.assertEqual((d.d_range, d.d_azimuth), (0.0, 0.0))

    def test_geometry_mismatch(self):
        other = Heatmap.zeros(SensorGeometry(100, 5, 8, 8))
        with self.assertRaises(GeometryMismatchException):
            correlation.xcorr2(self.create_impulse(0, 0), other)

    def test_unknown_method(self):
        h = self.create_impulse(0, 0)
        with self.assertRaises(ConfigException):
            correlation.xcorr2(h, h, method="wavelet")

    def test_even_map_rejected(self):
        with self.assertRaises(DataException):
            correlation.CorrMap(np.zeros((4, 5)))

class SoftmaxTest(unittest.TestCase):
    def test_uniform(self):
        p = correlation.sep_softmax(np.zeros((3, 3)))
        np.testing.assert_allclose(p.values, np.full((3, 3), 1 / 9))

    def test_two_by_two(self):
        p = correlation.sep_softmax(np.array([[0.0, 0.0], [0.0, math.log(3)]]))
        # row softmax and column softmax both give 3/4 at the peak
        raw =np.array([[0.5 * 0.5, 0.25 * 0.5], [0.5 * 0.25, 0.75 * 0.75]])
        np.testing.assert_allclose(p.values, raw / raw.sum(), atol=1e-12)
        self.assertAlmostEqual(p.values.sum(), 1.0)
        self.assertEqual(int(np.argmax(p.values)), 3)

    def test_temperature_sharpens(self):
        c = correlation.CorrMap(np.arange(9, dtype=float).reshape(3, 3))
        self.assertGreater(correlation.sep_softmax(c, 0.1).values.max(), correlation.sep_softmax(c, 10).values.max())
        with self.assertRaises(ConfigException):
            correlation.sep_softmax(c, 0)

    def test_large_values_stay_finite(self):
        p = correlation.sep_softmax(np.array([[1e6, 0.0, 0.0]] * 3))
        self.assertTrue(np.all(np.isfinite(p.values)))

class KlTest(unittest.TestCase):
    def test_identical(self):
        p = correlation.sep_softmax(np.arange(9, dtype=float).reshape(3, 3))
        self.assertAlmostEqual(correlation.kl_div(p, p), 0.0, places=9)

    def test_known_value(self):
        p = np.array([0.5, 0.5])
        q = np.array([0.25, 0.75])
        expected = 0.5 * math.log(2) + 0.5 * math.log(2 / 3)
        self.assertAlmostEqual(correlation.kl_div(p, q), expected, places=9)

    def test_zero_support(self):
        self.assertTrue(math.isfinite(correlation.kl_div(np.array([1.0, 0.0]), np.array([0.0, 1.0]))))

class TransformLossTest(unittest.TestCase):
    geometry = SensorGeometry(100, 5, 16, 16)

    def create_impulse(self, row, col):
        values = np.zeros((16, 16))
        values[row, col] = 1.0
        return Heatmap(self.geometry, values)

    def test_zero_when_prediction_equals_truth(self):
        l_prev, l_t = self.create_impulse(8, 8), self.create_impulse(9, 7)
        self.assertAlmostEqual(correlation.transform_loss(l_t, l_prev, l_t, l_prev), 0.0, delta=1e-9)

    def test_positive_under_jitter(self):
        l_prev, l_t = self.create_impulse(8, 8), self.create_impulse(8, 8)
        p_t = self.create_impulse(10, 8)
        self.assertGreater(correlation.transform_loss(p_t, l_prev, l_t, l_prev), 0.0)

    def test_never_negative(self):
        rng = np.random.default_rng(1)
        maps = [Heatmap(self.geometry, rng.random((16, 16))) for _ in range(4)]
        self.assertGreaterEqual(correlation.transform_loss(*maps), 0.0)

class PeakTest(unittest.TestCase):
    def test_tie_prefers_smallest_displacement(self):
        c = np.zeros((5, 5))
        c[0, 0] = c[2, 3] = c[4, 2] = 1.0
        d = correlation.peak_displacement(c)
        self.assertEqual((d.d_range, d.d_azimuth), (0.0, 1.0))

    def test_tie_orders_by_range_then_azimuth(self):
        c = np.zeros((5, 5))
        c[3, 2] = c[1, 2] = 1.0
        d = correlation.peak_displacement(c)
        self.assertEqual((d.d_range, d.d_azimuth), (-1.0, 0.0))

    def test_subpixel(self):
        c = np.zeros((5, 5))
        c[2, 2] = 1.0
        c[3, 2] = 0.5
        d = correlation.peak_displacement(c, subpixel=True)
        # parabola through (-1, 0), (0, 1), (1, 0.5)
        self.assertAlmostEqual(d.d_range, 0.5 * (0 - 0.5) / (0 - 2 + 0.5))
        self.assertEqual(d.d_azimuth, 0.0)

    def test_subpixel_symmetric_peak(self):
        c = np.zeros((5, 5))
        c[2, 2] = 1.0
        c[1, 2] = c[3, 2] = 0.5
        d = correlation.peak_displacement(c, subpixel=True)
        self.assertEqual(d.d_range, 0.0)

class ScanMatcherTest(unittest.TestCase):
    geometry = SensorGeometry(100, 5, 50, 64)

    def create_static_sequence(self, n=5):
        world = simulator.build_world("corridor")
        h = simulator.render_lidar(world, world.start, self.geometry)
        return FrameSequence(tuple(Frame(i * 0.1, h, world.start) for i in range(n)))

    def test_static_sequence(self):
        seq = self.create_static_sequence()
        traj = correlation.scan_match_sequence(seq)
        for _, pose in traj:
            self.assertEqual(pose, seq[0].pose)

    def test_too_short(self):
        with self.assertRaises(DataException):
            correlation.scan_match_sequence(self.create_static_sequence(1))

    def test_motion_mapping(self):
        matcher = correlation.CorrelationScanMatcher()
        motion = matcher.motion(correlation.Displacement(2.0, -1.0), self.geometry)
        self.assertAlmostEqual(motion.x, 2 * 5 / 50)
        self.assertAlmostEqual(motion.theta, -math.radians(100) / 64)

    def test_corridor_run(self):
        # 0.1 m per frame is exactly one range bin at 5 m / 50 bins
        world = simulator.build_world("corridor")
        traj = simulator.simulate_trajectory(world, simulator.TrajectoryConfig(n_frames=100, speed=1.0, dt=0.1))
        seq = simulator.render_sequence(world, traj, self.geometry)
        estimated = correlation.scan_match_sequence(seq)
        self.assertEqual(len(estimated), len(seq))
        self.assertEqual(list(estimated)[0][1], seq[0].pose)
        self.assertLess(ape(estimated, traj).mean, 0.1 * traj.path_length())
        self.assertLess(abs(estimated.path_length() - traj.path_length()), 0.15 * traj.path_length())

    def test_rotation_direction(self):
        world = simulator.World("wall", [(3.0, -1.0, 3.0, 1.0), (2.0, 1.5, 2.5, 2.0)], (-5, -5, 5, 5), Pose2D())
        step = 2 * self.geometry.azimuth_resolution
        frames = tuple(
            Frame(i * 0.1, simulator.render_lidar(world, Pose2D(0, 0, i * step), self.geometry), Pose2D(0, 0, i * step))
            for i in range(3)
        )
        estimated = correlation.scan_match_sequence(FrameSequence(frames), subpixel=False)
        self.assertGreater(list(estimated)[-1][1].theta, 0.0)
