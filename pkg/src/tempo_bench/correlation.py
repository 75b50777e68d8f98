'''
Cross-correlation engine, separable softmax, KL divergence, the
transformation-consistency loss and the correlation scan matcher.

Correlation convention: ``C[center + d] = sum_i a[i] * b[i + d]``, fully
zero-padded, so the peak sits at the displacement ``d`` that carries ``a``
onto ``b`` (``b = shift(a, d)`` peaks at ``d``).

@author: tempo-bench developers
'''
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal, special

from tempo_bench.exceptions import ConfigException, DataException, GeometryMismatchException
from tempo_bench.heatmap import FrameSequence, Heatmap, Pose2D, SensorGeometry, Trajectory, check_same_geometry

KL_EPSILON = 1e-12
TIE_TOLERANCE = 1e-9
CORRELATION_METHODS = ("direct", "fft")

@dataclass(frozen=True, eq=False)
class CorrMap(object):
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] % 2 == 0 or values.shape[1] % 2 == 0:
            raise DataException("correlation map must be 2D with odd dimensions, got %r" % (values.shape,))
        if not np.all(np.isfinite(values)):
            raise DataException("correlation map contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def center(self):
        return (self.values.shape[0] // 2, self.values.shape[1] // 2)

    @property
    def shape(self):
        return self.values.shape

@dataclass(frozen=True, eq=False)
class ProbMap(object):
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DataException("probability map entries must be finite and non-negative")
        if abs(values.sum() - 1.0) > 1e-9:
            raise DataException("probability map must sum to 1, sums to %r" % values.sum())
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

@dataclass(frozen=True)
class Displacement(object):
    d_range: float
    d_azimuth: float

    def magnitude(self):
        return math.hypot(self.d_range, self.d_azimuth)

    def as_array(self):
        return np.array([self.d_range, self.d_azimuth])

def _values(x):
    return x.values if hasattr(x, "values") else np.asarray(x, dtype=np.float64)

def correlate_arrays(a, b, method="fft"):
    """Full zero-padded correlation of two equally shaped arrays under the module convention."""
    if method not in CORRELATION_METHODS:
        raise ConfigException("unknown correlation method %r, expected one of %s"
                              % (method, ", ".join(CORRELATION_METHODS)))
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise GeometryMismatchException("cannot correlate arrays of shape %r and %r" % (a.shape, b.shape))
    # scipy's correlate(b, a) puts sum_i b[i + d] * a[i] at center + d
    return signal.correlate(b, a, mode="full", method=method)

def xcorr2(a: Heatmap, b: Heatmap, method="fft") -> CorrMap:
    check_same_geometry(a, b)
    return CorrMap(correlate_arrays(a.values, b.values, method))

def sep_softmax(c, temperature=1.0) -> ProbMap:
    if not temperature > 0:
        raise ConfigException("softmax temperature must be positive, got %r" % temperature)
    z = _values(c) / temperature
    product = special.softmax(z, axis=0) * special.softmax(z, axis=1)
    return ProbMap(product / product.sum())

def kl_div(p, q) -> float:
    p = _values(p)
    q = _values(q)
    if p.shape != q.shape:
        raise DataException("KL divergence needs equal shapes, got %r and %r" % (p.shape, q.shape))
    return float(special.rel_entr(p, q + KL_EPSILON).sum())

def transform_loss(p_t: Heatmap, p_prev: Heatmap, l_t: Heatmap, l_prev: Heatmap,
                   temperature=1.0, method="fft") -> float:
    check_same_geometry(p_t, p_prev, l_t, l_prev)
    q_l = sep_softmax(xcorr2(l_t, l_prev, method), temperature)
    return transform_loss_against(p_t, p_prev, q_l, temperature, method)

def transform_loss_against(p_t: Heatmap, p_prev: Heatmap, q_l: ProbMap, temperature=1.0, method="fft"):
    """Transformation-consistency loss against a precomputed ground-truth displacement distribution."""
    q_p = sep_softmax(xcorr2(p_t, p_prev, method), temperature)
    return max(0.0, kl_div(q_l, q_p))

def _refine(v_minus, v_peak, v_plus):
    denom = v_minus - 2.0 * v_peak + v_plus
    if denom >= 0:
        return 0.0
    if abs(v_minus - v_plus) <= TIE_TOLERANCE * max(abs(v_minus), abs(v_plus), abs(v_peak)):
        return 0.0
    return float(np.clip(0.5 * (v_minus - v_plus) / denom, -0.5, 0.5))

def peak_displacement(c, subpixel=False) -> Displacement:
    values = _values(c)
    peak = values.max()
    if not np.isfinite(peak):
        raise DataException("correlation map has no finite maximum")
    center = np.array(values.shape) // 2
    tolerance = TIE_TOLERANCE * max(np.abs(values).max(), 1e-300)
    candidates = np.argwhere(values >= peak - tolerance)
    offsets = candidates - center
    order = np.lexsort((offsets[:, 1], offsets[:, 0], (offsets ** 2).sum(axis=1)))
    row, col = candidates[order[0]]
    d_range, d_azimuth = float(row - center[0]), float(col - center[1])

    if subpixel:
        if 0 < row < values.shape[0] - 1:
            d_range += _refine(values[row - 1, col], values[row, col], values[row + 1, col])
        if 0 < col < values.shape[1] - 1:
            d_azimuth += _refine(values[row, col - 1], values[row, col], values[row, col + 1])
    return Displacement(d_range, d_azimuth)

class CorrelationScanMatcher(object):
    """
    Estimates robot motion from consecutive heatmaps.

    A range displacement of ``d`` bins reads as ``d * max_range / H`` metres
    of forward travel and an azimuth displacement as ``d * fov / W`` radians
    of heading change; poses are integrated in SE(2) from the first
    ground-truth pose of the sequence.
    """

    def __init__(self, geometry: SensorGeometry = None, subpixel=True, method="fft"):
        super(CorrelationScanMatcher, self).__init__()
        self.logger = logging.getLogger(self.__class__.__name__)

        self.geometry = geometry
        self.subpixel = subpixel
        self.method = method

    def displacements(self, seq: FrameSequence):
        heatmaps = seq.heatmaps
        return [
            peak_displacement(xcorr2(current, previous, self.method), self.subpixel)
            for previous, current in zip(heatmaps[:-1], heatmaps[1:])
        ]

    def motion(self, d: Displacement, geometry: SensorGeometry) -> Pose2D:
        return Pose2D(d.d_range * geometry.range_resolution, 0.0, d.d_azimuth * geometry.azimuth_resolution)

    def match(self, seq: FrameSequence) -> Trajectory:
        if len(seq) < 2:
            raise DataException("scan matching needs at least 2 frames, got %d" % len(seq))
        geometry = self.geometry or seq.geometry
        if geometry.shape != seq.geometry.shape:
            raise GeometryMismatchException("matcher geometry %r does not fit the sequence" % (geometry,))

        pose = seq[0].pose
        poses = [pose]
        for i, d in enumerate(self.displacements(seq), start=1):
            self.logger.debug("Pair %d: displacement (%.3f, %.3f) bins", i, d.d_range, d.d_azimuth)
            pose = pose.compose(self.motion(d, geometry))
            poses.append(pose)
        return Trajectory.from_lists(seq.timestamps, poses)

def scan_match_sequence(seq: FrameSequence, geom: SensorGeometry = None, subpixel=True, method="fft") -> Trajectory:
    return CorrelationScanMatcher(geom, subpixel, method).match(seq)
