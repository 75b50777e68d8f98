'''
Evaluation metrics: PSNR, Lucas-Kanade grid tracking, the motion-feature
Frechet distance, correlation-peak distance, absolute positional error and
occupancy-map IoU.

@author: tempo-bench developers
'''
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import linalg, ndimage

from tempo_bench.correlation import CORRELATION_METHODS, correlate_arrays, peak_displacement, xcorr2
from tempo_bench.exceptions import ConfigException, DataException, InsufficientDataException
from tempo_bench.fusion import DEFAULT_POOLED_SHAPE, cosine_sim, embed
from tempo_bench.heatmap import FrameSequence, Heatmap, Trajectory, check_same_geometry, heatmap_mse, polar_to_cart

HISTOGRAM_BINS = 8
MAX_MAGNITUDE = 4.0
MIN_EIGENVALUE = 1e-6
COVARIANCE_REGULARIZER = 1e-6

@dataclass(frozen=True)
class MetricConfig(object):
    psnr_cap: float = 100.0
    track_spacing: int = 8
    window_radius: int = 4
    window_len: int = 8
    stride: int = 4
    lk_iterations: int = 1
    map_resolution: float = 0.05
    map_threshold: float = 0.5
    embedding_shape: Tuple[int, int] = DEFAULT_POOLED_SHAPE
    method: str = "fft"
    subpixel: bool = True

    def __post_init__(self):
        if not self.psnr_cap > 0:
            raise ConfigException("psnr_cap must be positive, got %r" % self.psnr_cap)
        if self.track_spacing < 1 or self.window_radius < 1 or self.stride < 1:
            raise ConfigException("track_spacing, window_radius and stride must be at least 1")
        if self.window_len < 3:
            raise ConfigException("window_len must be at least 3, got %r" % self.window_len)
        if self.lk_iterations < 1:
            raise ConfigException("lk_iterations must be at least 1, got %r" % self.lk_iterations)
        if not self.map_resolution > 0:
            raise ConfigException("map_resolution must be positive, got %r" % self.map_resolution)
        if not 0 <= self.map_threshold <= 1:
            raise ConfigException("map_threshold must be in [0, 1], got %r" % self.map_threshold)
        if self.method not in CORRELATION_METHODS:
            raise ConfigException("unknown correlation method %r" % self.method)
        object.__setattr__(self, "embedding_shape", tuple(int(s) for s in self.embedding_shape))

def psnr(pred: Heatmap, truth: Heatmap, cap=100.0) -> float:
    if not cap > 0:
        raise ConfigException("PSNR cap must be positive, got %r" % cap)
    mse = heatmap_mse(pred, truth)
    if mse == 0:
        return float(cap)
    return float(min(cap, 10.0 * math.log10(1.0 / mse)))

def _lk_solve(grad_r, grad_c, a, b, point, window_radius, iterations):
    r, c = point
    window = (slice(r - window_radius, r + window_radius + 1), slice(c - window_radius, c + window_radius + 1))
    gr, gc = grad_r[window].ravel(), grad_c[window].ravel()
    system = np.array([[gr @ gr, gr @ gc], [gr @ gc, gc @ gc]])
    if linalg.eigvalsh(system)[0] < MIN_EIGENVALUE:
        return np.zeros(2), False

    rows, cols = np.mgrid[window]
    template = a[window]
    flow = np.zeros(2)
    for _ in range(iterations):
        warped = ndimage.map_coordinates(b, [rows + flow[0], cols + flow[1]], order=1, mode="nearest")
        diff = (warped - template).ravel()
        flow = flow + linalg.solve(system, -np.array([gr @ diff, gc @ diff]), assume_a="sym")
    if not np.all(np.isfinite(flow)):
        return np.zeros(2), False
    return flow, True

def _inside(point, shape, margin):
    r, c = point
    return margin <= r < shape[0] - margin and margin <= c < shape[1] - margin

def lk_flow(a: Heatmap, b: Heatmap, point, window_radius=4, iterations=1):
    """
    Lucas-Kanade flow at ``point`` (row, col) from ``a`` to ``b``.

    Returns ``(flow, valid)``; ``valid`` is False when the structure tensor
    over the window is degenerate.
    """
    check_same_geometry(a, b)
    point = (int(point[0]), int(point[1]))
    if not _inside(point, a.shape, window_radius):
        raise DataException("point %r is closer than %d bins to the border" % (point, window_radius))
    values = a.as_float()
    grad_r, grad_c = np.gradient(values)
    return _lk_solve(grad_r, grad_c, values, b.as_float(), point, window_radius, iterations)

@dataclass(frozen=True, eq=False)
class PointTrack(object):
    start: Tuple[int, int]
    positions: np.ndarray
    valid: np.ndarray

    def velocities(self):
        return np.diff(self.positions, axis=0)

def track_grid(seq: FrameSequence, spacing=8, window_radius=4, iterations=1) -> List[PointTrack]:
    if spacing < 1:
        raise ConfigException("track spacing must be at least 1, got %r" % spacing)
    if not len(seq):
        return []
    shape = seq.geometry.shape
    seeds = [(r, c) for r in range(window_radius, shape[0] - window_radius, spacing)
             for c in range(window_radius, shape[1] - window_radius, spacing)]
    n = len(seq)
    positions = np.zeros((len(seeds), n, 2))
    valid = np.zeros((len(seeds), n), dtype=bool)
    positions[:, 0] = seeds
    valid[:, 0] = True

    frames = [h.as_float() for h in seq.heatmaps]
    for t in range(1, n):
        grad_r, grad_c = np.gradient(frames[t - 1])
        for i in range(len(seeds)):
            positions[i, t] = positions[i, t - 1]
            if not valid[i, t - 1]:
                continue
            point = tuple(int(v) for v in np.rint(positions[i, t - 1]))
            if not _inside(point, shape, window_radius):
                continue
            flow, ok = _lk_solve(grad_r, grad_c, frames[t - 1], frames[t], point, window_radius, iterations)
            moved = positions[i, t - 1] + flow
            if ok and 0 <= moved[0] <= shape[0] - 1 and 0 <= moved[1] <= shape[1] - 1:
                positions[i, t] = moved
                valid[i, t] = True
    return [PointTrack(seed, positions[i], valid[i]) for i, seed in enumerate(seeds)]

@dataclass(frozen=True, eq=False)
class MotionFeature(object):
    """Velocity magnitude, velocity angle, acceleration magnitude and acceleration angle histograms."""
    values: np.ndarray

def _histograms(vectors):
    if not len(vectors):
        return np.zeros(2 * HISTOGRAM_BINS)
    magnitude = np.hypot(vectors[:, 0], vectors[:, 1])
    magnitude_bins = np.minimum((magnitude / (MAX_MAGNITUDE / HISTOGRAM_BINS)).astype(int), HISTOGRAM_BINS - 1)
    angle = np.arctan2(vectors[:, 0], vectors[:, 1])
    angle_bins = np.clip(np.ceil((angle + np.pi) / (2 * np.pi / HISTOGRAM_BINS)).astype(int) - 1,
                         0, HISTOGRAM_BINS - 1)
    return np.concatenate([
        np.bincount(magnitude_bins, minlength=HISTOGRAM_BINS) / len(vectors),
        np.bincount(angle_bins, minlength=HISTOGRAM_BINS) / len(vectors),
    ])

def motion_features(tracks: Sequence[PointTrack], window_len=8, stride=4) -> List[MotionFeature]:
    if window_len < 3:
        raise ConfigException("motion windows need at least 3 frames, got %r" % window_len)
    if stride < 1:
        raise ConfigException("stride must be at least 1, got %r" % stride)
    if not tracks:
        return []
    positions = np.stack([t.positions for t in tracks])
    valid = np.stack([t.valid for t in tracks])
    velocity = np.diff(positions, axis=1)
    velocity_ok = valid[:, 1:] & valid[:, :-1]
    acceleration = np.diff(velocity, axis=1)
    acceleration_ok = velocity_ok[:, 1:] & velocity_ok[:, :-1]

    features = []
    for start in range(0, positions.shape[1] - window_len + 1, stride):
        v_slice = slice(start, start + window_len - 1)
        a_slice = slice(start, start + window_len - 2)
        v = velocity[:, v_slice][velocity_ok[:, v_slice]]
        if not len(v):
            continue
        a = acceleration[:, a_slice][acceleration_ok[:, a_slice]]
        features.append(MotionFeature(np.concatenate([_histograms(v), _histograms(a)])))
    return features

def _sqrtm_psd(m):
    w, v = linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T

def _check_covariance(cov):
    if not np.all(np.isfinite(cov)) or not np.allclose(cov, cov.T, atol=1e-9):
        raise DataException("covariance must be finite and symmetric")

def gaussian_frechet(mu1, cov1, mu2, cov2) -> float:
    mu1, mu2 = np.atleast_1d(np.asarray(mu1, dtype=np.float64)), np.atleast_1d(np.asarray(mu2, dtype=np.float64))
    cov1, cov2 = np.atleast_2d(np.asarray(cov1, dtype=np.float64)), np.atleast_2d(np.asarray(cov2, dtype=np.float64))
    if mu1.shape != mu2.shape or cov1.shape != cov2.shape or cov1.shape != (mu1.size, mu1.size):
        raise DataException("Gaussian parameters have inconsistent shapes")
    _check_covariance(cov1)
    _check_covariance(cov2)

    root1 = _sqrtm_psd(cov1)
    middle = root1 @ cov2 @ root1
    covmean = _sqrtm_psd((middle + middle.T) / 2.0)
    diff = mu1 - mu2
    distance = diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * np.trace(covmean)
    return float(max(0.0, distance))

def _feature_gaussian(features, side):
    if len(features) < 2:
        raise InsufficientDataException("%s sequence yields %d motion windows, need at least 2" % (side, len(features)))
    x = np.stack([f.values for f in features])
    cov = np.cov(x, rowvar=False) + COVARIANCE_REGULARIZER * np.eye(x.shape[1])
    return x.mean(axis=0), cov

def fvmd(pred: FrameSequence, ref: FrameSequence, cfg: MetricConfig = None) -> float:
    cfg = cfg or MetricConfig()
    for side, seq in (("predicted", pred), ("reference", ref)):
        if len(seq) < cfg.window_len + 2:
            raise InsufficientDataException("%s sequence has %d frames, FVMD needs at least %d"
                                            % (side, len(seq), cfg.window_len + 2))
    gaussians = []
    for side, seq in (("predicted", pred), ("reference", ref)):
        tracks = track_grid(seq, cfg.track_spacing, cfg.window_radius, cfg.lk_iterations)
        gaussians.append(_feature_gaussian(motion_features(tracks, cfg.window_len, cfg.stride), side))
    (mu1, cov1), (mu2, cov2) = gaussians
    return gaussian_frechet(mu1, cov1, mu2, cov2)

def _check_aligned(pred: FrameSequence, ref: FrameSequence, minimum):
    if len(pred) != len(ref):
        raise DataException("sequences differ in length (%d vs %d)" % (len(pred), len(ref)))
    if len(pred) < minimum:
        raise InsufficientDataException("need at least %d frames, got %d" % (minimum, len(pred)))
    check_same_geometry(pred[0].heatmap, ref[0].heatmap)

def peak_distance_metric(pred: FrameSequence, ref: FrameSequence, method="fft") -> float:
    _check_aligned(pred, ref, 2)

    def peaks(seq):
        heatmaps = seq.heatmaps
        return np.array([peak_displacement(xcorr2(current, previous, method)).as_array()
                         for previous, current in zip(heatmaps[:-1], heatmaps[1:])])

    return float(np.linalg.norm(peaks(pred) - peaks(ref), axis=1).mean())

def embedding_similarity(pred: FrameSequence, ref: FrameSequence, pooled_shape=DEFAULT_POOLED_SHAPE) -> float:
    """Mean per-frame cosine similarity of proxy embeddings."""
    _check_aligned(pred, ref, 1)
    return float(np.mean([cosine_sim(embed(p.heatmap, pooled_shape), embed(r.heatmap, pooled_shape))
                          for p, r in zip(pred, ref)]))

@dataclass(frozen=True)
class ApeReport(object):
    rmse: float
    mean: float
    std: float
    max: float

    def to_dict(self):
        return {"rmse": self.rmse, "mean": self.mean, "std": self.std, "max": self.max}

def _check_timestamps(a, b, what):
    if len(a) != len(b):
        raise DataException("%s: lengths differ (%d vs %d)" % (what, len(a), len(b)))
    if not np.allclose(a, b, rtol=0, atol=1e-9):
        raise DataException("%s: timestamps do not match" % what)

def ape(est: Trajectory, gt: Trajectory) -> ApeReport:
    if not len(gt):
        raise InsufficientDataException("cannot compute APE of an empty trajectory")
    _check_timestamps(est.timestamps, gt.timestamps, "APE")
    errors = np.linalg.norm(est.positions() - gt.positions(), axis=1)
    return ApeReport(
        rmse=float(np.sqrt(np.mean(errors ** 2))),
        mean=float(errors.mean()),
        std=float(errors.std()),
        max=float(errors.max()),
    )

@dataclass(frozen=True, eq=False)
class OccupancyGrid(object):
    """
    Boolean occupancy on a world-aligned lattice: ``cells[i, j]`` covers
    ``[origin + (i, j) * resolution, origin + (i + 1, j + 1) * resolution)``.
    """
    resolution: float
    origin: Tuple[float, float]
    cells: np.ndarray

    def __post_init__(self):
        if not self.resolution > 0:
            raise ConfigException("grid resolution must be positive, got %r" % self.resolution)
        cells = np.array(self.cells, dtype=bool)
        if cells.ndim != 2:
            raise DataException("occupancy cells must be 2D")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def empty(cls, resolution):
        return cls(resolution, (0.0, 0.0), np.zeros((0, 0), dtype=bool))

    @property
    def occupied(self):
        return int(self.cells.sum())

    def lattice_offset(self):
        return np.rint(np.array(self.origin) / self.resolution).astype(int)

    def occupied_indices(self):
        """Occupied cells as absolute lattice indices."""
        return np.argwhere(self.cells) + self.lattice_offset()

def rasterize_map(seq: FrameSequence, traj: Trajectory, resolution=0.05, threshold=0.5) -> OccupancyGrid:
    if not resolution > 0:
        raise ConfigException("map resolution must be positive, got %r" % resolution)
    _check_timestamps(seq.timestamps, traj.timestamps, "rasterize_map")
    points = [polar_to_cart(f.heatmap, pose, threshold) for f, (_, pose) in zip(seq, traj)]
    points = np.concatenate(points) if points else np.zeros((0, 2))
    if not len(points):
        return OccupancyGrid.empty(resolution)
    indices = np.floor(points / resolution).astype(int)
    low = indices.min(axis=0)
    indices -= low
    cells = np.zeros(indices.max(axis=0) + 1, dtype=bool)
    cells[indices[:, 0], indices[:, 1]] = True
    return OccupancyGrid(resolution, tuple(low * resolution), cells)

def _to_set(indices):
    return set(map(tuple, indices.tolist()))

def map_iou(a: OccupancyGrid, b: OccupancyGrid, max_shift=None) -> float:
    """
    IoU of occupied cells after translating ``b`` onto ``a`` by the argmax
    of their binary cross-correlation. ``max_shift`` limits the search in
    cells per axis.
    """
    if not math.isclose(a.resolution, b.resolution, rel_tol=1e-9):
        raise DataException("occupancy grids differ in resolution (%r vs %r)" % (a.resolution, b.resolution))
    cells_a, cells_b = a.occupied_indices(), b.occupied_indices()
    if not len(cells_a) and not len(cells_b):
        return 1.0
    if not len(cells_a) or not len(cells_b):
        return 0.0

    low = np.minimum(cells_a.min(axis=0), cells_b.min(axis=0))
    shape = tuple(np.maximum(cells_a.max(axis=0), cells_b.max(axis=0)) - low + 1)
    canvas_a, canvas_b = np.zeros(shape), np.zeros(shape)
    canvas_a[tuple((cells_a - low).T)] = 1.0
    canvas_b[tuple((cells_b - low).T)] = 1.0

    correlation = correlate_arrays(canvas_a, canvas_b, method="fft")
    if max_shift is not None:
        center = np.array(correlation.shape) // 2
        rows, cols = np.ogrid[:correlation.shape[0], :correlation.shape[1]]
        outside = (np.abs(rows - center[0]) > max_shift) | (np.abs(cols - center[1]) > max_shift)
        correlation = np.where(outside, -1.0, correlation)
    d = peak_displacement(correlation)
    shift = np.array([int(round(d.d_range)), int(round(d.d_azimuth))])

    set_a = _to_set(cells_a)
    set_b = _to_set(cells_b - shift)
    return len(set_a & set_b) / len(set_a | set_b)
