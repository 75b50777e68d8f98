'''
Grid, pose and sequence types shared by every stage of the workbench.

Rows of a heatmap index range bins, columns index azimuth bins. Bin centres
are used for every geometric conversion: range ``(row + 0.5) * max_range / H``
and azimuth ``-fov / 2 + (col + 0.5) * fov / W``.

@author: tempo-bench developers
'''
import math
from dataclasses import dataclass
from typing import Iterator, Sequence, Tuple

import numpy as np
from scipy import ndimage

from tempo_bench.exceptions import ConfigException, DataException, GeometryMismatchException

def _readonly(array, dtype):
    a = np.array(array, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a

@dataclass(frozen=True)
class SensorGeometry(object):
    azimuth_fov: float = 100.0
    max_range: float = 5.0
    n_range_bins: int = 64
    n_azimuth_bins: int = 64

    def __post_init__(self):
        if not 0 < self.azimuth_fov <= 360:
            raise ConfigException("azimuth_fov must be in (0, 360], got %r" % self.azimuth_fov)
        if not self.max_range > 0:
            raise ConfigException("max_range must be positive, got %r" % self.max_range)
        if self.n_range_bins < 8 or self.n_azimuth_bins < 8:
            raise ConfigException(
                "heatmap must be at least 8x8 bins, got %dx%d" % (self.n_range_bins, self.n_azimuth_bins)
            )

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_range_bins, self.n_azimuth_bins)

    @property
    def fov_radians(self) -> float:
        return math.radians(self.azimuth_fov)

    @property
    def range_resolution(self) -> float:
        return self.max_range / self.n_range_bins

    @property
    def azimuth_resolution(self) -> float:
        """Width of one azimuth bin in radians."""
        return self.fov_radians / self.n_azimuth_bins

    def range_centers(self):
        return (np.arange(self.n_range_bins) + 0.5) * self.range_resolution

    def azimuth_centers(self):
        return -self.fov_radians / 2 + (np.arange(self.n_azimuth_bins) + 0.5) * self.azimuth_resolution

    def to_dict(self):
        return {
            "azimuth_fov": self.azimuth_fov,
            "max_range": self.max_range,
            "n_range_bins": self.n_range_bins,
            "n_azimuth_bins": self.n_azimuth_bins,
        }

@dataclass(frozen=True, eq=False)
class Heatmap(object):
    geometry: SensorGeometry
    values: np.ndarray

    def __post_init__(self):
        values = _readonly(self.values, np.float32)
        if values.shape != self.geometry.shape:
            raise GeometryMismatchException(
                "heatmap values have shape %r, geometry expects %r" % (values.shape, self.geometry.shape)
            )
        if not np.all(np.isfinite(values)):
            raise DataException("heatmap contains non-finite values")
        if values.size and (values.min() < 0 or values.max() > 1):
            raise DataException("heatmap values must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, geometry):
        return cls(geometry, np.zeros(geometry.shape, dtype=np.float32))

    @classmethod
    def from_array(cls, geometry, values):
        """Build a heatmap from arbitrary floats, clamping to [0, 1]."""
        return cls(geometry, np.clip(np.nan_to_num(np.asarray(values, dtype=np.float64)), 0.0, 1.0))

    @property
    def shape(self):
        return self.values.shape

    def as_float(self):
        return self.values.astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, Heatmap):
            return NotImplemented
        return self.geometry == other.geometry and np.array_equal(self.values, other.values)

    __hash__ = None

def normalize_angle(theta):
    """Wrap an angle to (-pi, pi]; angles already in range are returned unchanged."""
    if -math.pi < theta <= math.pi:
        return theta
    t = math.atan2(math.sin(theta), math.cos(theta))
    if t <= -math.pi:
        t = math.pi
    return t

@dataclass(frozen=True)
class Pose2D(object):
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    def compose(self, other: "Pose2D") -> "Pose2D":
        """Apply ``other`` expressed in this pose's frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2D(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def transform_points(self, points):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        c, s = math.cos(self.theta), math.sin(self.theta)
        rotation = np.array([[c, -s], [s, c]])
        return points @ rotation.T + np.array([self.x, self.y])

    def position(self):
        return np.array([self.x, self.y])

    def to_tuple(self):
        return (self.x, self.y, self.theta)

@dataclass(frozen=True)
class Frame(object):
    timestamp: float
    heatmap: Heatmap
    pose: Pose2D

def _check_increasing(timestamps, what):
    for i in range(1, len(timestamps)):
        if not timestamps[i] > timestamps[i - 1]:
            raise DataException(
                "%s timestamps must be strictly increasing (index %d: %r after %r)"
                % (what, i, timestamps[i], timestamps[i - 1])
            )

@dataclass(frozen=True)
class Trajectory(object):
    poses: Tuple[Tuple[float, Pose2D], ...]

    def __post_init__(self):
        poses = tuple((float(t), p) for t, p in self.poses)
        _check_increasing([t for t, _ in poses], "trajectory")
        object.__setattr__(self, "poses", poses)

    @classmethod
    def from_lists(cls, timestamps, poses):
        return cls(tuple(zip(timestamps, poses)))

    def __len__(self):
        return len(self.poses)

    def __iter__(self):
        return iter(self.poses)

    @property
    def timestamps(self):
        return np.array([t for t, _ in self.poses])

    def positions(self):
        return np.array([[p.x, p.y] for _, p in self.poses]).reshape(-1, 2)

    def path_length(self):
        positions = self.positions()
        if len(positions) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(positions, axis=0), axis=1).sum())

@dataclass(frozen=True)
class FrameSequence(object):
    frames: Tuple[Frame, ...]
    modality_label: str = "lidar"

    def __post_init__(self):
        frames = tuple(self.frames)
        _check_increasing([f.timestamp for f in frames], "sequence")
        if frames:
            geometry = frames[0].heatmap.geometry
            for i, f in enumerate(frames):
                if f.heatmap.geometry != geometry:
                    raise GeometryMismatchException("frame %d does not share the sequence geometry" % i)
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return len(self.frames)

    def __iter__(self) -> Iterator[Frame]:
        return iter(self.frames)

    def __getitem__(self, index):
        return self.frames[index]

    @property
    def geometry(self) -> SensorGeometry:
        if not self.frames:
            raise DataException("empty sequence has no geometry")
        return self.frames[0].heatmap.geometry

    @property
    def heatmaps(self):
        return [f.heatmap for f in self.frames]

    @property
    def timestamps(self):
        return [f.timestamp for f in self.frames]

    @property
    def poses(self):
        return [f.pose for f in self.frames]

    def trajectory(self) -> Trajectory:
        return Trajectory.from_lists(self.timestamps, self.poses)

    def with_heatmaps(self, heatmaps: Sequence[Heatmap], modality_label=None):
        """Same timestamps and poses, new heatmaps."""
        if len(heatmaps) != len(self.frames):
            raise DataException("expected %d heatmaps, got %d" % (len(self.frames), len(heatmaps)))
        return FrameSequence(
            tuple(Frame(f.timestamp, h, f.pose) for f, h in zip(self.frames, heatmaps)),
            modality_label or self.modality_label,
        )

def check_same_geometry(*heatmaps):
    geometry = heatmaps[0].geometry
    for h in heatmaps[1:]:
        if h.geometry != geometry:
            raise GeometryMismatchException("heatmap geometries differ: %r vs %r" % (geometry, h.geometry))
    return geometry

def polar_to_cart(h: Heatmap, pose: Pose2D, threshold: float = 0.5):
    """World coordinates (n x 2, row-major cell order) of every cell >= threshold."""
    if not 0 <= threshold <= 1:
        raise ConfigException("threshold must be in [0, 1], got %r" % threshold)
    rows, cols = np.nonzero(h.values >= threshold)
    geometry = h.geometry
    r = geometry.range_centers()[rows]
    a = geometry.azimuth_centers()[cols]
    local = np.column_stack([r * np.cos(a), r * np.sin(a)])
    return pose.transform_points(local)

def heatmap_mse(a: Heatmap, b: Heatmap) -> float:
    check_same_geometry(a, b)
    return float(np.mean((a.as_float() - b.as_float()) ** 2))

def translate(values, d_range, d_azimuth):
    """Integer translation with zero fill; positive shifts move content to higher indices."""
    return ndimage.shift(np.asarray(values), (int(d_range), int(d_azimuth)), order=0, mode="constant", cval=0.0)
