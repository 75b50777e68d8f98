'''
Synthetic worlds, robot trajectories, ideal 2D LiDAR heatmaps and the
degradation models standing in for noisy radar/sonar predictions.

@author: tempo-bench developers
'''
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from tempo_bench.exceptions import ConfigException, TrajectoryBoundsException
from tempo_bench.heatmap import (Frame, FrameSequence, Heatmap, Pose2D, SensorGeometry, Trajectory,
                                 translate)

PRESETS = ("room", "corridor", "office")
TRAJECTORY_KINDS = ("straight", "loop", "corridor-turns")

# range smear of a LiDAR return, in bins
_SMEAR_SIGMA = 1.0
_SMEAR_REACH = 3

@dataclass(frozen=True, eq=False)
class World(object):
    name: str
    segments: np.ndarray
    bounds: Tuple[float, float, float, float]
    start: Pose2D

    def __post_init__(self):
        segments = np.array(self.segments, dtype=np.float64).reshape(-1, 4)
        segments.setflags(write=False)
        if len(segments) < 1:
            raise ConfigException("world %r has no segments" % self.name)
        if not self.contains(segments[:, 0:2]).all() or not self.contains(segments[:, 2:4]).all():
            raise ConfigException("world %r has segments outside its bounds" % self.name)
        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))

    def contains(self, points):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        xmin, ymin, xmax, ymax = self.bounds
        eps = 1e-9
        return ((points[:, 0] >= xmin - eps) & (points[:, 0] <= xmax + eps)
                & (points[:, 1] >= ymin - eps) & (points[:, 1] <= ymax + eps))

    def __eq__(self, other):
        if not isinstance(other, World):
            return NotImplemented
        return (self.name == other.name and self.bounds == other.bounds and self.start == other.start
                and np.array_equal(self.segments, other.segments))

    __hash__ = None

def _box(x, y, w, h):
    return [
        (x, y, x + w, y),
        (x + w, y, x + w, y + h),
        (x + w, y + h, x, y + h),
        (x, y + h, x, y),
    ]

def _room(rng):
    width, depth = 8.0, 6.0
    segments = _box(0.0, 0.0, width, depth)
    # furniture kept within 1.2 m of the walls so the centre stays free
    for _ in range(3):
        w, h = rng.uniform(0.4, 0.8, size=2)
        side = rng.integers(4)
        along = rng.uniform(0.5, 0.8 * (width if side % 2 == 0 else depth))
        gap = rng.uniform(0.1, 1.2 - max(w, h))
        if side == 0:
            x, y = along, gap
        elif side == 1:
            x, y = width - gap - w, along
        elif side == 2:
            x, y = along, depth - gap - h
        else:
            x, y = gap, along
        x = min(max(x, 0.05), width - w - 0.05)
        y = min(max(y, 0.05), depth - h - 0.05)
        segments.extend(_box(x, y, w, h))
    return segments, (0.0, 0.0, width, depth), Pose2D(width / 2, depth / 2, 0.0)

def _corridor(rng):
    # panels cross the axis in mirrored pairs near the centre line, where a
    # forward step moves their returns by about one step in range; the side
    # walls stay beyond the sensor range
    length, width = 30.0, 8.0
    centre = width / 2
    segments = [
        (0.0, 0.0, length, 0.0),
        (0.0, width, length, width),
        (0.0, 0.0, 0.0, width),
        (length, 0.0, length, width),
    ]
    x = 2.0
    while x < length - 1.0:
        inner, span = rng.uniform(0.15, 0.3), rng.uniform(0.2, 0.35)
        for sign in (-1.0, 1.0):
            segments.append((x, centre + sign * inner, x, centre + sign * (inner + span)))
        x += rng.uniform(1.2, 2.0)
    return segments, (0.0, 0.0, length, width), Pose2D(1.0, centre, 0.0)

def _office(rng):
    width, depth = 12.0, 10.0
    segments = _box(0.0, 0.0, width, depth)
    for _ in range(int(rng.integers(3, 6))):
        length = rng.uniform(1.5, 4.0)
        if rng.random() < 0.5:
            x = rng.uniform(0.5, width - 0.5 - length)
            y = rng.uniform(1.0, depth - 1.0)
            segments.append((x, y, x + length, y))
        else:
            x = rng.uniform(1.0, width - 1.0)
            y = rng.uniform(0.5, depth - 0.5 - length)
            segments.append((x, y, x, y + length))
    for _ in range(4):
        w, h = rng.uniform(0.6, 1.4), rng.uniform(0.5, 0.8)
        segments.extend(_box(rng.uniform(0.3, width - w - 0.3), rng.uniform(0.3, depth - h - 0.3), w, h))
    return segments, (0.0, 0.0, width, depth), Pose2D(width / 2, depth / 2, 0.0)

_BUILDERS = {
    "room": _room,
    "corridor": _corridor,
    "office": _office,
}

def build_world(preset: str, seed: int = 0) -> World:
    try:
        builder = _BUILDERS[preset]
    except KeyError:
        raise ConfigException("unknown world preset %r, expected one of %s" % (preset, ", ".join(PRESETS)))
    segments, bounds, start = builder(np.random.default_rng([_preset_key(preset), int(seed)]))
    return World(preset, np.array(segments, dtype=np.float64), bounds, start)

def _preset_key(preset):
    return PRESETS.index(preset)

@dataclass(frozen=True)
class TrajectoryConfig(object):
    kind: str = "straight"
    speed: float = 1.0
    angular_rate: float = 0.0
    n_frames: int = 100
    dt: float = 0.1
    seed: int = 0
    leg_frames: int = 20
    start: Optional[Pose2D] = None

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ConfigException("unknown trajectory kind %r, expected one of %s"
                                  % (self.kind, ", ".join(TRAJECTORY_KINDS)))
        if self.n_frames < 2:
            raise ConfigException("trajectory needs at least 2 frames, got %r" % self.n_frames)
        if not self.dt > 0:
            raise ConfigException("dt must be positive, got %r" % self.dt)
        if self.speed < 0:
            raise ConfigException("speed must be non-negative, got %r" % self.speed)
        if self.leg_frames < 1:
            raise ConfigException("leg_frames must be at least 1, got %r" % self.leg_frames)
        if self.start is not None and not isinstance(self.start, Pose2D):
            object.__setattr__(self, "start", Pose2D(*self.start))

    def to_dict(self):
        return {
            "kind": self.kind,
            "speed": self.speed,
            "angular_rate": self.angular_rate,
            "n_frames": self.n_frames,
            "dt": self.dt,
            "seed": self.seed,
            "leg_frames": self.leg_frames,
            "start": None if self.start is None else list(self.start.to_tuple()),
        }

def _heading_rates(cfg):
    """Per-step heading change for every step of the trajectory."""
    steps = cfg.n_frames - 1
    step_turn = cfg.angular_rate * cfg.dt
    if cfg.kind == "straight":
        return np.zeros(steps)
    if cfg.kind == "loop":
        return np.full(steps, step_turn)

    # corridor-turns: straight legs separated by quarter turns at angular_rate
    rng = np.random.default_rng(int(cfg.seed))
    rates = np.zeros(steps)
    if step_turn == 0:
        return rates
    turn_steps = max(1, int(round((math.pi / 2) / abs(step_turn))))
    i = cfg.leg_frames
    while i < steps:
        direction = 1.0 if rng.random() < 0.5 else -1.0
        rates[i:i + turn_steps] = direction * abs(step_turn)
        i += turn_steps + cfg.leg_frames
    return rates

def simulate_trajectory(world: World, cfg: TrajectoryConfig) -> Trajectory:
    pose = cfg.start if cfg.start is not None else world.start
    if not world.contains(pose.position())[0]:
        raise TrajectoryBoundsException(0, "start pose %r lies outside world %r" % (pose, world.name))

    step = cfg.speed * cfg.dt
    x, y, theta = pose.x, pose.y, pose.theta
    poses = [pose]
    for i, turn in enumerate(_heading_rates(cfg), start=1):
        x += step * math.cos(theta)
        y += step * math.sin(theta)
        theta += turn
        p = Pose2D(x, y, theta)
        if not world.contains(p.position())[0]:
            raise TrajectoryBoundsException(i)
        poses.append(p)
    return Trajectory.from_lists([i * cfg.dt for i in range(cfg.n_frames)], poses)

def cast_rays(world: World, pose: Pose2D, angles):
    """Range of the first segment hit along each world-frame ray angle, inf when nothing is hit."""
    origin = pose.position()
    directions = np.column_stack([np.cos(angles), np.sin(angles)])
    p1 = world.segments[:, 0:2]
    edge = world.segments[:, 2:4] - p1
    offset = p1 - origin

    # origin + t * d = p1 + u * e, solved with 2D cross products
    denom = directions[:, None, 0] * edge[None, :, 1] - directions[:, None, 1] * edge[None, :, 0]
    t_num = offset[None, :, 0] * edge[None, :, 1] - offset[None, :, 1] * edge[None, :, 0]
    u_num = offset[None, :, 0] * directions[:, None, 1] - offset[None, :, 1] * directions[:, None, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_num / denom
        u = u_num / denom
    hit = (np.abs(denom) > 1e-12) & (t > 1e-9) & (u >= 0) & (u <= 1)
    t = np.where(hit, t, np.inf)
    return t.min(axis=1)

def render_lidar(world: World, pose: Pose2D, geom: SensorGeometry) -> Heatmap:
    if not world.contains(pose.position())[0]:
        raise ConfigException("pose %r lies outside world %r" % (pose, world.name))
    ranges = cast_rays(world, pose, pose.theta + geom.azimuth_centers())
    values = np.zeros(geom.shape)
    rows = np.arange(geom.n_range_bins)
    for col in np.nonzero(ranges < geom.max_range)[0]:
        hit_row = int(ranges[col] // geom.range_resolution)
        near = np.abs(rows - hit_row) <= _SMEAR_REACH
        values[near, col] = np.exp(-0.5 * ((rows[near] - hit_row) / _SMEAR_SIGMA) ** 2)
    return Heatmap(geom, values)

def render_sequence(world: World, trajectory: Trajectory, geom: SensorGeometry, modality_label="lidar"):
    return FrameSequence(
        tuple(Frame(t, render_lidar(world, p, geom), p) for t, p in trajectory),
        modality_label,
    )

@dataclass(frozen=True)
class DegradationModel(object):
    gaussian_sigma: float = 0.0
    ghost_count: int = 0
    ghost_gain: float = 0.0
    dropout_prob: float = 0.0
    jitter_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("gaussian_sigma", "ghost_count", "ghost_gain", "dropout_prob", "jitter_sigma"):
            if getattr(self, name) < 0:
                raise ConfigException("degradation %s must be non-negative, got %r" % (name, getattr(self, name)))
        if self.dropout_prob > 1:
            raise ConfigException("dropout_prob must be in [0, 1], got %r" % self.dropout_prob)

    def with_seed(self, seed):
        return DegradationModel(self.gaussian_sigma, self.ghost_count, self.ghost_gain,
                                self.dropout_prob, self.jitter_sigma, int(seed))

    def to_dict(self):
        return {
            "gaussian_sigma": self.gaussian_sigma,
            "ghost_count": self.ghost_count,
            "ghost_gain": self.ghost_gain,
            "dropout_prob": self.dropout_prob,
            "jitter_sigma": self.jitter_sigma,
            "seed": self.seed,
        }

def degrade_frame(h: Heatmap, model: DegradationModel, index: int):
    """Degrade one frame; returns the heatmap and the applied (d_range, d_azimuth) shift."""
    rng = np.random.default_rng([int(model.seed), int(index)])
    values = h.as_float()
    n_rows, n_cols = values.shape

    shift = tuple(int(s) for s in np.rint(rng.normal(0.0, model.jitter_sigma, size=2)))
    values = translate(values, *shift)

    if model.ghost_count:
        rows = np.arange(n_rows)[:, None]
        cols = np.arange(n_cols)[None, :]
        centres = np.column_stack([rng.integers(n_rows, size=model.ghost_count),
                                   rng.integers(n_cols, size=model.ghost_count)])
        for r, c in centres:
            values = values + model.ghost_gain * np.exp(-0.5 * ((rows - r) ** 2 + (cols - c) ** 2))

    values = values + rng.normal(0.0, model.gaussian_sigma, size=values.shape)
    values[rng.random(values.shape) < model.dropout_prob] = 0.0
    return Heatmap(h.geometry, np.clip(values, 0.0, 1.0)), shift

def degrade(seq: FrameSequence, model: DegradationModel, modality_label=None) -> FrameSequence:
    heatmaps = [degrade_frame(f.heatmap, model, i)[0] for i, f in enumerate(seq)]
    return seq.with_heatmaps(heatmaps, modality_label)
