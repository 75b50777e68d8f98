'''
On-disk formats: the dataset container, evaluation reports, ablation
tables and figure emitters.

A dataset directory holds ``manifest.json``, one ``frame_%06d.bin`` per
frame (row-major little-endian float32) and ``trajectory.csv``
(``t,x,y,theta``). Floats in CSV files are written with ``repr`` so that
reading them back is exact.

@author: tempo-bench developers
'''
import csv
import io
import json
import logging
import math
import pathlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from tempo_bench.exceptions import ConfigException, DataException, DatasetFormatException, DatasetMissingException
from tempo_bench.heatmap import Frame, FrameSequence, Heatmap, Pose2D, SensorGeometry, Trajectory

DATASET_VERSION = 1
MANIFEST_NAME = "manifest.json"
TRAJECTORY_NAME = "trajectory.csv"
FRAME_PATTERN = "frame_%06d.bin"
FRAME_DTYPE = np.dtype("<f4")
TRAJECTORY_HEADER = ("t", "x", "y", "theta")

SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")

def dumps_json(data):
    """Deterministic JSON text: sorted keys, no NaN."""
    try:
        return json.dumps(data, sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False) + "\n"
    except ValueError as e:
        raise DataException("cannot serialise non-finite value: %s" % e)

def _write_text(path, text):
    path = pathlib.Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wt", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise ConfigException("cannot write %s: %s" % (path, e))

def _write_bytes(path, data):
    path = pathlib.Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as e:
        raise ConfigException("cannot write %s: %s" % (path, e))

@dataclass(frozen=True)
class DatasetManifest(object):
    geometry: SensorGeometry
    frame_count: int
    modality_label: str = "lidar"
    seed_provenance: dict = field(default_factory=dict)
    version: int = DATASET_VERSION

    def to_dict(self):
        return {
            "version": self.version,
            "geometry": self.geometry.to_dict(),
            "frame_count": self.frame_count,
            "modality_label": self.modality_label,
            "seed_provenance": self.seed_provenance,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            version = data["version"]
            if version != DATASET_VERSION:
                raise DatasetFormatException("unsupported dataset version %r, expected %d" % (version, DATASET_VERSION))
            return cls(
                geometry=SensorGeometry(**data["geometry"]),
                frame_count=int(data["frame_count"]),
                modality_label=str(data.get("modality_label", "lidar")),
                seed_provenance=data.get("seed_provenance", {}),
                version=version,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetFormatException("malformed manifest: %r" % e)
        except ConfigException as e:
            raise DatasetFormatException("manifest geometry is invalid: %s" % e)

def write_trajectory_csv(traj: Trajectory, path):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TRAJECTORY_HEADER)
    for t, pose in traj:
        writer.writerow([repr(float(t)), repr(pose.x), repr(pose.y), repr(pose.theta)])
    _write_text(path, buffer.getvalue())

def read_trajectory_csv(path) -> Trajectory:
    path = pathlib.Path(path)
    if not path.is_file():
        raise DatasetMissingException("trajectory file %s does not exist" % path)
    with open(path, "rt", encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows or tuple(rows[0]) != TRAJECTORY_HEADER:
        raise DatasetFormatException("%s: expected header %s" % (path, ",".join(TRAJECTORY_HEADER)))
    timestamps, poses = [], []
    for line, row in enumerate(rows[1:], start=2):
        try:
            t, x, y, theta = (float(v) for v in row)
        except ValueError:
            raise DatasetFormatException("%s:%d: expected four numbers" % (path, line))
        timestamps.append(t)
        poses.append(Pose2D(x, y, theta))
    try:
        return Trajectory.from_lists(timestamps, poses)
    except DataException as e:
        raise DatasetFormatException("%s: %s" % (path, e))

def write_dataset(seq: FrameSequence, directory, provenance: Optional[dict] = None) -> DatasetManifest:
    directory = pathlib.Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        for stale in directory.glob("frame_*.bin"):
            stale.unlink()
    except OSError as e:
        raise ConfigException("cannot prepare dataset directory %s: %s" % (directory, e))

    manifest = DatasetManifest(seq.geometry, len(seq), seq.modality_label, provenance or {})
    for i, frame in enumerate(seq):
        _write_bytes(directory / (FRAME_PATTERN % i), frame.heatmap.values.astype(FRAME_DTYPE).tobytes(order="C"))
    write_trajectory_csv(seq.trajectory(), directory / TRAJECTORY_NAME)
    _write_text(directory / MANIFEST_NAME, dumps_json(manifest.to_dict()))
    return manifest

def read_manifest(directory) -> DatasetManifest:
    path = pathlib.Path(directory) / MANIFEST_NAME
    if not path.is_file():
        raise DatasetMissingException("no dataset at %s (missing %s)" % (directory, MANIFEST_NAME))
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise DatasetFormatException("%s is not valid JSON: %s" % (path, e))
    return DatasetManifest.from_dict(data)

def read_dataset(directory) -> FrameSequence:
    directory = pathlib.Path(directory)
    manifest = read_manifest(directory)
    geometry = manifest.geometry

    files = sorted(directory.glob("frame_*.bin"))
    if len(files) != manifest.frame_count:
        raise DatasetFormatException("manifest lists %d frames but %d frame files were found in %s"
                                     % (manifest.frame_count, len(files), directory))
    expected_size = geometry.n_range_bins * geometry.n_azimuth_bins * FRAME_DTYPE.itemsize

    heatmaps = []
    for i in range(manifest.frame_count):
        path = directory / (FRAME_PATTERN % i)
        if not path.is_file():
            raise DatasetFormatException("frame %d is missing (%s)" % (i, path.name))
        data = path.read_bytes()
        if len(data) != expected_size:
            raise DatasetFormatException("frame %d has %d bytes, expected %d" % (i, len(data), expected_size))
        values = np.frombuffer(data, dtype=FRAME_DTYPE).reshape(geometry.shape)
        if not np.all(np.isfinite(values)):
            raise DatasetFormatException("frame %d contains non-finite values" % i)
        try:
            heatmaps.append(Heatmap(geometry, values))
        except DataException as e:
            raise DatasetFormatException("frame %d: %s" % (i, e))

    trajectory = read_trajectory_csv(directory / TRAJECTORY_NAME)
    if len(trajectory) != manifest.frame_count:
        raise DatasetFormatException("trajectory has %d poses, manifest lists %d frames"
                                     % (len(trajectory), manifest.frame_count))
    frames = tuple(Frame(t, h, pose) for (t, pose), h in zip(trajectory, heatmaps))
    return FrameSequence(frames, manifest.modality_label)

class DatasetStore(object):
    """Reads and writes datasets, resolving relative paths against an output root."""

    def __init__(self, root=None):
        super(DatasetStore, self).__init__()
        self.logger = logging.getLogger(self.__class__.__name__)

        self.root = pathlib.Path(root) if root else None

    def resolve(self, path):
        path = pathlib.Path(path)
        if self.root is not None and not path.is_absolute():
            return self.root / path
        return path

    def write(self, seq: FrameSequence, path, provenance=None):
        path = self.resolve(path)
        write_dataset(seq, path, provenance)
        self.logger.info("Wrote %d frames (%s) to %s", len(seq), seq.modality_label, path)
        return path

    def read(self, path) -> FrameSequence:
        path = self.resolve(path)
        seq = read_dataset(path)
        self.logger.debug("Read %d frames (%s) from %s", len(seq), seq.modality_label, path)
        return seq

    def manifest(self, path) -> DatasetManifest:
        return read_manifest(self.resolve(path))

@dataclass
class EvalReport(object):
    """
    Metric results of one evaluation. A metric that could not be computed
    is ``None`` in ``metrics`` and has an entry in ``null_reasons``.
    """
    metrics: Dict[str, object] = field(default_factory=dict)
    null_reasons: Dict[str, str] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seeds: List[int] = field(default_factory=list)
    runs: List[dict] = field(default_factory=list)

    def set(self, name, value):
        if isinstance(value, float) and not math.isfinite(value):
            raise DataException("metric %s is not finite" % name)
        self.metrics[name] = value
        self.null_reasons.pop(name, None)

    def set_null(self, name, reason):
        self.metrics[name] = None
        self.null_reasons[name] = str(reason)

    def to_dict(self):
        for name, value in self.metrics.items():
            if value is None and name not in self.null_reasons:
                raise DataException("metric %s is null without a reason" % name)
        return {
            "metrics": self.metrics,
            "null_reasons": self.null_reasons,
            "config": self.config,
            "seeds": self.seeds,
            "runs": self.runs,
        }

def write_report(r: EvalReport, path):
    _write_text(path, dumps_json(r.to_dict()))

def write_json(data, path):
    _write_text(path, dumps_json(data))

def _csv_value(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)

def write_ablation_csv(rows: List[dict], columns, path):
    """One row per configuration; ``columns`` fixes the order, missing values are empty."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_value(row.get(c)) for c in columns])
    _write_text(path, buffer.getvalue())

def emit_pgm(h: Heatmap, path):
    """Binary 8-bit PGM; rows are range bins, columns azimuth bins."""
    height, width = h.shape
    raster = np.rint(255.0 * h.as_float()).astype(np.uint8)
    _write_bytes(path, b"P5\n%d %d\n255\n" % (width, height) + raster.tobytes(order="C"))

class _SvgCanvas(object):
    def __init__(self, points, size, margin):
        super(_SvgCanvas, self).__init__()
        self.size = size
        self.margin = margin
        if len(points):
            self.low = points.min(axis=0)
            extent = float((points.max(axis=0) - self.low).max())
        else:
            self.low = np.zeros(2)
            extent = 0.0
        self.scale = (size - 2 * margin) / extent if extent > 0 else 1.0

    def xy(self, x, y):
        # SVG y grows downwards
        return (self.margin + (x - self.low[0]) * self.scale,
                self.size - self.margin - (y - self.low[1]) * self.scale)

    def document(self, body):
        return "\n".join([
            '<?xml version="1.0" encoding="UTF-8"?>',
            '<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 %d %d" width="%d" height="%d">'
            % (self.size, self.size, self.size, self.size),
            '<rect x="0" y="0" width="%d" height="%d" fill="white"/>' % (self.size, self.size),
        ] + body + ["</svg>", ""])

def _escape(text):
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")

def _polyline(canvas, points, color, width=1.5, extra=""):
    coords = " ".join("%.3f,%.3f" % canvas.xy(x, y) for x, y in points)
    return '<polyline points="%s" fill="none" stroke="%s" stroke-width="%.1f"%s/>' % (coords, color, width, extra)

def emit_svg_trajectories(trajectories, path, size=480, margin=24):
    """Trajectories as labelled polylines, ``trajectories`` is a list of ``(label, Trajectory)``."""
    positions = [traj.positions() for _, traj in trajectories]
    canvas = _SvgCanvas(np.concatenate(positions) if positions else np.zeros((0, 2)), size, margin)
    body = []
    for i, ((label, _), points) in enumerate(zip(trajectories, positions)):
        color = SVG_COLORS[i % len(SVG_COLORS)]
        body.append('<g id="trajectory-%d">' % i)
        body.append(_polyline(canvas, points, color))
        body.append('<text x="%d" y="%d" font-size="12" fill="%s">%s</text>'
                    % (margin, margin + 14 * i, color, _escape(label)))
        body.append("</g>")
    _write_text(path, canvas.document(body))

def emit_svg_tracks(tracks, shape, path, size=480, margin=24):
    """
    Point tracks of a flow field drawn over the heatmap grid, azimuth bins
    horizontal and range bins vertical. Only valid positions are drawn.
    """
    corners = np.array([[0.0, 0.0], [shape[1] - 1.0, shape[0] - 1.0]])
    canvas = _SvgCanvas(corners, size, margin)
    body = ['<rect x="%d" y="%d" width="%d" height="%d" fill="none" stroke="#cccccc"/>'
            % (margin, margin, size - 2 * margin, size - 2 * margin)]
    for track in tracks:
        points = track.positions[track.valid][:, ::-1]
        if not len(points):
            continue
        x, y = canvas.xy(*points[0])
        body.append('<circle cx="%.3f" cy="%.3f" r="1.5" fill="%s"/>' % (x, y, SVG_COLORS[0]))
        if len(points) > 1:
            body.append(_polyline(canvas, points, SVG_COLORS[1], width=1.0))
    _write_text(path, canvas.document(body))
