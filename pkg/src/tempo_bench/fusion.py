'''
Proxy embedding space, temporal losses, windowed latent fusion and the
finite-difference trainer of the temporal-convolution fusion module.

The proxy encoder block-averages a heatmap onto a pooled grid and
L2-normalises it; the proxy decoder upsamples a pooled grid back to sensor
resolution. Fusion operates on stacks of such embeddings.

@author: tempo-bench developers
'''
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, special

from tempo_bench.correlation import sep_softmax, transform_loss_against, xcorr2
from tempo_bench.exceptions import (ConfigException, DataException, FusionException,
                                    InsufficientDataException)
from tempo_bench.heatmap import FrameSequence, Heatmap, SensorGeometry, check_same_geometry

DEFAULT_POOLED_SHAPE = (8, 8)
FUSION_MODES = ("none", "window_average", "temporal_conv", "early")
KERNEL_INITS = ("identity", "average")
NCE_VARIANTS = ("standard", "modified")

_ZERO_NORM = 1e-12

@dataclass(frozen=True, eq=False)
class Embedding(object):
    values: np.ndarray
    grid_shape: Tuple[int, int]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).ravel()
        grid_shape = tuple(int(s) for s in self.grid_shape)
        if values.size != grid_shape[0] * grid_shape[1]:
            raise DataException("embedding of size %d does not fit grid %r" % (values.size, grid_shape))
        if abs(np.linalg.norm(values) - 1.0) > 1e-9:
            raise DataException("embedding must have unit norm, has %r" % np.linalg.norm(values))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "grid_shape", grid_shape)

    @classmethod
    def sentinel(cls, grid_shape):
        values = np.zeros(grid_shape[0] * grid_shape[1])
        values[0] = 1.0
        return cls(values, grid_shape)

    @classmethod
    def from_raw(cls, values, grid_shape):
        """Normalise an arbitrary vector; a zero vector becomes the sentinel."""
        values = np.asarray(values, dtype=np.float64).ravel()
        norm = np.linalg.norm(values)
        if not np.isfinite(norm) or norm <= _ZERO_NORM:
            return cls.sentinel(grid_shape)
        return cls(values / norm, grid_shape)

    @property
    def dim(self):
        return self.values.size

    def grid(self):
        return self.values.reshape(self.grid_shape)

def _block_index(n, blocks):
    return np.arange(n) * blocks // n

def _check_pooling(geometry: SensorGeometry, pooled_shape):
    ph, pw = pooled_shape
    if not (1 <= ph <= geometry.n_range_bins and 1 <= pw <= geometry.n_azimuth_bins):
        raise ConfigException("pooled grid %r does not fit a %r heatmap" % (tuple(pooled_shape), geometry.shape))

def embed(h: Heatmap, pooled_shape=DEFAULT_POOLED_SHAPE) -> Embedding:
    _check_pooling(h.geometry, pooled_shape)
    ph, pw = pooled_shape
    rows = _block_index(h.geometry.n_range_bins, ph)
    cols = _block_index(h.geometry.n_azimuth_bins, pw)
    labels = rows[:, None] * pw + cols[None, :]
    pooled = ndimage.mean(h.as_float(), labels=labels, index=np.arange(ph * pw))
    return Embedding.from_raw(pooled, (ph, pw))

def decode(e: Embedding, geom: SensorGeometry) -> Heatmap:
    _check_pooling(geom, e.grid_shape)
    grid = np.clip(e.grid(), 0.0, None)
    peak = grid.max()
    if peak <= 0:
        return Heatmap.zeros(geom)
    target = min(1.0, e.values.max() * np.sqrt(e.dim))
    grid = grid * (target / peak)
    rows = _block_index(geom.n_range_bins, e.grid_shape[0])
    cols = _block_index(geom.n_azimuth_bins, e.grid_shape[1])
    return Heatmap.from_array(geom, grid[np.ix_(rows, cols)])

def _check_same_space(embeds):
    shape = embeds[0].grid_shape
    for e in embeds[1:]:
        if e.grid_shape != shape:
            raise DataException("embeddings live on different grids: %r vs %r" % (shape, e.grid_shape))
    return shape

def cosine_sim(a: Embedding, b: Embedding) -> float:
    _check_same_space([a, b])
    return float(np.clip(np.dot(a.values, b.values), -1.0, 1.0))

def temporal_sim_loss(embeds: Sequence[Embedding]) -> float:
    if len(embeds) < 2:
        raise InsufficientDataException("temporal similarity needs at least 2 embeddings, got %d" % len(embeds))
    return float(np.mean([1.0 - cosine_sim(a, b) for a, b in zip(embeds[:-1], embeds[1:])]))

def _similarity_logits(anchors, positives, temperature):
    if not temperature > 0:
        raise ConfigException("InfoNCE temperature must be positive, got %r" % temperature)
    if not anchors or len(anchors) != len(positives):
        raise DataException("InfoNCE needs equal, non-empty anchor and positive lists (%d vs %d)"
                            % (len(anchors), len(positives)))
    _check_same_space(list(anchors) + list(positives))
    a = np.stack([e.values for e in anchors])
    p = np.stack([e.values for e in positives])
    return np.clip(a @ p.T, -1.0, 1.0) / temperature

def infonce(anchors, positives, temperature=0.1) -> float:
    logits = _similarity_logits(anchors, positives, temperature)
    losses = special.logsumexp(logits, axis=1) - np.diag(logits)
    return max(0.0, float(np.mean(losses)))

def infonce_modified(anchors, positives, temperature, neighbor_weights) -> float:
    """InfoNCE whose denominator term j is scaled by ``neighbor_weights[i][j]``."""
    logits = _similarity_logits(anchors, positives, temperature)
    weights = np.asarray(neighbor_weights, dtype=np.float64)
    if weights.shape != logits.shape:
        raise DataException("neighbor weights of shape %r do not match batch %r" % (weights.shape, logits.shape))
    if np.any(weights < 0) or np.any(weights > 1) or not np.allclose(np.diag(weights), 1.0):
        raise DataException("neighbor weights must lie in [0, 1] with a unit diagonal")
    losses = special.logsumexp(logits, axis=1, b=weights) - np.diag(logits)
    return max(0.0, float(np.mean(losses)))

def lidar_neighbor_weights(targets: Sequence[Embedding], floor=0.5):
    """Down-weight negatives whose ground-truth embeddings resemble each other."""
    t = np.stack([e.values for e in targets])
    similarity = np.clip(t @ t.T, 0.0, 1.0)
    weights = 1.0 - (1.0 - floor) * similarity
    np.fill_diagonal(weights, 1.0)
    return weights

def temporal_neighbor_weights(n, radius=1, floor=0.5):
    gap = np.abs(np.subtract.outer(np.arange(n), np.arange(n))).astype(np.float64)
    weights = np.clip(floor + (1.0 - floor) * (gap - 1.0) / max(radius, 1), floor, 1.0)
    np.fill_diagonal(weights, 1.0)
    return weights

def window_average(embeds: Sequence[Embedding]) -> Embedding:
    if not embeds:
        raise DataException("cannot average an empty window")
    shape = _check_same_space(embeds)
    return Embedding.from_raw(np.sum([e.values for e in embeds], axis=0), shape)

@dataclass(frozen=True, eq=False)
class FusionKernel(object):
    weights: np.ndarray
    bias: np.ndarray
    taps: Tuple[int, int] = (3, 3)

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        if weights.ndim == 1:
            weights = weights[None, :]
        bias = np.array(self.bias, dtype=np.float64).ravel()
        taps = tuple(int(t) for t in self.taps)
        if weights.shape[0] < 1:
            raise ConfigException("fusion kernel needs at least one time step")
        if taps[0] % 2 == 0 or taps[1] % 2 == 0 or weights.shape[1] != taps[0] * taps[1]:
            raise ConfigException("fusion kernel taps %r do not match weights %r" % (taps, weights.shape))
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise ConfigException("fusion kernel has non-finite parameters")
        weights.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "taps", taps)

    @classmethod
    def _center_tap(cls, window, dim, taps, rows):
        weights = np.zeros((window, taps[0] * taps[1]))
        weights[rows, (taps[0] * taps[1]) // 2] = 1.0 / (window - rows.start if isinstance(rows, slice) else 1.0)
        return cls(weights, np.zeros(dim), taps)

    @classmethod
    def identity(cls, window, dim, taps=(3, 3)):
        """Passes the newest frame through unchanged."""
        return cls._center_tap(window, dim, taps, window - 1)

    @classmethod
    def uniform(cls, window, dim, taps=(3, 3)):
        """Equivalent to window_average."""
        return cls._center_tap(window, dim, taps, slice(0, window))

    @property
    def window(self):
        return self.weights.shape[0]

    def parameters(self, with_bias=False):
        if with_bias:
            return np.concatenate([self.weights.ravel(), self.bias])
        return self.weights.ravel().copy()

    def with_parameters(self, vector, with_bias=False):
        vector = np.asarray(vector, dtype=np.float64)
        n = self.weights.size
        bias = vector[n:] if with_bias else self.bias
        return FusionKernel(vector[:n].reshape(self.weights.shape), bias, self.taps)

    def to_dict(self):
        return {
            "taps": list(self.taps),
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(data["weights"], data["bias"], data.get("taps", (3, 3)))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigException("malformed fusion kernel: %s" % e)

def tap_stack(e: Embedding, taps):
    """Every tap-shifted copy of an embedding grid, shape ``(taps, ph, pw)``."""
    grid = e.grid()
    units = np.eye(taps[0] * taps[1]).reshape(-1, taps[0], taps[1])
    return np.stack([ndimage.correlate(grid, u, mode="constant", cval=0.0) for u in units])

def _conv_window(embeds, weights, bias, taps):
    shape = _check_same_space(embeds)
    if bias.size != embeds[0].dim:
        raise DataException("kernel bias of size %d does not fit embeddings of size %d" % (bias.size, embeds[0].dim))
    out = bias.reshape(shape).copy()
    for e, w in zip(embeds, weights):
        out += ndimage.correlate(e.grid(), w.reshape(taps), mode="constant", cval=0.0)
    return Embedding.from_raw(out, shape)

def temporal_conv_fuse(embeds: Sequence[Embedding], kernel: FusionKernel) -> Embedding:
    if len(embeds) != kernel.window:
        raise DataException("temporal fusion expects %d embeddings, got %d" % (kernel.window, len(embeds)))
    return _conv_window(embeds, kernel.weights, kernel.bias, kernel.taps)

def fuse_truncated(embeds: Sequence[Embedding], kernel: FusionKernel) -> Embedding:
    """Fuse a window shorter than the kernel with the kernel's newest rows."""
    k = len(embeds)
    if not 1 <= k <= kernel.window:
        raise DataException("window of %d embeddings does not fit kernel of %d" % (k, kernel.window))
    return _conv_window(embeds, kernel.weights[kernel.window - k:], kernel.bias, kernel.taps)

@dataclass(frozen=True)
class LossWeights(object):
    w_sim: float = 1.0
    w_nce: float = 1.0
    w_T: float = 1.0
    nce_temperature: float = 0.1
    nce_variant: str = "standard"
    neighbor_floor: float = 0.5

    def __post_init__(self):
        weights = (self.w_sim, self.w_nce, self.w_T)
        if min(weights) < 0 or max(weights) <= 0:
            raise ConfigException("loss weights must be non-negative with at least one positive, got %r" % (weights,))
        if not self.nce_temperature > 0:
            raise ConfigException("nce_temperature must be positive, got %r" % self.nce_temperature)
        if self.nce_variant not in NCE_VARIANTS:
            raise ConfigException("unknown InfoNCE variant %r" % self.nce_variant)
        if not 0 <= self.neighbor_floor <= 1:
            raise ConfigException("neighbor_floor must be in [0, 1], got %r" % self.neighbor_floor)

    def scaled(self, factor):
        return LossWeights(self.w_sim * factor, self.w_nce * factor, self.w_T * factor,
                           self.nce_temperature, self.nce_variant, self.neighbor_floor)

@dataclass(frozen=True, eq=False)
class FusionClip(object):
    """
    One stage-3 training sample: ``M + T - 1`` degraded frames and the ``M``
    ground-truth frames aligned with the newest frame of each sliding window.
    """
    inputs: Tuple[Heatmap, ...]
    targets: Tuple[Heatmap, ...]
    pooled_shape: Tuple[int, int]
    temperature: float = 1.0
    method: str = "fft"
    input_embeds: List[Embedding] = field(init=False, repr=False)
    target_embeds: List[Embedding] = field(init=False, repr=False)
    target_probs: list = field(init=False, repr=False)
    _stacks: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        inputs, targets = tuple(self.inputs), tuple(self.targets)
        if not targets or len(inputs) < len(targets):
            raise FusionException("clip needs at least one target and no fewer inputs than targets")
        check_same_geometry(*(inputs + targets))
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "pooled_shape", tuple(self.pooled_shape))
        object.__setattr__(self, "input_embeds", [embed(h, self.pooled_shape) for h in inputs])
        object.__setattr__(self, "target_embeds", [embed(h, self.pooled_shape) for h in targets])
        object.__setattr__(self, "target_probs", [
            sep_softmax(xcorr2(current, previous, self.method), self.temperature)
            for previous, current in zip(targets[:-1], targets[1:])
        ])

    @property
    def geometry(self):
        return self.targets[0].geometry

    @property
    def window(self):
        return len(self.inputs) - len(self.targets) + 1

    def fuse(self, kernel: FusionKernel) -> List[Embedding]:
        """``temporal_conv_fuse`` of every full window, from cached tap-shifted inputs."""
        if kernel.bias.size != self.input_embeds[0].dim:
            raise DataException("kernel bias of size %d does not fit embeddings of size %d"
                                % (kernel.bias.size, self.input_embeds[0].dim))
        stacks = self._stacks.get(kernel.taps)
        if stacks is None:
            stacks = self._stacks[kernel.taps] = np.stack([tap_stack(e, kernel.taps) for e in self.input_embeds])
        t = kernel.window
        bias = kernel.bias.reshape(self.pooled_shape)
        return [
            Embedding.from_raw(bias + np.einsum("tk,tkij->ij", kernel.weights, stacks[m:m + t]), self.pooled_shape)
            for m in range(len(self.targets))
        ]

def loss_terms(clip: FusionClip, kernel: FusionKernel, lw: LossWeights):
    """Unweighted stage-3 loss terms of one clip: ``nce``, ``sim`` and ``transform``."""
    if clip.window != kernel.window:
        raise FusionException("clip is aligned for a window of %d, kernel has %d" % (clip.window, kernel.window))
    fused = clip.fuse(kernel)

    terms = {"nce": 0.0, "sim": 0.0, "transform": 0.0}
    if lw.w_nce > 0:
        if lw.nce_variant == "modified":
            weights = lidar_neighbor_weights(clip.target_embeds, lw.neighbor_floor)
            terms["nce"] = infonce_modified(fused, clip.target_embeds, lw.nce_temperature, weights)
        else:
            terms["nce"] = infonce(fused, clip.target_embeds, lw.nce_temperature)
    if len(fused) >= 2:
        if lw.w_sim > 0:
            terms["sim"] = temporal_sim_loss(fused)
        if lw.w_T > 0:
            decoded = [decode(e, clip.geometry) for e in fused]
            terms["transform"] = float(np.mean([
                transform_loss_against(decoded[m], decoded[m - 1], clip.target_probs[m - 1],
                                       clip.temperature, clip.method)
                for m in range(1, len(decoded))
            ]))
    return terms

def combined_loss(clip: FusionClip, kernel: FusionKernel, lw: LossWeights) -> float:
    terms = loss_terms(clip, kernel, lw)
    return lw.w_nce * terms["nce"] + lw.w_sim * terms["sim"] + lw.w_T * terms["transform"]

class FusionTrainer(object):
    """
    Gradient descent on the mean combined loss of a clip set, with central
    finite-difference gradients. A step is kept only when it lowers the mean
    loss; otherwise the step size halves, and training stops once
    ``max_halvings`` consecutive halvings fail.
    """

    def __init__(self, weights: LossWeights, steps=200, step_size=0.05, fd_epsilon=1e-4,
                 train_bias=False, max_halvings=10):
        super(FusionTrainer, self).__init__()
        self.logger = logging.getLogger(self.__class__.__name__)

        if steps < 0:
            raise ConfigException("steps must be non-negative, got %r" % steps)
        if not step_size > 0 or not fd_epsilon > 0:
            raise ConfigException("step_size and fd_epsilon must be positive")

        self.weights = weights
        self.steps = int(steps)
        self.step_size = float(step_size)
        self.fd_epsilon = float(fd_epsilon)
        self.train_bias = bool(train_bias)
        self.max_halvings = int(max_halvings)

    def mean_loss(self, dataset, kernel):
        return float(np.mean([combined_loss(clip, kernel, self.weights) for clip in dataset]))

    def gradient(self, dataset, kernel):
        theta = kernel.parameters(self.train_bias)
        grad = np.zeros_like(theta)
        for i in range(theta.size):
            step = np.zeros_like(theta)
            step[i] = self.fd_epsilon
            upper = self.mean_loss(dataset, kernel.with_parameters(theta + step, self.train_bias))
            lower = self.mean_loss(dataset, kernel.with_parameters(theta - step, self.train_bias))
            grad[i] = (upper - lower) / (2.0 * self.fd_epsilon)
        return grad

    def train(self, dataset, init: FusionKernel) -> FusionKernel:
        if not dataset:
            raise FusionException("training dataset is empty")
        kernel = init
        loss = self.mean_loss(dataset, kernel)
        if not np.isfinite(loss):
            raise FusionException("initial fusion loss is not finite")
        self.logger.info("Training fusion kernel: %d parameters, initial loss %.6f",
                         kernel.parameters(self.train_bias).size, loss)

        eta = self.step_size
        for step in range(self.steps):
            grad = self.gradient(dataset, kernel)
            if not np.all(np.isfinite(grad)) or not np.any(grad):
                self.logger.info("Gradient vanished at step %d, stopping", step)
                break
            theta = kernel.parameters(self.train_bias)
            accepted = False
            for _ in range(self.max_halvings + 1):
                candidate = kernel.with_parameters(theta - eta * grad, self.train_bias)
                candidate_loss = self.mean_loss(dataset, candidate)
                if candidate_loss < loss:
                    kernel, loss, accepted = candidate, candidate_loss, True
                    break
                eta /= 2.0
                self.logger.debug("Step %d rejected, step size halved to %g", step, eta)
            if not accepted:
                self.logger.warning("No descent after %d halvings at step %d, stopping", self.max_halvings, step)
                break
            self.logger.debug("Step %d: loss %.6f", step, loss)

        self.logger.info("Fusion kernel trained, final loss %.6f", loss)
        return kernel

def train_fusion(dataset, init: FusionKernel, lw: LossWeights, steps=200, step_size=0.05, fd_epsilon=1e-4,
                 train_bias=False) -> FusionKernel:
    return FusionTrainer(lw, steps, step_size, fd_epsilon, train_bias).train(dataset, init)

@dataclass(frozen=True)
class TrainerConfig(object):
    steps: int = 200
    step_size: float = 0.05
    fd_epsilon: float = 1e-4
    train_bias: bool = False
    clip_targets: int = 4
    max_clips: int = 6

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigException("trainer steps must be non-negative, got %r" % self.steps)
        if not self.step_size > 0 or not self.fd_epsilon > 0:
            raise ConfigException("trainer step_size and fd_epsilon must be positive")
        if self.clip_targets < 1 or self.max_clips < 1:
            raise ConfigException("trainer clip_targets and max_clips must be at least 1")

@dataclass(frozen=True)
class FusionConfig(object):
    mode: str = "none"
    window: int = 5
    pooled_shape: Optional[Tuple[int, int]] = None
    taps: Tuple[int, int] = (3, 3)
    init: str = "average"
    train: bool = True
    temperature: float = 1.0
    loss: LossWeights = field(default_factory=LossWeights)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)

    def __post_init__(self):
        if self.mode not in FUSION_MODES:
            raise ConfigException("unknown fusion mode %r, expected one of %s" % (self.mode, ", ".join(FUSION_MODES)))
        if self.window < 1:
            raise ConfigException("fusion window must be at least 1, got %r" % self.window)
        if self.init not in KERNEL_INITS:
            raise ConfigException("unknown kernel init %r, expected one of %s" % (self.init, ", ".join(KERNEL_INITS)))
        if not self.temperature > 0:
            raise ConfigException("softmax temperature must be positive, got %r" % self.temperature)
        if self.pooled_shape is not None:
            object.__setattr__(self, "pooled_shape", tuple(int(s) for s in self.pooled_shape))
        object.__setattr__(self, "taps", tuple(int(t) for t in self.taps))

    def grid_for(self, geometry: SensorGeometry):
        shape = self.pooled_shape or geometry.shape
        _check_pooling(geometry, shape)
        return shape

    def initial_kernel(self, geometry: SensorGeometry):
        ph, pw = self.grid_for(geometry)
        factory = FusionKernel.identity if self.init == "identity" else FusionKernel.uniform
        return factory(self.window, ph * pw, self.taps)

def build_clips(degraded: FrameSequence, truth: FrameSequence, window, pooled_shape, clip_targets=4,
                max_clips=6, temperature=1.0, method="fft"):
    """Evenly spaced training clips over an aligned (degraded, ground truth) pair."""
    if len(degraded) != len(truth):
        raise FusionException("degraded and ground-truth sequences differ in length (%d vs %d)"
                              % (len(degraded), len(truth)))
    n = len(degraded)
    if n < window:
        raise ConfigException("fusion window %d is larger than the sequence (%d frames)" % (window, n))
    targets = min(clip_targets, n - window + 1)
    span = targets + window - 1
    starts = sorted(set(np.linspace(0, n - span, min(max_clips, n - span + 1)).round().astype(int).tolist()))
    inputs, gt = degraded.heatmaps, truth.heatmaps
    return [
        FusionClip(tuple(inputs[s:s + span]), tuple(gt[s + window - 1:s + span]), pooled_shape, temperature, method)
        for s in starts
    ]

def fuse_sequence(seq: FrameSequence, cfg: FusionConfig, truth: FrameSequence = None,
                  kernel: FusionKernel = None, method="fft"):
    """
    Apply the configured fusion mode to a whole sequence.

    Returns the fused sequence and the kernel used (``None`` unless the mode
    is ``temporal_conv``). Frames before the first full window use the
    frames available so far.
    """
    if cfg.mode == "none":
        return seq, None
    n = len(seq)
    if cfg.window > n:
        raise ConfigException("fusion window %d is larger than the sequence (%d frames)" % (cfg.window, n))
    geometry = seq.geometry
    grid = cfg.grid_for(geometry)
    label = "%s+%s%d" % (seq.modality_label, cfg.mode, cfg.window)

    def window_of(items, t):
        return items[max(0, t - cfg.window + 1):t + 1]

    if cfg.mode == "early":
        values = [h.as_float() for h in seq.heatmaps]
        fused = [embed(Heatmap.from_array(geometry, np.mean(window_of(values, t), axis=0)), grid) for t in range(n)]
        return seq.with_heatmaps([decode(e, geometry) for e in fused], label), None

    embeds = [embed(h, grid) for h in seq.heatmaps]
    if cfg.mode == "window_average":
        fused = [window_average(window_of(embeds, t)) for t in range(n)]
        return seq.with_heatmaps([decode(e, geometry) for e in fused], label), None

    if kernel is None:
        kernel = cfg.initial_kernel(geometry)
        if cfg.train:
            if truth is None:
                raise ConfigException("training temporal_conv fusion needs a paired ground-truth sequence")
            clips = build_clips(seq, truth, cfg.window, grid, cfg.trainer.clip_targets, cfg.trainer.max_clips,
                                cfg.temperature, method)
            trainer = FusionTrainer(cfg.loss, cfg.trainer.steps, cfg.trainer.step_size, cfg.trainer.fd_epsilon,
                                    cfg.trainer.train_bias)
            kernel = trainer.train(clips, kernel)
    elif kernel.window != cfg.window:
        raise ConfigException("kernel window %d does not match configured window %d" % (kernel.window, cfg.window))
    fused = [fuse_truncated(window_of(embeds, t), kernel) for t in range(n)]
    return seq.with_heatmaps([decode(e, geometry) for e in fused], label), kernel

def fuse_streams(streams: Sequence[FrameSequence], pooled_shape=None) -> FrameSequence:
    """Latent fusion of several aligned modality streams, frame by frame."""
    if not streams:
        raise DataException("no streams to fuse")
    first = streams[0]
    if len(streams) == 1:
        return first
    for s in streams[1:]:
        if s.timestamps != first.timestamps:
            raise DataException("streams %r and %r are not aligned" % (first.modality_label, s.modality_label))
    geometry = first.geometry
    grid = pooled_shape or geometry.shape
    heatmaps = [
        decode(window_average([embed(s[t].heatmap, grid) for s in streams]), geometry)
        for t in range(len(first))
    ]
    return first.with_heatmaps(heatmaps, "+".join(s.modality_label for s in streams))
