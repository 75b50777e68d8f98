'''
Stage composition (simulate, degrade, fuse, scan-match, evaluate) and the
ablation driver.

@author: tempo-bench developers
'''
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from tempo_bench import metrics as m
from tempo_bench.config import RunConfig, apply_override
from tempo_bench.correlation import scan_match_sequence
from tempo_bench.exceptions import ConfigException, DataException, StatisticsException
from tempo_bench.fusion import fuse_sequence, fuse_streams
from tempo_bench.heatmap import FrameSequence
from tempo_bench.simulator import build_world, degrade, render_sequence, simulate_trajectory
from tempo_bench.stats import kendall_tau, pearson, spearman

APE_FIELDS = ("rmse", "mean", "std", "max")
METRIC_COLUMNS = (
    ("psnr", "cosine_sim", "fvmd", "peak_distance")
    + tuple("ape_%s" % f for f in APE_FIELDS)
    + tuple("ape_gt_%s" % f for f in APE_FIELDS)
    + ("iou",)
)
TEMPORAL_METRICS = ("fvmd", "peak_distance")
APE_TARGET = "ape_gt_mean"
CORRELATIONS = (("pearson", pearson), ("spearman", spearman), ("kendall", kendall_tau))

class Pipeline(object):
    """
    Runs the workbench stages for one configuration. ``ape_*`` compares the
    scan-matched prediction with the scan-matched reference, ``ape_gt_*``
    with the reference's ground-truth poses.
    """

    def __init__(self, config: RunConfig):
        super(Pipeline, self).__init__()
        self.logger = logging.getLogger(self.__class__.__name__)

        self.config = config

    def simulate(self) -> FrameSequence:
        cfg = self.config
        world = build_world(cfg.world.preset, cfg.world.seed)
        trajectory = simulate_trajectory(world, cfg.trajectory)
        self.logger.info("Simulated %d frames in %r world", len(trajectory), cfg.world.preset)
        return render_sequence(world, trajectory, cfg.geometry)

    def degrade(self, truth: FrameSequence, seed=None) -> FrameSequence:
        models = self.config.degradation
        if seed is not None:
            # one stream per model, each with its own noise draw
            models = [model.with_seed(seed + i) for i, model in enumerate(models)]
        if len(models) == 1:
            return degrade(truth, models[0], "degraded")
        streams = [degrade(truth, model, "degraded%d" % i) for i, model in enumerate(models)]
        return fuse_streams(streams, self.config.fusion.pooled_shape)

    def fuse(self, seq: FrameSequence, truth: FrameSequence = None, kernel=None):
        fused, kernel = fuse_sequence(seq, self.config.fusion, truth, kernel, self.config.metrics.method)
        if self.config.fusion.mode != "none":
            self.logger.info("Fused %d frames with %s (window %d)", len(fused), self.config.fusion.mode,
                             self.config.fusion.window)
        return fused, kernel

    def slam(self, seq: FrameSequence):
        return scan_match_sequence(seq, subpixel=self.config.metrics.subpixel, method=self.config.metrics.method)

    def evaluate(self, pred: FrameSequence, ref: FrameSequence):
        """Every metric column; returns ``(values, null_reasons)``."""
        cfg = self.config.metrics
        if len(pred) != len(ref):
            raise DataException("predicted and reference sequences differ in length (%d vs %d)"
                                % (len(pred), len(ref)))
        values, reasons = {}, {}

        def attempt(names, compute):
            try:
                result = compute()
            except DataException as e:
                self.logger.warning("Metric %s is null: %s", names[0], e)
                for name in names:
                    values[name] = None
                    reasons[name] = str(e)
                return
            if isinstance(result, dict):
                values.update(result)
            else:
                values[names[0]] = result

        attempt(["psnr"], lambda: float(np.mean([m.psnr(p.heatmap, r.heatmap, cfg.psnr_cap)
                                                 for p, r in zip(pred, ref)])))
        attempt(["cosine_sim"], lambda: m.embedding_similarity(pred, ref, cfg.embedding_shape))
        attempt(["fvmd"], lambda: m.fvmd(pred, ref, cfg))
        attempt(["peak_distance"], lambda: m.peak_distance_metric(pred, ref, cfg.method))

        trajectories = {}

        def scan_matched():
            if not trajectories:
                trajectories["pred"] = self.slam(pred)
                trajectories["ref"] = self.slam(ref)
            return trajectories["pred"], trajectories["ref"]

        def ape_columns(prefix, gt):
            report = m.ape(scan_matched()[0], gt)
            return {"%s_%s" % (prefix, f): getattr(report, f) for f in APE_FIELDS}

        attempt(["ape_%s" % f for f in APE_FIELDS], lambda: ape_columns("ape", scan_matched()[1]))
        attempt(["ape_gt_%s" % f for f in APE_FIELDS], lambda: ape_columns("ape_gt", ref.trajectory()))

        def iou():
            est, ref_est = scan_matched()
            return m.map_iou(
                m.rasterize_map(pred, est, cfg.map_resolution, cfg.map_threshold),
                m.rasterize_map(ref, ref_est, cfg.map_resolution, cfg.map_threshold),
            )

        attempt(["iou"], iou)
        return values, reasons

    def run(self, seed, truth=None, kernel=None):
        truth = truth if truth is not None else self.simulate()
        degraded = self.degrade(truth, seed)
        fused, kernel = self.fuse(degraded, truth, kernel)
        values, reasons = self.evaluate(fused, truth)
        return values, reasons, kernel

    def run_seeds(self):
        """
        Run every configured seed against one ground-truth sequence. A
        temporal_conv kernel is trained on the first seed and reused.
        """
        truth = self.simulate()
        runs, kernel = [], None
        for seed in self.config.seeds:
            values, reasons, kernel = self.run(seed, truth, kernel)
            self.logger.info("Seed %d finished", seed)
            runs.append({"seed": seed, "metrics": values, "null_reasons": reasons})
        return average_runs(runs), runs, kernel

def average_runs(runs):
    """Mean of every metric over runs; a metric null in any run stays null."""
    values, reasons = {}, {}
    for name in METRIC_COLUMNS:
        samples = [run["metrics"].get(name) for run in runs]
        if any(s is None for s in samples):
            values[name] = None
            reasons[name] = next(run["null_reasons"].get(name, "missing") for run in runs
                                 if run["metrics"].get(name) is None)
        else:
            values[name] = float(np.mean(samples))
    return values, reasons

def expand_matrix(matrix):
    """Cartesian product of ``{dotted.key: [values]}`` as lists of ``key=value`` overrides."""
    if not matrix:
        raise ConfigException("ablation matrix is empty")
    for key, options in matrix.items():
        if not isinstance(options, list) or not options:
            raise ConfigException("ablation axis %r must be a non-empty list" % key)
    keys = list(matrix)
    return [
        [(key, value) for key, value in zip(keys, combination)]
        for combination in itertools.product(*(matrix[k] for k in keys))
    ]

def _run_row(config_dict):
    values, reasons = Pipeline(RunConfig.from_dict(config_dict)).run_seeds()[0]
    return values, reasons

class AblationRunner(object):
    """
    Runs the full pipeline for every row of an ablation matrix and relates
    the temporal metrics to the positional error across rows.
    """

    def __init__(self, base: RunConfig, matrix, jobs=1):
        super(AblationRunner, self).__init__()
        self.logger = logging.getLogger(self.__class__.__name__)

        self.base = base
        self.matrix = dict(matrix)
        self.axes = list(matrix)
        self.rows = expand_matrix(matrix)
        self.jobs = max(1, int(jobs))

    def row_configs(self):
        configs = []
        for row in self.rows:
            data = self.base.to_dict()
            for key, value in row:
                apply_override(data, "%s=%s" % (key, json.dumps(value)))
            configs.append(RunConfig.from_dict(data).to_dict())
        return configs

    @property
    def columns(self):
        return ["row"] + self.axes + list(METRIC_COLUMNS)

    def run(self):
        configs = self.row_configs()
        self.logger.info("Running %d ablation rows with %d job(s)", len(configs), self.jobs)
        if self.jobs > 1:
            with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                results = list(pool.map(_run_row, configs))
        else:
            results = [_run_row(c) for c in configs]

        rows, null_reasons = [], {}
        for i, (row, (values, reasons)) in enumerate(zip(self.rows, results)):
            record = {"row": i}
            record.update({key: value for key, value in row})
            record.update(values)
            rows.append(record)
            if reasons:
                null_reasons[str(i)] = reasons
            self.logger.info("Ablation row %d/%d finished", i + 1, len(self.rows))
        return {
            "columns": self.columns,
            "rows": rows,
            "null_reasons": null_reasons,
            "correlations": correlate_rows(rows),
            "config": self.base.to_dict(),
            "matrix": self.matrix,
        }

def correlate_rows(rows, metrics=TEMPORAL_METRICS, target=APE_TARGET):
    """
    Pearson, Spearman and Kendall coefficients of each temporal metric
    against ``target`` over the rows where both are defined.
    """
    results = {}
    for metric in metrics:
        pairs = [(r[metric], r[target]) for r in rows
                 if r.get(metric) is not None and r.get(target) is not None]
        entry = {}
        for name, fn in CORRELATIONS:
            if len(pairs) < 3:
                entry[name] = None
                entry["%s_reason" % name] = "need at least 3 rows with %s and %s, have %d" % (metric, target, len(pairs))
                continue
            try:
                entry[name] = fn([p[0] for p in pairs], [p[1] for p in pairs]).to_dict()
            except StatisticsException as e:
                entry[name] = None
                entry["%s_reason" % name] = str(e)
        results["%s_vs_%s" % (metric, target)] = entry
    return results
