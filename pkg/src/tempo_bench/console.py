'''
Command line interface: one subcommand per pipeline stage plus the
ablation driver and figure rendering.

Exit codes: 0 on success, 2 on configuration errors, 3 on data errors.

@author: tempo-bench developers
'''
import argparse
import dataclasses
import json
import logging
import os
import pathlib
import socket
import sys
import urllib.parse
from logging.handlers import SysLogHandler

import numpy as np

import tempo_bench
from tempo_bench import formats
from tempo_bench.config import load_config, parse_value
from tempo_bench.exceptions import AppException, ConfigException, DatasetMissingException
from tempo_bench.fusion import FUSION_MODES, FusionKernel
from tempo_bench.metrics import ape, track_grid
from tempo_bench.pipeline import AblationRunner, Pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

KERNEL_NAME = "kernel.json"

class SyslogArguments(object):
    """Syslog target: a unix socket path, or ``tcp://`` / ``udp://`` host with an optional port."""
    sockets = {"tcp": socket.SOCK_STREAM, "udp": socket.SOCK_DGRAM, "unix": None, "": None}

    def __init__(self, target):
        super(SyslogArguments, self).__init__()
        uri = urllib.parse.urlparse(target)
        if uri.scheme not in self.sockets:
            raise argparse.ArgumentTypeError("Unsupported scheme %r" % uri.scheme)
        self.socket = self.sockets[uri.scheme]
        network = self.socket is not None
        self.hostname = uri.hostname if network else None
        self.port = (uri.port or 514) if network else None
        self.path = None if network else uri.path

    def handler(self, prog):
        address = self.path if self.socket is None else (self.hostname, self.port)
        h = SysLogHandler(address=address, facility=SysLogHandler.LOG_USER, socktype=self.socket)
        h.setFormatter(logging.Formatter(prog + ' [%(name)s] %(message)s', '%b %e %H:%M:%S'))
        return h

def as_syslog(x):
    if x.lower() in ("true", "yes", "1", "y"):
        return SyslogArguments("/dev/log")
    if x.lower() in ("false", "no", "0", "n"):
        return None
    return SyslogArguments(x)

ENVIRONMENT = {
    "TEMPO_BENCH_OUTPUT_ROOT": ("output_root", str),
    "TEMPO_BENCH_VERBOSITY": ("verbose", int),
    "TEMPO_BENCH_SYSLOG": ("syslog", as_syslog),
}

def apply_environment(conf, environ=None):
    """Fill options not given on the command line from environment variables."""
    environ = os.environ if environ is None else environ
    for env_name, (conf_key, value_normalizer) in ENVIRONMENT.items():
        value = environ.get(env_name)
        if not value or getattr(conf, conf_key, None):
            continue
        try:
            setattr(conf, conf_key, value_normalizer(value))
        except Exception as e:
            raise ConfigException("Error on parsing %s: %r" % (env_name, value)) from e
    return conf

def _add_dataset_output(p, default):
    p.add_argument('--out', '-o', default=default, help="output dataset directory, defaults to %r under the output root" % default)

def parse_commandline(argv):

    p = argparse.ArgumentParser(
        prog="tempo-bench" if argv[0].endswith(".py") else os.path.basename(argv[0]),
        description=tempo_bench.__description__
    )
    p.add_argument('--config', '-c', default=None, help="run configuration JSON file")
    p.add_argument('--set', dest="overrides", default=None, action="append", metavar="SECTION.FIELD=VALUE",
                   help="override a configuration value (parsed as JSON), can be used multiple times")
    p.add_argument('--output-root', default=None, help="directory relative outputs are written to, defaults to the configured output_dir")
    p.add_argument('--verbose', '-v', default=0, action="count", help="give more output - option is additive, and can be used up to 3 times")
    p.add_argument('--syslog', nargs="?", const=SyslogArguments("/dev/log"), type=SyslogArguments,
                   help="enable logging to syslog, defaults to \"/dev/log\", you can provide path to unix socket or uri: <tcp|udp|unix>://<path_or_host>[:<port>]")

    commands = p.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    s = commands.add_parser('simulate', help="render a ground-truth sequence")
    _add_dataset_output(s, "truth")

    s = commands.add_parser('degrade', help="degrade a dataset with the configured model(s)")
    s.add_argument('input', help="ground-truth dataset directory")
    s.add_argument('--seed', type=int, default=None, help="degradation seed, defaults to the first configured seed")
    _add_dataset_output(s, "degraded")

    s = commands.add_parser('fuse', help="temporally fuse a dataset")
    s.add_argument('input', help="degraded dataset directory")
    s.add_argument('--mode', choices=FUSION_MODES, default=None, help="fusion mode, defaults to the configured one")
    s.add_argument('--window', type=int, default=None, help="fusion window size")
    s.add_argument('--truth', default=None, help="paired ground-truth dataset used to train temporal_conv")
    s.add_argument('--kernel', default=None, help="use a saved %s instead of training" % KERNEL_NAME)
    s.add_argument('--no-train', dest="train", default=True, action="store_false", help="use the initial kernel without training")
    _add_dataset_output(s, "fused")

    s = commands.add_parser('slam', help="scan-match a dataset into a trajectory")
    s.add_argument('input', help="dataset directory")
    s.add_argument('--out', '-o', default=None, help="trajectory CSV, defaults to estimated.csv in the dataset directory")
    s.add_argument('--svg', default=None, help="trajectory overlay, defaults to the CSV path with .svg suffix")

    s = commands.add_parser('eval', help="compute every metric of a prediction against a reference")
    s.add_argument('pred', help="predicted dataset directory")
    s.add_argument('ref', help="reference dataset directory")
    s.add_argument('--out', '-o', default="report.json", help="report path")

    s = commands.add_parser('ablate', help="run the pipeline over a configuration matrix")
    s.add_argument('--matrix', default=None, help="JSON object mapping section.field to a list of values")
    s.add_argument('--axis', default=None, action="append", metavar="SECTION.FIELD=JSONLIST", help="add a matrix axis, can be used multiple times")
    s.add_argument('--jobs', '-j', type=int, default=1, help="worker processes")
    s.add_argument('--out', '-o', default="ablation", help="output directory for ablation.csv and ablation.json")

    s = commands.add_parser('report', help="render figures for a dataset")
    s.add_argument('input', help="dataset directory")
    s.add_argument('--trajectory', default=None, action="append", metavar="LABEL=CSV", help="extra trajectory to overlay, can be used multiple times")
    s.add_argument('--frames', type=int, default=4, help="number of frame snapshots")
    s.add_argument('--out', '-o', default="figures", help="figure directory")

    conf = p.parse_args(args=argv[1:])
    conf.prog = p.prog
    return conf

class Console(object):
    def __init__(self, conf):
        super(Console, self).__init__()
        self.logger = logging.getLogger('console')

        self.conf = conf
        self.run_config = load_config(conf.config, conf.overrides or ())
        self.store = formats.DatasetStore(conf.output_root or self.run_config.output_dir)
        self.pipeline = Pipeline(self.run_config)

    def provenance(self, stage, **extra):
        data = {"stage": stage, "config": self.run_config.to_dict()}
        data.update(extra)
        return data

    def cmd_simulate(self):
        truth = self.pipeline.simulate()
        self.store.write(truth, self.conf.out, self.provenance("simulate"))

    def cmd_degrade(self):
        seed = self.conf.seed if self.conf.seed is not None else self.run_config.seeds[0]
        truth = self.store.read(self.conf.input)
        degraded = self.pipeline.degrade(truth, seed)
        source = self.store.manifest(self.conf.input).seed_provenance
        self.store.write(degraded, self.conf.out, self.provenance("degrade", seed=seed, source=source))

    def cmd_fuse(self):
        fusion = self.run_config.fusion
        changes = {}
        if self.conf.mode is not None:
            changes["mode"] = self.conf.mode
        if self.conf.window is not None:
            changes["window"] = self.conf.window
        if not self.conf.train:
            changes["train"] = False
        if changes:
            fusion = dataclasses.replace(fusion, **changes)
        pipeline = Pipeline(self.run_config.replace(fusion=fusion))

        seq = self.store.read(self.conf.input)
        kernel = None
        if self.conf.kernel:
            kernel = FusionKernel.from_dict(self._read_json(self.conf.kernel))
        truth = self.store.read(self.conf.truth) if self.conf.truth else None

        fused, kernel = pipeline.fuse(seq, truth, kernel)
        source = self.store.manifest(self.conf.input).seed_provenance
        extra = {"source": source, "mode": fusion.mode, "window": fusion.window}
        if "seed" in source:
            extra["seed"] = source["seed"]
        out = self.store.write(fused, self.conf.out, self.provenance("fuse", **extra))
        if kernel is not None:
            formats.write_json(kernel.to_dict(), out / KERNEL_NAME)
            self.logger.info("Saved fusion kernel to %s", out / KERNEL_NAME)

    def cmd_slam(self):
        seq = self.store.read(self.conf.input)
        estimated = self.pipeline.slam(seq)
        if self.conf.out:
            out = self.store.resolve(self.conf.out)
        else:
            out = self.store.resolve(self.conf.input) / "estimated.csv"
        formats.write_trajectory_csv(estimated, out)
        svg = self.store.resolve(self.conf.svg) if self.conf.svg else out.with_suffix(".svg")
        formats.emit_svg_trajectories([("ground truth", seq.trajectory()), ("estimated", estimated)], svg)
        error = ape(estimated, seq.trajectory())
        self.logger.info("Wrote trajectory to %s (APE mean %.4f m over %.3f m path)", out, error.mean,
                         seq.trajectory().path_length())

    def cmd_eval(self):
        pred = self.store.read(self.conf.pred)
        ref = self.store.read(self.conf.ref)
        values, reasons = self.pipeline.evaluate(pred, ref)

        pred_provenance = self.store.manifest(self.conf.pred).seed_provenance
        report = formats.EvalReport(
            config={
                "metrics": self.run_config.to_dict()["metrics"],
                "pred": pred_provenance,
                "ref": self.store.manifest(self.conf.ref).seed_provenance,
            },
            seeds=[pred_provenance["seed"]] if "seed" in pred_provenance else [],
        )
        for name, value in values.items():
            if value is None:
                report.set_null(name, reasons[name])
            else:
                report.set(name, value)
        out = self.store.resolve(self.conf.out)
        formats.write_report(report, out)
        self.logger.info("Wrote evaluation report to %s", out)

    def cmd_ablate(self):
        matrix = self._read_json(self.conf.matrix) if self.conf.matrix else {}
        if not isinstance(matrix, dict):
            raise ConfigException("ablation matrix must be a JSON object")
        for axis in self.conf.axis or ():
            key, sep, values = axis.partition("=")
            values = parse_value(values)
            if not sep or not isinstance(values, list):
                raise ConfigException("axis %r is not of the form section.field=[values]" % axis)
            matrix[key.strip()] = values

        runner = AblationRunner(self.run_config, matrix, self.conf.jobs)
        result = runner.run()
        out = self.store.resolve(self.conf.out)
        formats.write_ablation_csv(result["rows"], result["columns"], out / "ablation.csv")
        formats.write_json(result, out / "ablation.json")
        self.logger.info("Wrote %d ablation rows to %s", len(result["rows"]), out)

    def cmd_report(self):
        seq = self.store.read(self.conf.input)
        out = self.store.resolve(self.conf.out)
        count = max(1, min(self.conf.frames, len(seq)))
        for i in sorted(set(np.linspace(0, len(seq) - 1, count).round().astype(int).tolist())):
            formats.emit_pgm(seq[i].heatmap, out / ("frame_%06d.pgm" % i))

        trajectories = [("ground truth", seq.trajectory())]
        for item in self.conf.trajectory or ():
            label, sep, path = item.partition("=")
            if not sep:
                label, path = pathlib.Path(item).stem, item
            trajectories.append((label, formats.read_trajectory_csv(path)))
        formats.emit_svg_trajectories(trajectories, out / "trajectories.svg")

        cfg = self.run_config.metrics
        tracks = track_grid(seq, cfg.track_spacing, cfg.window_radius, cfg.lk_iterations)
        formats.emit_svg_tracks(tracks, seq.geometry.shape, out / "tracks.svg")
        self.logger.info("Wrote figures to %s", out)

    def _read_json(self, path):
        path = pathlib.Path(path)
        if not path.is_file():
            raise DatasetMissingException("%s does not exist" % path)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except ValueError as e:
            raise ConfigException("%s is not valid JSON: %s" % (path, e))

    def run(self):
        getattr(self, "cmd_%s" % self.conf.command)()

def setup_logging(conf):
    levels = [
        logging.ERROR,
        logging.WARNING,
        logging.INFO,
        logging.DEBUG
    ]

    handlers = [conf.syslog.handler(conf.prog)] if conf.syslog else None

    logging.basicConfig(level=levels[min(conf.verbose, len(levels)-1)], handlers=handlers)

def execute_with_configuration(conf):
    setup_logging(conf)
    logger = logging.getLogger('console')
    try:
        Console(conf).run()
    except ConfigException as e:
        logger.error("%s", e)
        if conf.verbose >= 3:
            logger.exception(e)
        return EXIT_CONFIG
    except AppException as e:
        logger.error("%s", e)
        if conf.verbose >= 3:
            logger.exception(e)
        return EXIT_DATA
    return EXIT_OK

def execute(argv = None):
    if argv is None:
        argv = sys.argv
    conf = parse_commandline(argv)
    try:
        apply_environment(conf)
    except ConfigException as e:
        sys.stderr.write("%s: %s\n" % (conf.prog, e))
        return EXIT_CONFIG
    return execute_with_configuration(conf)
