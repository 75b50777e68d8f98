'''
@author: tempo-bench developers
'''
import contextlib
import json
import pathlib
import tempfile
import unittest

from tempo_bench import config
from tempo_bench.exceptions import ConfigException, DatasetMissingException

@contextlib.contextmanager
def config_file(data):
    with tempfile.TemporaryDirectory() as d:
        path = pathlib.Path(d) / "run.json"
        path.write_text(data if isinstance(data, str) else json.dumps(data))
        yield path

class LoadConfigTest(unittest.TestCase):
    def test_defaults(self):
        cfg = config.load_config()
        self.assertEqual(cfg, config.RunConfig())
        self.assertEqual(cfg.world.preset, "corridor")
        self.assertEqual(cfg.seeds, (0,))
        self.assertEqual(len(cfg.degradation), 1)

    def test_dict_round_trip(self):
        cfg = config.load_config(overrides=["fusion.mode=\"temporal_conv\"", "seeds=[3, 4]"])
        self.assertEqual(config.RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))), cfg)

    def test_file_is_merged_with_defaults(self):
        with config_file({"fusion": {"mode": "window_average", "window": 3}, "seeds": [1, 2]}) as path:
            cfg = config.load_config(path)
        self.assertEqual(cfg.fusion.mode, "window_average")
        self.assertEqual(cfg.fusion.window, 3)
        self.assertEqual(cfg.fusion.init, "average")
        self.assertEqual(cfg.seeds, (1, 2))
        self.assertEqual(cfg.trajectory, config.RunConfig().trajectory)

    def test_degradation_list(self):
        data = {"degradation": [{"gaussian_sigma": 0.1}, {"jitter_sigma": 2.0, "seed": 4}]}
        with config_file(data) as path:
            cfg = config.load_config(path, ["degradation.jitter_sigma=1"])
        self.assertEqual([m.jitter_sigma for m in cfg.degradation], [1, 1])
        self.assertEqual(cfg.degradation[0].gaussian_sigma, 0.1)
        self.assertEqual(cfg.degradation[1].seed, 4)

    def test_degradation_object(self):
        with config_file({"degradation": {"ghost_count": 2, "ghost_gain": 0.5}}) as path:
            cfg = config.load_config(path)
        self.assertEqual(len(cfg.degradation), 1)
        self.assertEqual(cfg.degradation[0].ghost_count, 2)

    def test_overrides(self):
        cfg = config.load_config(overrides=[
            "fusion.window=7",
            "fusion.loss.w_T=0.5",
            "world.preset=room",
            "degradation.0.seed=5",
            "metrics.embedding_shape=[4, 4]",
        ])
        self.assertEqual(cfg.fusion.window, 7)
        self.assertEqual(cfg.fusion.loss.w_T, 0.5)
        self.assertEqual(cfg.world.preset, "room")
        self.assertEqual(cfg.degradation[0].seed, 5)
        self.assertEqual(cfg.metrics.embedding_shape, (4, 4))

    def test_missing_file(self):
        with self.assertRaises(DatasetMissingException):
            config.load_config("/nonexistent/run.json")

    def test_invalid_json(self):
        with config_file("{not json") as path:
            with self.assertRaises(ConfigException):
                config.load_config(path)
        with config_file("[1, 2]") as path:
            with self.assertRaises(ConfigException):
                config.load_config(path)

    def test_unknown_fields(self):
        with self.assertRaises(ConfigException):
            config.load_config(overrides=["fusion.size=3"])
        with self.assertRaises(ConfigException):
            config.RunConfig.from_dict({"plugins": {}})
        with self.assertRaises(ConfigException):
            config.RunConfig.from_dict({"fusion": {"trainer": {"epochs": 3}}})

    def test_invalid_values(self):
        with self.assertRaises(ConfigException):
            config.load_config(overrides=["world.preset=garden"])
        with self.assertRaises(ConfigException):
            config.load_config(overrides=["trajectory.n_frames=1"])
        with self.assertRaises(ConfigException):
            config.load_config(overrides=["seeds=[]"])
        with self.assertRaises(ConfigException):
            config.load_config(overrides=["seeds=\"one\""])

class OverrideTest(unittest.TestCase):
    def test_malformed(self):
        for assignment in ("fusion.window", "=3", "nothing.window=3", "degradation.9.seed=1"):
            with self.assertRaises(ConfigException):
                config.apply_override(config.RunConfig().to_dict(), assignment)

    def test_parse_value(self):
        self.assertEqual(config.parse_value("3"), 3)
        self.assertEqual(config.parse_value("0.5"), 0.5)
        self.assertEqual(config.parse_value("true"), True)
        self.assertEqual(config.parse_value("[1, 2]"), [1, 2])
        self.assertEqual(config.parse_value("corridor"), "corridor")
