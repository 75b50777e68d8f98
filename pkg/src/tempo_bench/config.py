'''
Run configuration: one JSON document, optionally patched with
``section.field=value`` overrides, validated into frozen records.

@author: tempo-bench developers
'''
import copy
import dataclasses
import json
import pathlib
from dataclasses import dataclass, field
from typing import Tuple

from tempo_bench.exceptions import AppException, ConfigException, DatasetMissingException
from tempo_bench.fusion import FusionConfig, LossWeights, TrainerConfig
from tempo_bench.heatmap import SensorGeometry
from tempo_bench.metrics import MetricConfig
from tempo_bench.simulator import PRESETS, DegradationModel, TrajectoryConfig

SECTIONS = ("world", "trajectory", "geometry", "degradation", "fusion", "metrics", "seeds", "output_dir")

@dataclass(frozen=True)
class WorldConfig(object):
    preset: str = "corridor"
    seed: int = 0

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigException("unknown world preset %r, expected one of %s" % (self.preset, ", ".join(PRESETS)))

def _record_dict(record):
    if hasattr(record, "to_dict"):
        return record.to_dict()
    return dataclasses.asdict(record)

def _build(cls, section, data):
    if not isinstance(data, dict):
        raise ConfigException("section %r must be an object, got %r" % (section, data))
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigException("unknown field(s) in %s: %s" % (section, ", ".join(unknown)))
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigException("invalid %s section: %s" % (section, e))

@dataclass(frozen=True)
class RunConfig(object):
    world: WorldConfig = field(default_factory=WorldConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    geometry: SensorGeometry = field(default_factory=SensorGeometry)
    degradation: Tuple[DegradationModel, ...] = (DegradationModel(),)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    metrics: MetricConfig = field(default_factory=MetricConfig)
    seeds: Tuple[int, ...] = (0,)
    output_dir: str = "runs"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigException("seeds must not be empty")
        if not self.degradation:
            raise ConfigException("at least one degradation model is required")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "degradation", tuple(self.degradation))

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigException("configuration must be a JSON object")
        unknown = sorted(set(data) - set(SECTIONS))
        if unknown:
            raise ConfigException("unknown configuration section(s): %s" % ", ".join(unknown))
        kwargs = {}
        if "world" in data:
            kwargs["world"] = _build(WorldConfig, "world", data["world"])
        if "trajectory" in data:
            kwargs["trajectory"] = _build(TrajectoryConfig, "trajectory", data["trajectory"])
        if "geometry" in data:
            kwargs["geometry"] = _build(SensorGeometry, "geometry", data["geometry"])
        if "degradation" in data:
            models = data["degradation"]
            if isinstance(models, dict):
                models = [models]
            if not isinstance(models, list):
                raise ConfigException("degradation must be an object or a list of objects")
            kwargs["degradation"] = tuple(_build(DegradationModel, "degradation", m) for m in models)
        if "fusion" in data:
            fusion = dict(data["fusion"]) if isinstance(data["fusion"], dict) else data["fusion"]
            if isinstance(fusion, dict):
                if "loss" in fusion:
                    fusion["loss"] = _build(LossWeights, "fusion.loss", fusion["loss"])
                if "trainer" in fusion:
                    fusion["trainer"] = _build(TrainerConfig, "fusion.trainer", fusion["trainer"])
            kwargs["fusion"] = _build(FusionConfig, "fusion", fusion)
        if "metrics" in data:
            kwargs["metrics"] = _build(MetricConfig, "metrics", data["metrics"])
        if "seeds" in data:
            seeds = data["seeds"]
            if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
                raise ConfigException("seeds must be a list of integers")
            kwargs["seeds"] = tuple(seeds)
        if "output_dir" in data:
            kwargs["output_dir"] = str(data["output_dir"])
        return cls(**kwargs)

    def to_dict(self):
        return {
            "world": _record_dict(self.world),
            "trajectory": _record_dict(self.trajectory),
            "geometry": _record_dict(self.geometry),
            "degradation": [_record_dict(m) for m in self.degradation],
            "fusion": _record_dict(self.fusion),
            "metrics": _record_dict(self.metrics),
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
        }

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

def parse_value(text):
    """JSON literal if it parses, otherwise the plain string."""
    try:
        return json.loads(text)
    except ValueError:
        return text

def apply_override(data, assignment):
    """Apply one ``a.b.c=value`` assignment to a config dict in place."""
    key, sep, value = assignment.partition("=")
    if not sep or not key.strip():
        raise ConfigException("override %r is not of the form section.field=value" % assignment)
    parts = key.strip().split(".")
    target = data
    for i, part in enumerate(parts[:-1]):
        if isinstance(target, list):
            try:
                target = target[int(part)]
            except (ValueError, IndexError):
                raise ConfigException("override %r: bad list index %r" % (assignment, part))
        else:
            if part not in target or not isinstance(target[part], (dict, list)):
                raise ConfigException("override %r: unknown section %r" % (assignment, ".".join(parts[:i + 1])))
            target = target[part]
        if isinstance(target, list) and i == len(parts) - 2 and not parts[-1].isdigit():
            # a field set on a list of records applies to every record
            for item in target:
                item[parts[-1]] = parse_value(value)
            return data
    last = parts[-1]
    if isinstance(target, list):
        try:
            target[int(last)] = parse_value(value)
        except (ValueError, IndexError):
            raise ConfigException("override %r: bad list index %r" % (assignment, last))
    else:
        target[last] = parse_value(value)
    return data

def load_config(path=None, overrides=()) -> RunConfig:
    data = RunConfig().to_dict()
    if path is not None:
        path = pathlib.Path(path)
        if not path.is_file():
            raise DatasetMissingException("configuration file %s does not exist" % path)
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except ValueError as e:
            raise ConfigException("%s is not valid JSON: %s" % (path, e))
        if not isinstance(loaded, dict):
            raise ConfigException("%s must contain a JSON object" % path)
        for section, value in loaded.items():
            if isinstance(value, dict) and isinstance(data.get(section), dict):
                merged = copy.deepcopy(data[section])
                merged.update(value)
                data[section] = merged
            else:
                data[section] = value
    for assignment in overrides:
        apply_override(data, assignment)
    try:
        return RunConfig.from_dict(data)
    except ConfigException:
        raise
    except AppException as e:
        raise ConfigException(str(e))
