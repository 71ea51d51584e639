"""JSON run configuration: declarative, fully defaulted, strict on unknown fields."""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass, field
from typing import get_args, get_origin, get_type_hints

from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid or unknown configuration content; names the offending field."""


@dataclass(frozen=True)
class DataGenConfig:
    n_source: int = 200
    n_target: int = 200
    size: int = 64
    seed: int = 0
    source_path: str = "source.kdgd"
    target_path: str = "target.kdgd"


@dataclass(frozen=True)
class EvalConfig:
    runs_root: str = "grid"
    source_path: str = "source.kdgd"
    target_path: str = "target.kdgd"
    max_samples: int = 0  # 0 -> all samples


@dataclass(frozen=True)
class ExportConfig:
    run_dir: str = ""
    dataset_path: str = "source.kdgd"
    sample_ids: tuple[int, ...] = ()
    count: int = 1  # used when sample_ids is empty: first `count` samples


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "runs"
    data: DataGenConfig = field(default_factory=DataGenConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    export: ExportConfig = field(default_factory=ExportConfig)


def to_plain_dict(obj):
    """Dataclass tree -> JSON-serializable dict (enums by value, tuples as lists)."""
    if dataclasses.is_dataclass(obj):
        return {f.name: to_plain_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [to_plain_dict(v) for v in obj]
    return obj


def _convert(tp, value, path: str):
    origin = get_origin(tp)
    if origin is not None and str(tp).startswith("typing.Optional") is False and origin in (tuple, list):
        args = get_args(tp)
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        if origin is tuple:
            elem = args[0] if args else float
            return tuple(_convert(elem, v, f"{path}[{i}]") for i, v in enumerate(value))
        elem = args[0] if args else float
        return [_convert(elem, v, f"{path}[{i}]") for i, v in enumerate(value)]
    if origin is not None:  # Optional / unions: try each arm
        last = None
        for arm in get_args(tp):
            if arm is type(None):
                if value is None:
                    return None
                continue
            try:
                return _convert(arm, value, path)
            except (ConfigError, TypeError, ValueError) as exc:
                last = exc
        raise ConfigError(f"{path}: no matching type for {value!r}") from last
    if dataclasses.is_dataclass(tp):
        return dataclass_from_dict(tp, value, path)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(value)
        except ValueError as exc:
            raise ConfigError(
                f"{path}: {value!r} is not one of {[e.value for e in tp]}"
            ) from exc
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def dataclass_from_dict(cls, data, path: str = "config"):
    """Build a dataclass from nested dicts, rejecting unknown fields."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {data!r}")
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _convert(hints[f.name], data[f.name], f"{path}.{f.name}")
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def run_config_from_json(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return dataclass_from_dict(RunConfig, data, "config")


def run_config_to_json(config: RunConfig) -> str:
    return json.dumps(to_plain_dict(config), indent=2) + "\n"


def load_run_config(path=None, seed: int | None = None, out_dir: str | None = None) -> RunConfig:
    """Load a RunConfig from a file (or defaults) and apply flag overrides.

    The ``--seed`` flag is the master seed: it overrides the run seed and
    propagates to the data and training seeds.
    """
    if path is None:
        config = RunConfig()
    else:
        config = run_config_from_json(open(path).read())
    if seed is not None:
        config = dataclasses.replace(
            config,
            seed=seed,
            data=dataclasses.replace(config.data, seed=seed),
            train=dataclasses.replace(config.train, seed=seed),
        )
    if out_dir is not None:
        config = dataclasses.replace(config, out_dir=out_dir)
    return config
