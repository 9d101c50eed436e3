"""Run configuration: one JSON document with a section per stage.

The top-level ``seed`` is the single source of randomness for a run; it is
copied into the split, autoencoder and classifier seeds when a run resolves.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .classifier import ClassifierConfig, PipelineConfig
from .mfcc import MfccConfig
from .rearrange import RearrangeConfig
from .reduce import AutoencoderConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class IngestConfig:
    min_samples: int = 4
    ratios: tuple[float, float, float] = (0.7, 0.2, 0.1)
    normalize_labels: bool = True

    def validate(self) -> None:
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios) or abs(sum(self.ratios) - 1) > 1e-9:
            raise ValueError(f"ratios must be 3 non-negative numbers summing to 1, got {self.ratios}")


@dataclass(frozen=True)
class EvalConfig:
    dataset: str = "dataset"
    split: str = "test"

    def validate(self) -> None:
        if self.split not in ("train", "val", "test"):
            raise ValueError(f"split must be train, val or test, got {self.split!r}")


@dataclass(frozen=True)
class ClusterConfig:
    linkage: str = "average"
    mode: str = "species"  # species: one leaf per class mean; clip: one leaf per clip

    def validate(self) -> None:
        if self.linkage not in ("average", "single", "complete"):
            raise ValueError(f"unknown linkage {self.linkage!r}")
        if self.mode not in ("species", "clip"):
            raise ValueError(f"mode must be species or clip, got {self.mode!r}")


@dataclass(frozen=True)
class RunConfig:
    ingest: IngestConfig = IngestConfig()
    mfcc: MfccConfig = MfccConfig()
    rearrange: RearrangeConfig = RearrangeConfig()
    reduce: AutoencoderConfig = AutoencoderConfig()
    classifier: ClassifierConfig = ClassifierConfig()
    eval: EvalConfig = EvalConfig()
    cluster: ClusterConfig = ClusterConfig()
    seed: int = 0
    out: str = "runs"

    def validate(self) -> None:
        for f in fields(self):
            section = getattr(self, f.name)
            if f.name == "reduce":
                continue  # input_dim is tied to rearrange.max_dim; checked via the pipeline
            if hasattr(section, "validate"):
                try:
                    section.validate()
                except ValueError as exc:
                    raise ConfigError(f"{f.name}: {exc}") from None
        try:
            self.pipeline().validate()
        except ValueError as exc:
            raise ConfigError(f"pipeline: {exc}") from None

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            self.rearrange,
            replace(self.reduce, input_dim=self.rearrange.max_dim, seed=self.seed),
            replace(self.classifier, seed=self.seed),
        )

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _coerce(cls, name: str, value):
    """Build the dataclass field ``name`` of ``cls`` from JSON ``value``."""
    ftype = {f.name: f for f in fields(cls)}[name]
    default = getattr(cls(), name)
    if dataclasses.is_dataclass(default):
        if not isinstance(value, dict):
            raise ConfigError(f"{name}: expected an object")
        return _build(type(default), value, prefix=name + ".")
    if isinstance(default, tuple) or "tuple" in str(ftype.type):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name}: expected a list")
        return tuple(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false")
        return value
    if isinstance(default, int) and not isinstance(value, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer")
        return value
    if isinstance(default, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    return value


def _build(cls, doc: dict, prefix: str = ""):
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"unknown config field {prefix}{sorted(unknown)[0]}")
    kwargs = {}
    for k, v in doc.items():
        try:
            kwargs[k] = _coerce(cls, k, v)
        except ConfigError as exc:
            msg = str(exc)
            raise ConfigError(msg if msg.startswith(prefix) else prefix + msg) from None
    return cls(**kwargs)


def from_dict(doc: dict) -> RunConfig:
    return _build(RunConfig, doc)


def load(path: str | os.PathLike | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None


def apply_override(doc: dict, assignment: str) -> dict:
    """``section.field=value`` with ``value`` parsed as JSON (bare strings allowed)."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like section.field=value")
    key, raw = assignment.split("=", 1)
    try:
        value: Any = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = doc
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key}: {p} is not a section")
    node[parts[-1]] = value
    return doc


def resolve(path=None, overrides=(), **top) -> RunConfig:
    """Load, apply ``--set`` overrides and top-level flags (flags win), validate."""
    doc = load(path)
    for o in overrides:
        apply_override(doc, o)
    for k, v in top.items():
        if v is not None:
            doc[k] = v
    cfg = from_dict(doc)
    cfg.validate()
    return cfg
