"""Run configuration: one file drives every pipeline stage.

The digest covers every setting except filesystem locations, so moving a
run directory does not break chained commands but changing any
hyperparameter does.
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import MissingFile, SchemaViolation
from .facepipe.dataset import PipelineConfig
from .trainer import TrainConfig

DATASET_ROOT_ENV = "DFDETECT_DATASET_ROOT"

DEFAULTS = {
    "seed": 0,
    "backbone_id": "reference-small",
    "pretrained": False,
    "split": {"test_fraction": 0.2, "val_fraction": 0.2},
    "pipeline": {
        "threshold": 0.8,
        "max_qualifying": 500,
        "margin_fraction": 0.1,
        "means": [0.485, 0.456, 0.406],
        "stds": [0.229, 0.224, 0.225],
    },
    "detector": {"kind": "lookup", "path": None},
    "train": {
        "learning_rate": 1e-4,
        "weight_decay": 5e-3,
        "batch_size": 32,
        "epochs": 80,
        "val_every": 1,
        "finetune_scope": "all",
        "loss": "cross_entropy",
        "optimizer": "adam",
    },
    "evaluate": {"decision_threshold": 0.5, "checkpoint": "best"},
    "workers": 1,
    "paths": {"manifest": None, "dataset_root": None, "run_dir": "run"},
}


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise SchemaViolation(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise SchemaViolation(f"config key {where}{key!r} must be a mapping")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def parse_override(text: str) -> dict:
    """``train.epochs=5`` -> ``{"train": {"epochs": 5}}`` (value parsed as YAML)."""
    if "=" not in text:
        raise SchemaViolation(f"override {text!r} is not of the form key.path=value")
    dotted, raw = text.split("=", 1)
    value = yaml.safe_load(raw) if raw else None
    for part in reversed(dotted.strip().split(".")):
        value = {part: value}
    return value


@dataclass
class RunConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path=None, overrides=(), seed=None, out=None, env=None) -> "RunConfig":
        env = os.environ if env is None else env
        data = copy.deepcopy(DEFAULTS)
        base_dir = Path.cwd()
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise MissingFile(f"config file not found: {path}")
            try:
                loaded = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
            except yaml.YAMLError as exc:
                raise SchemaViolation(f"config {path} is not valid YAML: {exc}") from None
            if not isinstance(loaded, dict):
                raise SchemaViolation(f"config {path} must be a mapping")
            data = _merge(data, loaded)
            base_dir = path.resolve().parent
        for text in overrides:
            data = _merge(data, parse_override(text))
        if seed is not None:
            data["seed"] = int(seed)
        if out is not None:
            data["paths"]["run_dir"] = str(Path(out).resolve())
        if env.get(DATASET_ROOT_ENV):
            data["paths"]["dataset_root"] = str(Path(env[DATASET_ROOT_ENV]).resolve())
        cfg = cls(data, base_dir)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        try:
            self.pipeline_config()
            self.train_config()
            split = self.data["split"]
            if not 0 < float(split["test_fraction"]) < 1:
                raise ValueError("split.test_fraction must be in (0, 1)")
            if not 0 <= float(split["val_fraction"]) < 1:
                raise ValueError("split.val_fraction must be in [0, 1)")
            if not 0 < float(self.data["evaluate"]["decision_threshold"]) < 1:
                raise ValueError("evaluate.decision_threshold must be in (0, 1)")
            if self.data["evaluate"]["checkpoint"] not in ("best", "last"):
                raise ValueError("evaluate.checkpoint must be 'best' or 'last'")
        except (TypeError, ValueError) as exc:
            raise SchemaViolation(f"invalid configuration: {exc}") from None

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def pipeline_config(self) -> PipelineConfig:
        p = self.data["pipeline"]
        return PipelineConfig(
            threshold=float(p["threshold"]),
            max_qualifying=int(p["max_qualifying"]),
            margin_fraction=float(p["margin_fraction"]),
            means=tuple(p["means"]),
            stds=tuple(p["stds"]),
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)} - {"seed"}
        values = {k: v for k, v in self.data["train"].items() if k in names}
        return TrainConfig(seed=self.seed, **values)

    def path(self, key: str) -> Path | None:
        raw = self.data["paths"].get(key)
        if raw is None:
            return None
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def run_dir(self) -> Path:
        return self.path("run_dir")

    @property
    def dataset_root(self) -> Path:
        return self.path("dataset_root") or self.run_dir / "dataset"

    @property
    def detector_path(self) -> Path | None:
        raw = self.data["detector"].get("path")
        if raw is None:
            return None
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p

    def digest_payload(self) -> dict:
        payload = copy.deepcopy(self.data)
        payload.pop("paths")
        payload["detector"].pop("path", None)
        payload.pop("workers", None)
        return payload

    def digest(self) -> str:
        blob = json.dumps(self.digest_payload(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"
