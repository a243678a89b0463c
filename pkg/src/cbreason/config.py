"""Run configuration: one structured file per run, flag overrides on top."""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any, Optional

import yaml

from .clients import STUB_REASONER_ID, STUB_REPORTER_ID


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "corpus": {
        "manifest": None,  # defaults to <workdir>/corpus/manifest.csv
        "bank": None,  # defaults to <workdir>/corpus/bank.csv
        "corpus_name": None,
        "label_set": ["benign", "malignant"],
        "k": 5,
        "seed": 0,
    },
    "enrichment": {
        "client_id": STUB_REPORTER_ID,
        "cache_dir": None,  # defaults to <workdir>/reports
        "guideline_modality": "ultrasound",
        "modality_text": "breast ultrasound",
        "type_of_guideline": "reporting",
        "auxiliary_template": None,
    },
    "model": {
        "embed_dim": 32,
        "vision_backbone": "tiny-cnn",
        "text_backbone": "hash-bow",
        "image_channels": 1,
        "temperature_init": 0.07,
        "temperature_learnable": True,
        "variant": "clip_mtl",
        "use_guideline_text": True,
        "weights": {"contrastive": 1.0, "diagnostic": 1.0, "concept": 1.0},
        "train": {
            "lr": 3e-3,
            "epochs": 30,
            "warmup_epochs": 3,
            "batch_size": 32,
            "weight_decay": 0.01,
            "early_stop_patience": None,
            "seed": 0,
        },
    },
    "reasoning": {
        "client_id": STUB_REASONER_ID,
        "guideline_modality": "ultrasound",
        "threshold": 0.5,
        "guideline_phrase": "BI-RADS clinical",
    },
    "output_dir": None,
}


def _merge(base: dict, override: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config field '{dotted}'")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, prefix=f"{dotted}.")
        else:
            out[key] = value
    return out


def _require(cond: bool, field: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"field '{field}': {message}")


def _validate(cfg: dict) -> None:
    train = cfg["model"]["train"]
    _require(isinstance(cfg["corpus"]["k"], int) and cfg["corpus"]["k"] >= 2, "corpus.k", "must be an integer >= 2")
    _require(train["lr"] > 0, "model.train.lr", "must be > 0")
    _require(
        isinstance(train["epochs"], int) and train["epochs"] >= 1, "model.train.epochs", "must be an integer >= 1"
    )
    _require(
        0 <= train["warmup_epochs"] < train["epochs"],
        "model.train.warmup_epochs",
        "must satisfy 0 <= warmup < epochs",
    )
    _require(train["batch_size"] >= 1, "model.train.batch_size", "must be >= 1")
    patience = train["early_stop_patience"]
    _require(
        patience is None or (isinstance(patience, int) and patience >= 1),
        "model.train.early_stop_patience",
        "must be null (disabled) or an integer >= 1",
    )
    _require(
        cfg["model"]["variant"] in ("clip_mtl", "clip_cbl", "cbm_sequential"),
        "model.variant",
        "must be one of clip_mtl, clip_cbl, cbm_sequential",
    )
    for name, value in cfg["model"]["weights"].items():
        _require(value >= 0, f"model.weights.{name}", "must be >= 0")
    _require(cfg["model"]["embed_dim"] > 0, "model.embed_dim", "must be > 0")
    _require(cfg["model"]["temperature_init"] > 0, "model.temperature_init", "must be > 0")
    _require(0 < cfg["reasoning"]["threshold"] <= 1, "reasoning.threshold", "must be in (0, 1]")
    _require(len(cfg["corpus"]["label_set"]) >= 2, "corpus.label_set", "must list at least two labels")


def load_run_config(path: Optional[Path | str] = None, overrides: Optional[dict] = None) -> dict:
    """Merge defaults <- config file <- overrides, then validate.

    Unknown fields and out-of-range values raise ConfigError naming the dotted
    field path.
    """
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        loaded = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        cfg = _merge(cfg, loaded)
    if overrides:
        cfg = _merge(cfg, overrides)
    _validate(cfg)
    return cfg


def snapshot_config(cfg: dict, source_path: Optional[Path | str], run_dir: Path | str) -> Path:
    """Write the config into the run directory: the source file verbatim when one
    was given, plus the fully resolved effective config."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    if source_path is not None:
        snapshot = run_dir / "config_snapshot.yaml"
        snapshot.write_bytes(Path(source_path).read_bytes())
    effective = run_dir / "config_effective.yaml"
    effective.write_text(yaml.safe_dump(cfg, sort_keys=True), encoding="utf-8")
    return effective
