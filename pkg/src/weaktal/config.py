"""Experiment configuration: one JSON file, CLI flags win over file values.

Sections (all optional unless a subcommand needs them):

    {"data":     {"manifest": "train.jsonl", "test_manifest": "test.jsonl"}
                 or {"synthetic": {"num_classes": 5, "seed": 0, ...}},
     "train":    {... TrainConfig fields ...},
     "localize": {"tau": 0.25, "tag_thresholds": [0.1, ...], "nms_iou": 0.5},
     "eval":     {"thresholds": [0.1, 0.2, ...] or "0.1:0.1:0.7"},
     "out":      "runs/exp0"}
"""

import dataclasses
import json
import os

from .localize import LocalizeConfig
from .synthetic import SyntheticCorpusSpec
from .train import TrainConfig


class ConfigError(ValueError):
    """Raised for unusable experiment configuration."""


def parse_threshold_range(text):
    """Parse 'start:step:stop' (inclusive) into a list of floats."""
    try:
        start, step, stop = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"bad threshold range {text!r}, expected start:step:stop") from None
    if step <= 0 or stop < start:
        raise ConfigError(f"bad threshold range {text!r}")
    count = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(count)]


def _build(cls, section, where):
    valid = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - valid
    if unknown:
        raise ConfigError(f"{where}: unknown fields {sorted(unknown)}")
    coerced = dict(section)
    if "tag_thresholds" in coerced:
        coerced["tag_thresholds"] = tuple(coerced["tag_thresholds"])
    if "adam_betas" in coerced:
        coerced["adam_betas"] = tuple(coerced["adam_betas"])
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    manifest: str | None
    test_manifest: str | None
    synthetic: SyntheticCorpusSpec | None
    train: TrainConfig
    localize: LocalizeConfig
    eval_thresholds: tuple[float, ...]
    out: str | None

    def require_data(self):
        if self.synthetic is None and self.manifest is None:
            raise ConfigError("data: need either a manifest path or a synthetic section")


def load_config(path, overrides=None):
    """Load an experiment config file and apply {dotted.key: value} overrides."""
    if not os.path.exists(path):
        raise ConfigError(f"missing config file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return build_config(raw, overrides)


def build_config(raw, overrides=None):
    raw = json.loads(json.dumps(raw))  # deep copy, JSON-typed
    for key, value in (overrides or {}).items():
        parts = key.split(".")
        node = raw
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value

    known = {"data", "train", "localize", "eval", "out"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")

    data = raw.get("data", {})
    synthetic = None
    if "synthetic" in data:
        synthetic = _build(SyntheticCorpusSpec, data["synthetic"], "data.synthetic")
    manifest = data.get("manifest")
    test_manifest = data.get("test_manifest")

    train_cfg = _build(TrainConfig, raw.get("train", {}), "train")
    loc_cfg = _build(LocalizeConfig, raw.get("localize", {}), "localize")

    thresholds = raw.get("eval", {}).get("thresholds", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7])
    if isinstance(thresholds, str):
        thresholds = parse_threshold_range(thresholds)

    return ExperimentConfig(
        manifest=manifest,
        test_manifest=test_manifest,
        synthetic=synthetic,
        train=train_cfg,
        localize=loc_cfg,
        eval_thresholds=tuple(float(t) for t in thresholds),
        out=raw.get("out"),
    )


def config_as_dict(cfg):
    """JSON-serializable dump of a resolved ExperimentConfig."""
    out = {
        "data": {},
        "train": dataclasses.asdict(cfg.train),
        "localize": dataclasses.asdict(cfg.localize),
        "eval": {"thresholds": list(cfg.eval_thresholds)},
        "out": cfg.out,
    }
    out["train"]["adam_betas"] = list(cfg.train.adam_betas)
    out["localize"]["tag_thresholds"] = list(cfg.localize.tag_thresholds)
    if cfg.synthetic is not None:
        out["data"]["synthetic"] = dataclasses.asdict(cfg.synthetic)
    if cfg.manifest is not None:
        out["data"]["manifest"] = cfg.manifest
    if cfg.test_manifest is not None:
        out["data"]["test_manifest"] = cfg.test_manifest
    return out
