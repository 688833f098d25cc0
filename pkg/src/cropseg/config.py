"""Run configuration files (YAML).

Example::

    network:
      depth: 4
      base_width: 16
      input_side: 128
    training:
      learning_rate: 0.001
      batch_size: 14
      max_epochs: 300
      eval_every: 10
      seed: 0
      tag: desk
    augmentation:            # omit or set to null to train without augmentation
      flip_probability: 0.5
    data:
      synthetic: {count: 40, preset: default, seed: 1}
      # or: annotations: path/to/labelme/jsons
      train_fraction: 0.8
      split_seed: 0
    output_dir: runs/desk
    init_seed: 0

Unknown keys are rejected at every level.
"""
from dataclasses import fields
from pathlib import Path

import yaml

from . import imagery, netbuilder, trainer


class ConfigError(ValueError):
    pass


def _keys(cls):
    return {f.name for f in fields(cls)}


SCHEMA = {
    "network": _keys(netbuilder.NetworkConfig),
    "training": _keys(trainer.TrainConfig) - {"augmentation"},
    "augmentation": _keys(imagery.AugmentationConfig),
    "data": {"synthetic", "annotations", "label", "train_fraction", "split_seed", "val_synthetic"},
    "tracking": {"center", "window", "window_factor", "cap", "use_d4", "threshold"},
    "ablation": {"seeds", "max_epochs", "eval_every", "deep", "shallow", "deep_batch", "shallow_batch"},
    "output_dir": None,
    "checkpoint": None,
    "init_seed": None,
}
SYNTHETIC_KEYS = {"count", "preset", "seed", "scene"}


def _reject_unknown(d, valid, where):
    unknown = set(d) - set(valid)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}; valid keys: {sorted(valid)}")


def validate(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a mapping")
    _reject_unknown(cfg, SCHEMA, "top level")
    for section, valid in SCHEMA.items():
        if valid is None or cfg.get(section) is None:
            continue
        if not isinstance(cfg[section], dict):
            raise ConfigError(f"section '{section}' must be a mapping")
        _reject_unknown(cfg[section], valid, f"section '{section}'")
    data = cfg.get("data") or {}
    for key in ("synthetic", "val_synthetic"):
        if isinstance(data.get(key), dict):
            _reject_unknown(data[key], SYNTHETIC_KEYS, f"data.{key}")
            scene = data[key].get("scene")
            if scene is not None:
                _reject_unknown(scene, _keys(imagery.SceneSpec), f"data.{key}.scene")
    return cfg


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        cfg = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = validate(cfg)
    cfg["_base"] = str(path.parent)
    return cfg


def resolve(cfg, value):
    """Resolve a path relative to the config file's directory."""
    p = Path(value)
    if p.is_absolute() or "_base" not in cfg:
        return p
    return Path(cfg["_base"]) / p


def network_config(cfg):
    try:
        return netbuilder.NetworkConfig(**(cfg.get("network") or {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"network: {exc}") from exc


def train_config(cfg, **overrides):
    d = dict(cfg.get("training") or {})
    if cfg.get("augmentation") is not None:
        d["augmentation"] = imagery.AugmentationConfig(**cfg["augmentation"])
    d.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return trainer.TrainConfig(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"training: {exc}") from exc


def scene_spec(syn):
    preset = syn.get("preset", "default")
    if preset not in imagery.SCENE_PRESETS:
        raise ConfigError(f"unknown scene preset {preset!r}; choose from {sorted(imagery.SCENE_PRESETS)}")
    base = imagery.SCENE_PRESETS[preset].to_dict()
    base.update(syn.get("scene") or {})
    try:
        return imagery.SceneSpec.from_dict(base)
    except ValueError as exc:
        raise ConfigError(f"scene: {exc}") from exc


def fit_sample(sample, side):
    """Center-crop to a square and resize image (bilinear) and mask (nearest) to ``side``."""
    h, w = sample.mask.shape
    if (h, w) == (side, side):
        return sample
    window = imagery.center_crop_window(sample.image)
    image, geom = imagery.crop_resize(sample.image, window, side)
    from .kernels import sample_nearest
    mask = sample_nearest(sample.mask, geom.x0, geom.y0, geom.step, side)
    return imagery.AnnotatedSample(image, mask, sample.source_id)


def load_samples(cfg, side, key="synthetic"):
    data = cfg.get("data") or {}
    if data.get(key) is not None:
        syn = data[key]
        spec = scene_spec(syn)
        if (spec.width, spec.height) != (side, side):
            raise ConfigError(f"synthetic scenes are {spec.width}x{spec.height}, network expects {side}x{side}")
        return imagery.synthetic_samples(int(syn.get("count", 40)), spec, seed=int(syn.get("seed", 0)))
    if key == "synthetic" and data.get("annotations") is not None:
        folder = resolve(cfg, data["annotations"])
        if not folder.is_dir():
            raise ConfigError(f"annotation directory {folder} does not exist")
        files = sorted(folder.glob("*.json"))
        if not files:
            raise ConfigError(f"no annotation files in {folder}")
        return [fit_sample(imagery.load_annotated_sample(f, data.get("label")), side) for f in files]
    if key == "synthetic":
        raise ConfigError("data section needs 'synthetic' or 'annotations'")
    return None


def split(cfg, samples):
    data = cfg.get("data") or {}
    return imagery.split_dataset(samples, float(data.get("train_fraction", 0.8)), int(data.get("split_seed", 0)))
