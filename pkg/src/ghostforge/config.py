"""Run configuration: one strict JSON document covering every stage.

Layout (all sections optional; unknown keys anywhere are rejected)::

    {
      "seed": 0,
      "sim": {"image_size": 64, "n_measurements": 4096, "pattern_kind": "binary-random",
              "detector_noise_sigma": 0.0,
              "turbulence": {"mode": "none", "r0": 8.0, "L0": null, "blur_sigma": 1.0,
                             "tilt_sigma": 0.0, "refresh": "per-measurement"}},
      "recon": {"estimator": "covariance", "normalize": "minmax"},
      "generator": {"base_channels": 16, "depth": 4, "mafe_branch_dilations": [1, 2, 3],
                    "attention_reduction": 4},
      "discriminator": {"channels": [64, 128, 256, 1], "width": 0.25, "strides": [2, 2, 2, 1],
                        "kernel": 4, "padding": 1, "slope": 0.2},
      "train": {"batch_size": 1, "iterations": 1000, "lr_g": 2e-4, "lr_d": 2e-4,
                "betas": [0.5, 0.999], "eps": 1e-8, "checkpoint_every": 0,
                "perceptual_layers": [1, 2, 3], "input_source": "degraded"},
      "loss": {"alpha": 0.5, "beta": 0.01, "gamma": 0.01},
      "data": {"n_objects": 16, "split_ratio": 0.8317...},
      "paths": {"data_dir": null, "out_dir": null},
      "report": {"triptychs": true}
    }

Seeds come from the top-level ``seed`` only; ``--seed`` beats the
``GHOSTFORGE_SEED`` environment variable, which beats the file.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .msgan.config import DiscriminatorConfig, GeneratorConfig, LossWeights, TrainConfig
from .optics import DEFAULT_SPLIT_RATIO, SimConfig, TurbulenceParams
from .recon import ReconConfig

SEED_ENV = "GHOSTFORGE_SEED"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class DataOptions:
    n_objects: int = 16
    split_ratio: float = DEFAULT_SPLIT_RATIO


@dataclass(frozen=True)
class PathOptions:
    data_dir: str | None = None
    out_dir: str | None = None


@dataclass(frozen=True)
class ReportOptions:
    triptychs: bool = True


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    sim: SimConfig = field(default_factory=SimConfig)
    recon: ReconConfig = field(default_factory=ReconConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    data: DataOptions = field(default_factory=DataOptions)
    paths: PathOptions = field(default_factory=PathOptions)
    report: ReportOptions = field(default_factory=ReportOptions)

    def to_dict(self):
        d = asdict(self)
        del d["sim"]["seed"]
        del d["train"]["seed"]
        return d

    def resolved_document(self):
        """The config as echoed next to run outputs, with provenance notes."""
        doc = self.to_dict()
        doc["notes"] = {
            "data.split_ratio": "default 173/208 mirrors a 173 train / 35 test object split",
            "sim.turbulence.r0": "weak/medium/strong correspond to image_size/4, /8, /16 "
                                 "(an arbitrary labeling, not a calibration)",
            "adversarial_loss": "least-squares form on sigmoid(D) outputs",
        }
        return doc


_SECTIONS = {
    "sim": SimConfig,
    "recon": ReconConfig,
    "generator": GeneratorConfig,
    "discriminator": DiscriminatorConfig,
    "train": TrainConfig,
    "loss": LossWeights,
    "data": DataOptions,
    "paths": PathOptions,
    "report": ReportOptions,
}
_SEEDED = {"sim", "train"}


def _build(section, cls, values, path):
    if not isinstance(values, dict):
        raise ConfigError(f"{path}: expected an object")
    allowed = {f.name for f in fields(cls)} - ({"seed"} if section in _SEEDED else set())
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {path}.{unknown[0]}")
    kwargs = {}
    for k, v in values.items():
        if section == "sim" and k == "turbulence":
            tallowed = {f.name for f in fields(TurbulenceParams)}
            if not isinstance(v, dict):
                raise ConfigError(f"{path}.turbulence: expected an object")
            bad = sorted(set(v) - tallowed)
            if bad:
                raise ConfigError(f"unknown key {path}.turbulence.{bad[0]}")
            try:
                v = TurbulenceParams(**v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}.turbulence: {exc}") from None
        elif isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(doc) - set(_SECTIONS) - {"seed", "notes"})
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]}")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    kwargs = {name: _build(name, cls, doc.get(name, {}), name) for name, cls in _SECTIONS.items()}
    return apply_seed(RunConfig(**kwargs), seed)


def apply_seed(cfg, seed):
    return replace(cfg, seed=seed, sim=replace(cfg.sim, seed=seed), train=replace(cfg.train, seed=seed))


def load_config(path=None, seed_flag=None, environ=None):
    """Read a config file (or defaults) and apply seed precedence flag > env > file."""
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    cfg = from_dict(doc)
    environ = os.environ if environ is None else environ
    if seed_flag is not None:
        return apply_seed(cfg, int(seed_flag))
    if environ.get(SEED_ENV):
        try:
            return apply_seed(cfg, int(environ[SEED_ENV]))
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {environ[SEED_ENV]!r}") from None
    return cfg


def echo_config(cfg, out_dir):
    path = Path(out_dir) / "config.resolved.json"
    path.write_text(json.dumps(cfg.resolved_document(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
