"""TOML experiment configuration.

Schema (all sections optional, defaults shown in DEFAULTS):

  [dataset]  kind ("synthetic_blobs" | "packed"), path, num_samples,
             num_classes, channels, size, seed
  [model]    widths, blocks_per_stage, projector_hidden, projector_dim, bn_mode
  [train]    lr, epochs, batch_size, momentum, weight_decay, mode,
             decay_period, reweight_rate, seed
  [loss]     temperature, omega, lambda1, lambda2, calibrated
  [attack]   eps, steps, alpha, random_start
  [finetune] mode, epochs, lr, batch_size, seed
"""

import copy
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .attacks import PGDConfig
from .data import make_synthetic_blobs, read_packed
from .finetune import FinetuneConfig
from .losses import RegularizerConfig
from .models import DualBranchEncoder, EncoderSpec
from .training import TrainConfig


class ConfigError(Exception):
    pass


DEFAULTS = {
    "dataset": {"kind": "synthetic_blobs", "path": "", "num_samples": 256,
                "num_classes": 4, "channels": 3, "size": 32, "seed": 0},
    "model": {"widths": [16, 32], "blocks_per_stage": 1,
              "projector_hidden": 128, "projector_dim": 64, "bn_mode": "dual"},
    "train": {"lr": 0.5, "epochs": 20, "batch_size": 64, "momentum": 0.9,
              "weight_decay": 1e-4, "mode": "dynacl", "decay_period": 5,
              "reweight_rate": 2.0 / 3.0, "seed": 0},
    "loss": {"temperature": 0.5, "omega": 0.0, "lambda1": 0.5, "lambda2": 0.5,
             "calibrated": True},
    "attack": {"eps": 8.0 / 255.0, "steps": 5, "alpha": 2.0 / 255.0,
               "random_start": True},
    "finetune": {"mode": "SLF", "epochs": 25, "lr": 0.01, "batch_size": 128,
                 "seed": 0},
}


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid config syntax: {e}") from e
    cfg = copy.deepcopy(DEFAULTS)
    for section, values in raw.items():
        if section not in cfg:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"section [{section}] must be a table")
        for key, val in values.items():
            if key not in cfg[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            cfg[section][key] = val
    return cfg


def build_dataset(cfg):
    d = cfg["dataset"]
    if d["kind"] == "synthetic_blobs":
        return make_synthetic_blobs(d["num_samples"], d["num_classes"],
                                    d["channels"], d["size"], d["seed"])
    if d["kind"] == "packed":
        path = Path(d["path"])
        if not path.exists():
            raise ConfigError(f"dataset path not found: {path}")
        return read_packed(path)
    raise ConfigError(f"unknown dataset kind {d['kind']!r}")


def build_model(cfg):
    m = cfg["model"]
    try:
        spec = EncoderSpec(in_channels=cfg["dataset"]["channels"],
                           widths=tuple(m["widths"]),
                           blocks_per_stage=m["blocks_per_stage"],
                           projector_hidden=m["projector_hidden"],
                           projector_dim=m["projector_dim"],
                           bn_mode=m["bn_mode"])
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return DualBranchEncoder(spec), spec


def build_train_config(cfg, mode=None, seed=None):
    try:
        reg = RegularizerConfig(lambda1=cfg["loss"]["lambda1"],
                                lambda2=cfg["loss"]["lambda2"],
                                epsilon=cfg["attack"]["eps"],
                                temperature=cfg["loss"]["temperature"],
                                omega=cfg["loss"]["omega"],
                                calibrated=cfg["loss"]["calibrated"])
        attack = PGDConfig(**cfg["attack"])
        t = cfg["train"]
        return TrainConfig(lr=t["lr"], epochs=t["epochs"],
                           batch_size=t["batch_size"], momentum=t["momentum"],
                           weight_decay=t["weight_decay"],
                           mode=mode or t["mode"],
                           decay_period=t["decay_period"],
                           reweight_rate=t["reweight_rate"],
                           regularizer=reg, attack=attack,
                           seed=t["seed"] if seed is None else seed)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e


def build_finetune_config(cfg, seed=None):
    f = cfg["finetune"]
    try:
        return FinetuneConfig(mode=f["mode"], epochs=f["epochs"], lr=f["lr"],
                              batch_size=f["batch_size"],
                              attack=PGDConfig(eps=cfg["attack"]["eps"],
                                               steps=10,
                                               alpha=cfg["attack"]["alpha"],
                                               random_start=True),
                              seed=f["seed"] if seed is None else seed)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e
