"""Encoders: residual backbone + projection MLP with dual batch normalization.

The composed map is f = g . h where h extracts representations and g projects
them into the contrastive space. In dual-BN mode a forward pass is tagged
`standard` or `adversarial`; the two branches keep disjoint normalization
statistics over shared convolution/linear weights.
"""

import enum
import hashlib
import json
import random
from dataclasses import dataclass, asdict, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

CHECKPOINT_VERSION = 1


class BranchTag(enum.Enum):
    STANDARD = "standard"
    ADVERSARIAL = "adversarial"


@dataclass
class EncoderSpec:
    in_channels: int = 3
    widths: tuple = (16, 32)
    blocks_per_stage: int = 1
    projector_hidden: int = 512
    projector_dim: int = 128
    bn_mode: str = "dual"  # "single" or "dual"

    def __post_init__(self):
        self.widths = tuple(self.widths)
        if self.bn_mode not in ("single", "dual"):
            raise ValueError(f"bn_mode must be 'single' or 'dual', got {self.bn_mode!r}")

    def hash(self):
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()


class _DualBatchNorm(nn.Module):
    """Batch norm with per-branch statistics. In single mode both tags share
    one set of statistics."""

    _factory = None

    def __init__(self, num_features, mode="dual"):
        super().__init__()
        self.mode = mode
        self.bn_standard = self._factory(num_features)
        if mode == "dual":
            self.bn_adversarial = self._factory(num_features)
        self.active = BranchTag.STANDARD

    def forward(self, x):
        if self.mode == "dual" and self.active is BranchTag.ADVERSARIAL:
            return self.bn_adversarial(x)
        return self.bn_standard(x)


class DualBatchNorm2d(_DualBatchNorm):
    _factory = nn.BatchNorm2d


class DualBatchNorm1d(_DualBatchNorm):
    _factory = nn.BatchNorm1d


class ResidualBlock(nn.Module):
    def __init__(self, cin, cout, stride, bn_mode):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)
        self.bn1 = DualBatchNorm2d(cout, bn_mode)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.bn2 = DualBatchNorm2d(cout, bn_mode)
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride=stride, bias=False),
                DualBatchNorm2d(cout, bn_mode),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


class DualBranchEncoder(nn.Module):
    """Residual backbone h plus 2-layer projection head g."""

    def __init__(self, spec: EncoderSpec):
        super().__init__()
        self.spec = spec
        w0 = spec.widths[0]
        self.stem = nn.Conv2d(spec.in_channels, w0, 3, padding=1, bias=False)
        self.stem_bn = DualBatchNorm2d(w0, spec.bn_mode)
        stages = []
        cin = w0
        for i, w in enumerate(spec.widths):
            for b in range(spec.blocks_per_stage):
                stride = 2 if (i > 0 and b == 0) else 1
                stages.append(ResidualBlock(cin, w, stride, spec.bn_mode))
                cin = w
        self.stages = nn.Sequential(*stages)
        self.representation_dim = spec.widths[-1]
        # the head keeps a norm layer of its own; without it the contrastive
        # embeddings readily collapse to a single direction
        self.projector = nn.Sequential(
            nn.Linear(self.representation_dim, spec.projector_hidden),
            DualBatchNorm1d(spec.projector_hidden, spec.bn_mode),
            nn.ReLU(inplace=True),
            nn.Linear(spec.projector_hidden, spec.projector_dim),
        )

    def _route(self, tag):
        if not isinstance(tag, BranchTag):
            raise ValueError(f"invalid branch tag {tag!r}")
        for m in self.modules():
            if isinstance(m, _DualBatchNorm):
                m.active = tag

    def representation(self, x, tag=BranchTag.STANDARD):
        if x.dim() != 4 or x.shape[1] != self.spec.in_channels:
            raise ValueError(f"expected (N,{self.spec.in_channels},H,W), got {tuple(x.shape)}")
        self._route(tag)
        out = F.relu(self.stem_bn(self.stem(x)))
        out = self.stages(out)
        return out.mean(dim=(2, 3))

    def forward(self, x, tag=BranchTag.STANDARD):
        return self.projector(self.representation(x, tag))


class TinyEncoder(nn.Module):
    """Small smooth MLP encoder (no normalization layers) used by the
    verification suite and finite-difference gradient checks."""

    def __init__(self, in_features, hidden=8, representation_dim=4, projector_dim=4):
        super().__init__()
        self.in_features = in_features
        self.representation_dim = representation_dim
        self.body = nn.Sequential(
            nn.Linear(in_features, hidden), nn.Tanh(),
            nn.Linear(hidden, representation_dim), nn.Tanh(),
        )
        self.projector = nn.Linear(representation_dim, projector_dim)

    def representation(self, x, tag=BranchTag.STANDARD):
        return self.body(x.flatten(1))

    def forward(self, x, tag=BranchTag.STANDARD):
        return self.projector(self.representation(x, tag))


@dataclass
class SchedulerState:
    epoch: int = 0
    total_epochs: int = 0
    decay_period: int = 50
    reweight_rate: float = 2.0 / 3.0
    mu: float = 1.0
    omega: float = 0.0


def rng_snapshot():
    return {
        "torch": torch.get_rng_state(),
        "numpy": np.random.get_state(),
        "python": random.getstate(),
    }


def rng_restore(state):
    torch.set_rng_state(state["torch"])
    np.random.set_state(state["numpy"])
    random.setstate(state["python"])


def save_checkpoint(path, model, spec, optimizer=None, epoch=0,
                    scheduler_state=None, extra=None):
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "spec": asdict(spec) if hasattr(spec, "__dataclass_fields__") else spec,
        "spec_hash": spec.hash() if hasattr(spec, "hash") else None,
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "epoch": epoch,
        "scheduler_state": asdict(scheduler_state) if scheduler_state else None,
        "rng_state": rng_snapshot(),
    }
    if extra:
        payload.update(extra)
    torch.save(payload, path)


def load_checkpoint(path, expected_spec=None):
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('format_version')}")
    if expected_spec is not None and payload.get("spec_hash") != expected_spec.hash():
        raise ValueError("checkpoint spec hash does not match the requested encoder spec")
    return payload


def build_encoder_from_checkpoint(payload):
    spec = EncoderSpec(**payload["spec"])
    model = DualBranchEncoder(spec)
    model.load_state_dict(payload["model_state"])
    return model, spec
