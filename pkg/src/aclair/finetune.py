"""Finetuning protocols (standard/adversarial linear, adversarial full),
clustering-based pseudo-label finetuning, and robustness evaluation."""

import copy
import dataclasses
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .attacks import PGDConfig, pgd_classifier
from .corruptions import corrupt
from .data import iter_minibatches
from .models import BranchTag, load_checkpoint, build_encoder_from_checkpoint
from .schedules import cosine_lr

MODES = ("SLF", "ALF", "AFF")


@dataclass
class FinetuneConfig:
    mode: str = "SLF"
    epochs: int = 25
    lr: float = 0.01
    momentum: float = 0.9
    # Appendix-style "momentum 2e-4" configs read like weight decay; applied as such.
    weight_decay: float = 2e-4
    batch_size: int = 128
    attack: PGDConfig = field(default_factory=lambda: PGDConfig(steps=10))
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def freeze_extractor(self):
        return self.mode in ("SLF", "ALF")

    @property
    def adversarial(self):
        return self.mode in ("ALF", "AFF")


class Classifier(nn.Module):
    """Encoder representation + linear head, evaluated on a fixed BN branch."""

    def __init__(self, encoder, num_classes, branch=BranchTag.STANDARD):
        super().__init__()
        self.encoder = encoder
        self.head = nn.Linear(encoder.representation_dim, num_classes)
        self.branch = branch

    def forward(self, x):
        return self.head(self.encoder.representation(x, self.branch))


def _resolve_encoder(checkpoint):
    if isinstance(checkpoint, nn.Module):
        return copy.deepcopy(checkpoint)
    payload = checkpoint if isinstance(checkpoint, dict) else load_checkpoint(checkpoint)
    model, _ = build_encoder_from_checkpoint(payload)
    return model


def finetune(checkpoint, dataset, cfg: FinetuneConfig):
    """Train a classifier from a pre-trained encoder.

    SLF: frozen extractor, linear head on natural data.
    ALF: frozen extractor, linear head on PGD data.
    AFF: all parameters on PGD data.
    """
    if dataset.labels is None:
        raise ValueError("finetuning requires labels")
    num_classes = int(dataset.labels.max()) + 1
    if dataset.descriptor is not None and num_classes > dataset.descriptor.num_classes:
        raise ValueError("label count exceeds dataset descriptor class count")
    torch.manual_seed(cfg.seed)
    encoder = _resolve_encoder(checkpoint)
    branch = BranchTag.ADVERSARIAL if cfg.adversarial else BranchTag.STANDARD
    clf = Classifier(encoder, num_classes, branch)

    if cfg.freeze_extractor:
        encoder.eval()
        for p in encoder.parameters():
            p.requires_grad_(False)
        params = clf.head.parameters()
    else:
        params = clf.parameters()
    optimizer = torch.optim.SGD(params, lr=cfg.lr, momentum=cfg.momentum,
                                weight_decay=cfg.weight_decay)

    shuffle_gen = torch.Generator().manual_seed(cfg.seed + 1)
    attack_gen = torch.Generator().manual_seed(cfg.seed + 2)
    batches_per_epoch = max(1, len(dataset) // cfg.batch_size)
    total_steps = max(1, cfg.epochs * batches_per_epoch)
    step = 0
    for _ in range(cfg.epochs):
        for idx in iter_minibatches(dataset, min(cfg.batch_size, len(dataset)),
                                    shuffle_gen):
            x, y = dataset.images[idx], dataset.labels[idx]
            if cfg.adversarial and cfg.attack.eps > 0 and cfg.attack.steps > 0:
                x = pgd_classifier(x, y, clf, cfg.attack, attack_gen)
            if cfg.freeze_extractor:
                # the attack's train-mode restore must not wake frozen BN
                clf.encoder.eval()
            else:
                clf.train()
            loss = F.cross_entropy(clf(x), y)
            for group in optimizer.param_groups:
                group["lr"] = cosine_lr(step, total_steps, cfg.lr)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            step += 1
    clf.eval()
    return clf


def kmeans(points, k, iters=100, restarts=10, seed=0):
    """Plain Lloyd k-means with restarts; an empty cluster is reseeded to a
    random data point. Returns (labels, centers, inertia)."""
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    pts = np.asarray(points, dtype=np.float64)
    best = None
    for _ in range(restarts):
        centers = pts[rng.choice(len(pts), size=k, replace=False)].copy()
        for _ in range(iters):
            d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
            labels = d2.argmin(1)
            new_centers = centers.copy()
            for c in range(k):
                members = pts[labels == c]
                if len(members) == 0:
                    new_centers[c] = pts[rng.integers(len(pts))]
                else:
                    new_centers[c] = members.mean(0)
            if np.allclose(new_centers, centers):
                centers = new_centers
                break
            centers = new_centers
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        labels = d2.argmin(1)
        inertia = d2[np.arange(len(pts)), labels].sum()
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia)
    return best


def lp_aff(checkpoint, dataset, k, cfg: FinetuneConfig):
    """Cluster representations into k pseudo-labels, then adversarially
    full-finetune on them."""
    encoder = _resolve_encoder(checkpoint)
    encoder.eval()
    with torch.no_grad():
        reps = encoder.representation(dataset.images, BranchTag.STANDARD)
    labels, _, _ = kmeans(reps.numpy(), k, seed=cfg.seed)
    pseudo = copy.copy(dataset)
    pseudo.labels = torch.from_numpy(labels.astype(np.int64))
    return finetune(encoder, pseudo, dataclasses.replace(cfg, mode="AFF"))


def standard_accuracy(clf, dataset, batch_size=256):
    clf.eval()
    correct = 0
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            x = dataset.images[start:start + batch_size]
            y = dataset.labels[start:start + batch_size]
            correct += int((clf(x).argmax(1) == y).sum())
    return correct / len(dataset)


def robust_accuracy(clf, dataset, attack: PGDConfig, batch_size=256, seed=0):
    """Accuracy on PGD-perturbed inputs; eps=0 reduces to standard accuracy."""
    clf.eval()
    gen = torch.Generator().manual_seed(seed)
    correct = 0
    for start in range(0, len(dataset), batch_size):
        x = dataset.images[start:start + batch_size]
        y = dataset.labels[start:start + batch_size]
        adv = pgd_classifier(x, y, clf, attack, gen)
        with torch.no_grad():
            correct += int((clf(adv).argmax(1) == y).sum())
    return correct / len(dataset)


def corruption_accuracy(clf, dataset, kinds, severities=(1, 3, 5), seed=0):
    """Per-kind/per-severity accuracy on corrupted copies plus the mean over
    kinds at each severity."""
    clf.eval()
    report = {}
    for kind in kinds:
        report[kind] = {}
        for sev in severities:
            images = corrupt(dataset.images, kind, sev, seed=seed)
            with torch.no_grad():
                pred = clf(images).argmax(1)
            report[kind][sev] = float((pred == dataset.labels).float().mean())
    mean = {sev: float(np.mean([report[k][sev] for k in kinds]))
            for sev in severities}
    return {"per_kind": report, "mean": mean}
