"""L-infinity PGD: joint view-pair attacks for pre-training and label attacks
for adversarial finetuning / robustness evaluation."""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .losses import cl_loss_from_embeddings
from .models import BranchTag


@dataclass
class PGDConfig:
    eps: float = 8.0 / 255.0
    steps: int = 5
    alpha: float = 2.0 / 255.0
    random_start: bool = True

    def __post_init__(self):
        if self.eps < 0 or self.eps > 1:
            raise ValueError("eps must be in [0,1]")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


EVAL_ATTACK = PGDConfig(steps=20)
FINETUNE_ATTACK = PGDConfig(steps=10)


def project_linf(candidate, anchor, eps):
    """Clip into the eps-ball around anchor intersected with [0,1]."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if candidate.shape != anchor.shape:
        raise ValueError("shape mismatch between candidate and anchor")
    return torch.clamp(torch.min(torch.max(candidate, anchor - eps), anchor + eps),
                       0.0, 1.0)


def _init_delta(x, cfg, generator):
    if cfg.random_start and cfg.steps > 0:
        delta = (torch.rand(x.shape, generator=generator) * 2 - 1) * cfg.eps
    else:
        delta = torch.zeros_like(x)
    return project_linf(x + delta, x, cfg.eps)


def _check_finite(t, what):
    if not torch.isfinite(t).all():
        raise FloatingPointError(f"non-finite {what} during PGD")


def pgd_pair(x_i, x_j, model, t, cfg: PGDConfig, generator=None):
    """Perturb both views jointly to maximize their shared contrastive loss.

    Sign-gradient ascent with per-step projection onto the eps-balls around
    the natural views. The model is untouched; BN runs in eval mode so attack
    iterations never pollute running statistics.
    """
    was_training = model.training
    model.eval()
    try:
        adv_i = _init_delta(x_i.detach(), cfg, generator)
        adv_j = _init_delta(x_j.detach(), cfg, generator)
        for _ in range(cfg.steps):
            adv_i.requires_grad_(True)
            adv_j.requires_grad_(True)
            loss = cl_loss_from_embeddings(
                model(adv_i, BranchTag.ADVERSARIAL),
                model(adv_j, BranchTag.ADVERSARIAL), t)
            _check_finite(loss, "loss")
            gi, gj = torch.autograd.grad(loss, [adv_i, adv_j])
            _check_finite(gi, "gradient")
            _check_finite(gj, "gradient")
            with torch.no_grad():
                adv_i = project_linf(adv_i + cfg.alpha * gi.sign(), x_i, cfg.eps)
                adv_j = project_linf(adv_j + cfg.alpha * gj.sign(), x_j, cfg.eps)
    finally:
        model.train(was_training)
    return adv_i.detach(), adv_j.detach()


def pgd_classifier(x, y, classifier, cfg: PGDConfig, generator=None):
    """Untargeted cross-entropy PGD against a classifier callable."""
    was_training = getattr(classifier, "training", False)
    if hasattr(classifier, "eval"):
        classifier.eval()
    try:
        adv = _init_delta(x.detach(), cfg, generator)
        for _ in range(cfg.steps):
            adv.requires_grad_(True)
            loss = F.cross_entropy(classifier(adv), y)
            _check_finite(loss, "loss")
            (grad,) = torch.autograd.grad(loss, [adv])
            _check_finite(grad, "gradient")
            with torch.no_grad():
                adv = project_linf(adv + cfg.alpha * grad.sign(), x, cfg.eps)
    finally:
        if hasattr(classifier, "train"):
            classifier.train(was_training)
    return adv.detach()
