"""Epoch schedules: dynamic augmentation-strength decay and cosine-annealed
learning rate."""

import math


def dynacl_schedule(epoch, decay_period, total_epochs, reweight_rate):
    """Piecewise-constant strength decay mu_e = 1 - floor(e/K) * K/E and its
    reweighting omega_e = nu * (1 - mu_e)."""
    if not 0 <= epoch < total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs})")
    mu = 1.0 - (epoch // decay_period) * decay_period / total_epochs
    omega = reweight_rate * (1.0 - mu)
    return mu, omega


def cosine_lr(step, total_steps, base_lr):
    """base_lr * (1 + cos(pi * step / total_steps)) / 2."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return base_lr * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0
