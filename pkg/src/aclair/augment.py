"""Seeded augmentation pipeline producing the two contrastive views.

The transformation family is SimCLR-style: random resized crop, horizontal
flip, color jitter (brightness/contrast/saturation) and grayscale conversion.
A single strength scalar mu in [0,1] scales every application probability and
magnitude linearly; mu=0 is exactly the identity.
"""

import math

import torch
import torch.nn.functional as F

FLIP_PROB = 0.5
JITTER_PROB = 0.8
GRAY_PROB = 0.2
CROP_SCALE_RANGE = 0.9   # lower bound of area scale is 1 - CROP_SCALE_RANGE * mu
JITTER_STRENGTH = 0.4
MAX_LOG_ASPECT = math.log(4.0 / 3.0)

# Rec. 601 luma weights for grayscale conversion
_LUMA = (0.299, 0.587, 0.114)


def _check_pixels(x):
    if x.min() < 0.0 or x.max() > 1.0:
        raise ValueError("pixel values must lie in [0,1]")


def _rand(g, low=0.0, high=1.0):
    return low + (high - low) * torch.rand((), generator=g).item()


def _crop_resize(x, mu, g):
    c, h, w = x.shape
    area = _rand(g, 1.0 - CROP_SCALE_RANGE * mu, 1.0)
    log_aspect = _rand(g, -MAX_LOG_ASPECT * mu, MAX_LOG_ASPECT * mu)
    aspect = math.exp(log_aspect)
    ch = min(h, max(1, round(h * math.sqrt(area / aspect))))
    cw = min(w, max(1, round(w * math.sqrt(area * aspect))))
    top = int(_rand(g, 0.0, h - ch + 1.0))
    left = int(_rand(g, 0.0, w - cw + 1.0))
    top = min(top, h - ch)
    left = min(left, w - cw)
    if ch == h and cw == w:
        return x
    patch = x[:, top:top + ch, left:left + cw]
    return F.interpolate(patch.unsqueeze(0), size=(h, w), mode="bilinear",
                         align_corners=False).squeeze(0)


def _color_jitter(x, mu, g):
    strength = JITTER_STRENGTH * mu
    brightness = _rand(g, 1.0 - strength, 1.0 + strength)
    contrast = _rand(g, 1.0 - strength, 1.0 + strength)
    saturation = _rand(g, 1.0 - strength, 1.0 + strength)
    x = x * brightness
    mean = x.mean()
    x = (x - mean) * contrast + mean
    if x.shape[0] == 3:
        gray = (_LUMA[0] * x[0] + _LUMA[1] * x[1] + _LUMA[2] * x[2]).unsqueeze(0)
        x = (x - gray) * saturation + gray
    return x.clamp(0.0, 1.0)


def _grayscale(x):
    if x.shape[0] != 3:
        return x
    gray = _LUMA[0] * x[0] + _LUMA[1] * x[1] + _LUMA[2] * x[2]
    return gray.unsqueeze(0).expand_as(x).contiguous()


def augment(x, mu, seed):
    """Apply one randomly parameterized transform tau drawn from seed.

    mu=0 returns x unchanged; identical (x, mu, seed) triples give
    bit-identical outputs.
    """
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"augmentation strength must be in [0,1], got {mu}")
    if x.dim() != 3:
        raise ValueError(f"expected (C,H,W) tensor, got shape {tuple(x.shape)}")
    _check_pixels(x)
    if mu == 0.0:
        return x.clone()
    g = torch.Generator().manual_seed(seed)
    out = _crop_resize(x, mu, g)
    if _rand(g) < FLIP_PROB * mu:
        out = torch.flip(out, dims=[-1])
    if _rand(g) < JITTER_PROB * mu:
        out = _color_jitter(out, mu, g)
    if _rand(g) < GRAY_PROB * mu:
        out = _grayscale(out)
    return out.clamp(0.0, 1.0)


def make_view_pair(x, mu, seed_i, seed_j):
    """Two independently sampled views (tau_i(x), tau_j(x))."""
    if seed_i == seed_j:
        raise ValueError("view seeds must differ (degenerate positive pair)")
    return augment(x, mu, seed_i), augment(x, mu, seed_j)


def view_seed(base_seed, epoch, sample_index, view):
    """Stable per-(sample, epoch, view) seed so adversary regeneration is
    reproducible. view is 0 or 1."""
    h = (base_seed * 1000003 + epoch) * 1000003 + sample_index
    return (h * 2 + view) % (2 ** 63)
