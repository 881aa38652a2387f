"""Common-corruption transforms at five severities.

A desk-scale subset of the usual corruption benchmark: each kind maps severity
1..5 to a monotone parameter from the table below. Severity 0 is an internal
identity hook used by tests. All outputs are clamped to [0,1].
"""

import torch
import torch.nn.functional as F

SEVERITY_TABLE = {
    "gaussian_noise": [0.04, 0.06, 0.08, 0.10, 0.15],   # noise std
    "shot_noise": [60, 25, 12, 5, 3],                   # photons per unit intensity
    "defocus_blur": [1, 2, 3, 4, 5],                    # disk kernel radius (px)
    "brightness": [0.1, 0.2, 0.3, 0.4, 0.5],            # additive shift
    "contrast": [0.75, 0.6, 0.45, 0.3, 0.15],           # contrast factor
    "jpeg_like": [32, 24, 16, 10, 6],                   # quantization levels
}

KINDS = tuple(SEVERITY_TABLE)


def _param(kind, severity):
    if kind not in SEVERITY_TABLE:
        raise ValueError(f"unknown corruption kind {kind!r}")
    if severity == 0:
        return None
    if not 1 <= severity <= 5:
        raise ValueError(f"severity must be in 0..5, got {severity}")
    return SEVERITY_TABLE[kind][severity - 1]


def _disk_kernel(radius):
    size = 2 * radius + 1
    ys, xs = torch.meshgrid(torch.arange(size), torch.arange(size), indexing="ij")
    mask = ((ys - radius) ** 2 + (xs - radius) ** 2 <= radius ** 2).float()
    return mask / mask.sum()


def corrupt(images, kind, severity, seed=0):
    """Apply a corruption to a (N,C,H,W) batch in [0,1]."""
    p = _param(kind, severity)
    if p is None:
        return images.clone()
    g = torch.Generator().manual_seed(seed)
    x = images.clone()
    if kind == "gaussian_noise":
        x = x + p * torch.randn(x.shape, generator=g)
    elif kind == "shot_noise":
        x = torch.poisson(x * p, generator=g) / p
    elif kind == "defocus_blur":
        kernel = _disk_kernel(p).to(x.dtype)
        c = x.shape[1]
        weight = kernel.expand(c, 1, *kernel.shape)
        x = F.conv2d(F.pad(x, [p] * 4, mode="reflect"), weight, groups=c)
    elif kind == "brightness":
        x = x + p
    elif kind == "contrast":
        mean = x.mean(dim=(1, 2, 3), keepdim=True)
        x = (x - mean) * p + mean
    elif kind == "jpeg_like":
        # crude block artifact: 2x down/up sampling plus level quantization
        n, c, h, w = x.shape
        x = F.interpolate(x, scale_factor=0.5, mode="bilinear", align_corners=False)
        x = F.interpolate(x, size=(h, w), mode="nearest")
        x = torch.round(x * (p - 1)) / (p - 1)
    return x.clamp(0.0, 1.0)
