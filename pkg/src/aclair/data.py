"""Datasets: synthetic blob data for desk-scale runs, packed tensor files, descriptors."""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import torch

MAGIC = b"AIRD"
FORMAT_VERSION = 1
_DTYPE_F32 = 0


@dataclass
class DatasetDescriptor:
    name: str
    channels: int
    height: int
    width: int
    num_classes: int
    paths: list = field(default_factory=list)

    @property
    def shape(self):
        return (self.channels, self.height, self.width)

    def save(self, path):
        Path(path).write_text(json.dumps({
            "name": self.name,
            "channels": self.channels,
            "height": self.height,
            "width": self.width,
            "num_classes": self.num_classes,
            "paths": list(self.paths),
        }, indent=2))

    @classmethod
    def load(cls, path):
        d = json.loads(Path(path).read_text())
        return cls(d["name"], d["channels"], d["height"], d["width"],
                   d["num_classes"], d.get("paths", []))


@dataclass
class TensorDataset:
    """In-memory dataset of images in [0,1] with optional integer labels."""

    images: torch.Tensor  # (N, C, H, W)
    labels: torch.Tensor = None  # (N,) int64 or None
    descriptor: DatasetDescriptor = None

    def __len__(self):
        return self.images.shape[0]

    def __getitem__(self, idx):
        if self.labels is None:
            return self.images[idx]
        return self.images[idx], self.labels[idx]


def make_synthetic_blobs(num_samples=256, num_classes=4, channels=3, size=32,
                         seed=0, noise=0.05, color_jitter=0.0):
    """Gaussian-blob images: each class has a fixed blob center and color.

    Classes are linearly well separated in pixel space, which keeps desk-scale
    finetuning/clustering checks meaningful. A nonzero color_jitter perturbs
    each sample's blob color, giving individual samples a stable identity that
    survives spatial pooling; contrastive pre-training needs that headroom.
    """
    g = torch.Generator().manual_seed(seed)
    centers = [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)]
    colors = torch.tensor([
        [1.0, 0.2, 0.2],
        [0.2, 1.0, 0.2],
        [0.2, 0.4, 1.0],
        [1.0, 1.0, 0.2],
    ])
    ys, xs = torch.meshgrid(
        torch.linspace(0, 1, size), torch.linspace(0, 1, size), indexing="ij")
    images = torch.empty(num_samples, channels, size, size)
    labels = torch.empty(num_samples, dtype=torch.int64)
    sigma = 0.15
    for n in range(num_samples):
        c = n % num_classes
        cy, cx = centers[c % len(centers)]
        jitter = 0.05 * torch.randn(2, generator=g)
        blob = torch.exp(-(((ys - cy - jitter[0]) ** 2)
                           + ((xs - cx - jitter[1]) ** 2)) / (2 * sigma ** 2))
        color = colors[c % len(colors), :channels]
        if color_jitter > 0:
            color = (color + color_jitter
                     * torch.randn(channels, generator=g)).clamp(0.0, 1.0)
        img = blob.unsqueeze(0) * color.view(-1, 1, 1)
        img = img + noise * torch.rand(channels, size, size, generator=g)
        images[n] = img.clamp(0.0, 1.0)
        labels[n] = c
    desc = DatasetDescriptor("synthetic_blobs", channels, size, size, num_classes)
    return TensorDataset(images, labels, desc)


def write_packed(path, images, labels=None):
    """Packed binary: little-endian header (magic, version, count, C, H, W, dtype)
    followed by float32 pixel data and, when present, int64 labels."""
    images = images.contiguous().to(torch.float32)
    n, c, h, w = images.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIIIIIB", FORMAT_VERSION, n, c, h, w,
                            1 if labels is not None else 0, _DTYPE_F32))
        f.write(images.numpy().tobytes())
        if labels is not None:
            f.write(labels.contiguous().to(torch.int64).numpy().tobytes())


def read_packed(path):
    import numpy as np
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r} in {path}")
        version, n, c, h, w, has_labels, dtype = struct.unpack("<IIIIIIB", f.read(25))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported packed format version {version}")
        if dtype != _DTYPE_F32:
            raise ValueError(f"unsupported dtype code {dtype}")
        pixels = np.frombuffer(f.read(n * c * h * w * 4), dtype="<f4").copy()
        images = torch.from_numpy(pixels).view(n, c, h, w)
        labels = None
        if has_labels:
            raw = np.frombuffer(f.read(n * 8), dtype="<i8").copy()
            labels = torch.from_numpy(raw)
    return TensorDataset(images, labels)


def iter_minibatches(dataset, batch_size, generator, drop_last=True):
    """Yield shuffled minibatch index tensors; incomplete tail dropped by default."""
    perm = torch.randperm(len(dataset), generator=generator)
    for start in range(0, len(dataset), batch_size):
        idx = perm[start:start + batch_size]
        if drop_last and idx.shape[0] < batch_size:
            break
        yield idx
