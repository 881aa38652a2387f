import pytest
import torch

from aclair.attacks import project_linf
from aclair.losses import ViewBatch
from aclair.models import DualBranchEncoder, EncoderSpec, TinyEncoder

IMAGE_SHAPE = (3, 4, 4)


def random_view_batch(seed, beta=4, eps=8.0 / 255.0, dtype=torch.float64,
                      shape=IMAGE_SHAPE):
    g = torch.Generator().manual_seed(seed)
    x = torch.rand((beta, *shape), generator=g, dtype=dtype)
    vi = (x + 0.1 * torch.randn(x.shape, generator=g, dtype=dtype)).clamp(0, 1)
    vj = (x + 0.1 * torch.randn(x.shape, generator=g, dtype=dtype)).clamp(0, 1)
    ai = project_linf(vi + eps * (2 * torch.rand(x.shape, generator=g, dtype=dtype) - 1), vi, eps)
    aj = project_linf(vj + eps * (2 * torch.rand(x.shape, generator=g, dtype=dtype) - 1), vj, eps)
    return ViewBatch(x, vi, vj, ai, aj)


@pytest.fixture
def tiny_model():
    torch.manual_seed(0)
    n = IMAGE_SHAPE[0] * IMAGE_SHAPE[1] * IMAGE_SHAPE[2]
    return TinyEncoder(n, hidden=8, representation_dim=4, projector_dim=4).double()


@pytest.fixture
def micro_encoder():
    torch.manual_seed(0)
    spec = EncoderSpec(in_channels=3, widths=(8, 16), blocks_per_stage=1,
                       projector_hidden=32, projector_dim=16)
    return DualBranchEncoder(spec)
