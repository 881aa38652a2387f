"""Contrastive losses and invariant regularizers.

Implements the NT-Xent contrastive loss, its adversarially weighted variant,
the softmax conditional-probability tables over batch similarities, and the
KL-based invariant regularizers (adversarial AIR, its standard-view
counterpart SIR, the uncalibrated two-KL ablation, and the decomposition and
proxy-label identity evaluators used by the verification suite).
"""

from dataclasses import dataclass, field

import torch

from .models import BranchTag

KL_FLOOR = 1e-12


@dataclass
class RegularizerConfig:
    lambda1: float = 0.5
    lambda2: float = 0.5
    epsilon: float = 8.0 / 255.0
    temperature: float = 0.5
    omega: float = 0.0
    calibrated: bool = True

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.epsilon < 0:
            raise ValueError("lambda1, lambda2 and epsilon must be nonnegative")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError("omega must be in [0,1]")


@dataclass
class ViewBatch:
    """Originals, two augmented views, and (once the adversary has run) their
    adversarial counterparts. All tensors share shape (beta, C, H, W)."""

    x: torch.Tensor
    view_i: torch.Tensor
    view_j: torch.Tensor
    adv_i: torch.Tensor = None
    adv_j: torch.Tensor = None

    def __post_init__(self):
        for name in ("view_i", "view_j", "adv_i", "adv_j"):
            t = getattr(self, name)
            if t is not None and t.shape != self.x.shape:
                raise ValueError(f"{name} shape {tuple(t.shape)} != {tuple(self.x.shape)}")

    @property
    def beta(self):
        return self.x.shape[0]

    @property
    def has_adversarial(self):
        return self.adv_i is not None and self.adv_j is not None

    def require_adversarial(self):
        if not self.has_adversarial:
            raise ValueError("adversarial views are required but missing")


@dataclass
class ProbabilityTable:
    kind: str     # y_given_adv | adv_given_x | y_given_x
    branch: str   # "i" or "j"
    values: torch.Tensor = field(default=None)

    def __post_init__(self):
        v = self.values.detach()
        if (v < 0).any() or abs(float(v.sum()) - 1.0) > 1e-6:
            raise ValueError(f"{self.kind}/{self.branch} is not a probability vector")


def cosine_similarity(u, v):
    nu, nv = u.norm(), v.norm()
    if nu == 0 or nv == 0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return torch.dot(u, v) / (nu * nv)


def _normalize_rows(z):
    norms = z.norm(dim=1, keepdim=True)
    if (norms == 0).any():
        raise ValueError("zero embedding row")
    return z / norms


def nt_xent(z_i, z_j, t):
    """Per-sample NT-Xent losses, both directions summed, over a (beta, d)
    embedding pair. Denominators range over both views minus the anchor."""
    if z_i.shape[0] == 0:
        raise ValueError("empty batch")
    beta = z_i.shape[0]
    z = _normalize_rows(torch.cat([z_i, z_j], dim=0))
    sim = (z @ z.T) / t
    if not torch.isfinite(sim).all():
        raise FloatingPointError("non-finite similarity matrix")
    mask = torch.eye(2 * beta, dtype=torch.bool, device=z.device)
    logits = sim.masked_fill(mask, float("-inf"))
    denom = torch.logsumexp(logits, dim=1)
    pos = torch.cat([sim[torch.arange(beta), torch.arange(beta) + beta],
                     sim[torch.arange(beta) + beta, torch.arange(beta)]])
    losses = denom - pos
    return losses[:beta] + losses[beta:]


def cl_loss_from_embeddings(z_i, z_j, t):
    return nt_xent(z_i, z_j, t).sum()


def _embed(model, x, tag):
    z = model(x, tag)
    if not torch.isfinite(z).all():
        raise FloatingPointError("non-finite embeddings")
    return z


def cl_loss(batch: ViewBatch, model, t, use_adv=False):
    """Summed contrastive loss over the batch on natural or adversarial views."""
    if use_adv:
        batch.require_adversarial()
        tag, vi, vj = BranchTag.ADVERSARIAL, batch.adv_i, batch.adv_j
    else:
        tag, vi, vj = BranchTag.STANDARD, batch.view_i, batch.view_j
    return cl_loss_from_embeddings(_embed(model, vi, tag), _embed(model, vj, tag), t)


def acl_loss(batch: ViewBatch, model, t, omega):
    """(1+omega) * adversarial contrastive loss + (1-omega) * natural one."""
    batch.require_adversarial()
    if not 0.0 <= omega <= 1.0:
        raise ValueError("omega must be in [0,1]")
    return ((1.0 + omega) * cl_loss(batch, model, t, use_adv=True)
            + (1.0 - omega) * cl_loss(batch, model, t, use_adv=False))


def diag_softmax(z_a, z_b, t):
    """Softmax over the batch of diagonal cosine similarities sim(a_k, b_k)/t."""
    za, zb = _normalize_rows(z_a), _normalize_rows(z_b)
    sims = (za * zb).sum(dim=1) / t
    return torch.softmax(sims, dim=0)


def _branch_views(batch, branch):
    if branch == "i":
        return batch.view_i, batch.adv_i
    if branch == "j":
        return batch.view_j, batch.adv_j
    raise ValueError(f"branch must be 'i' or 'j', got {branch!r}")


def prob_y_given_adv(batch, model, t, branch):
    """p(y|x_adv) under augmentation branch: softmax of sim(f(x), f(adv^u))."""
    batch.require_adversarial()
    _, adv = _branch_views(batch, branch)
    vals = diag_softmax(_embed(model, batch.x, BranchTag.STANDARD),
                        _embed(model, adv, BranchTag.ADVERSARIAL), t)
    return ProbabilityTable("y_given_adv", branch, vals)


def prob_adv_given_x(batch, model, t, branch):
    """p(x_adv|x) under augmentation branch: softmax of sim(f(adv^u), f(x^u))."""
    batch.require_adversarial()
    view, adv = _branch_views(batch, branch)
    vals = diag_softmax(_embed(model, adv, BranchTag.ADVERSARIAL),
                        _embed(model, view, BranchTag.STANDARD), t)
    return ProbabilityTable("adv_given_x", branch, vals)


def prob_y_given_x(batch, model, t, branch):
    """p(y|x) under augmentation branch: softmax of sim(f(x), f(x^u))."""
    view, _ = _branch_views(batch, branch)
    vals = diag_softmax(_embed(model, batch.x, BranchTag.STANDARD),
                        _embed(model, view, BranchTag.STANDARD), t)
    return ProbabilityTable("y_given_x", branch, vals)


def _vals(p):
    return p.values if isinstance(p, ProbabilityTable) else p


def kl_batch(p, q):
    """KL(p || q; B) = sum_k p_k log(p_k / q_k), with q clamped to a floor and
    0 * log 0 defined as 0. Applied verbatim to unnormalized weight vectors as
    well (the product distributions inside the adversarial regularizer)."""
    p, q = _vals(p), _vals(q)
    if p.shape != q.shape:
        raise ValueError("length mismatch between p and q")
    q = q.clamp(min=KL_FLOOR)
    terms = torch.where(p > 0, p * (p.clamp(min=KL_FLOOR) / q).log(),
                        torch.zeros_like(p))
    return terms.sum()


def air_loss(batch, model, t):
    """Adversarial invariant regularizer: KL between the elementwise products
    p(y|adv) * p(adv|x) of the two augmentation branches. The products are not
    renormalized; the decomposition identity holds only under this reading."""
    p_y_i = prob_y_given_adv(batch, model, t, "i").values
    p_y_j = prob_y_given_adv(batch, model, t, "j").values
    p_a_i = prob_adv_given_x(batch, model, t, "i").values
    p_a_j = prob_adv_given_x(batch, model, t, "j").values
    return kl_batch(p_y_i * p_a_i, p_y_j * p_a_j)


def sir_loss(batch, model, t):
    """Standard invariant regularizer: KL between the two natural-view
    probability tables."""
    return kl_batch(prob_y_given_x(batch, model, t, "i"),
                    prob_y_given_x(batch, model, t, "j"))


def air_decomposition(batch, model, t):
    """Split of the adversarial regularizer into a p(adv|x)-weighted KL over
    p(y|adv) plus a p(y|adv)-weighted KL over p(adv|x)."""
    p_y_i = prob_y_given_adv(batch, model, t, "i").values
    p_y_j = prob_y_given_adv(batch, model, t, "j").values.clamp(min=KL_FLOOR)
    p_a_i = prob_adv_given_x(batch, model, t, "i").values
    p_a_j = prob_adv_given_x(batch, model, t, "j").values.clamp(min=KL_FLOOR)
    term1 = (p_a_i * p_y_i * (p_y_i.clamp(min=KL_FLOOR) / p_y_j).log()).sum()
    term2 = (p_y_i * p_a_i * (p_a_i.clamp(min=KL_FLOOR) / p_a_j).log()).sum()
    return term1, term2


def uncalibrated_air(batch, model, t):
    """Two-KL ablation: drops the branch-i confidence weights that calibrate
    each KL term in the full adversarial regularizer."""
    return (kl_batch(prob_y_given_adv(batch, model, t, "i"),
                     prob_y_given_adv(batch, model, t, "j"))
            + kl_batch(prob_adv_given_x(batch, model, t, "i"),
                       prob_adv_given_x(batch, model, t, "j")))


def total_objective(batch, model, cfg: RegularizerConfig):
    """acl + lambda1 * standard regularizer + lambda2 * adversarial one."""
    total = acl_loss(batch, model, cfg.temperature, cfg.omega)
    if cfg.lambda1 > 0:
        total = total + cfg.lambda1 * sir_loss(batch, model, cfg.temperature)
    if cfg.lambda2 > 0:
        adv_reg = air_loss if cfg.calibrated else uncalibrated_air
        total = total + cfg.lambda2 * adv_reg(batch, model, cfg.temperature)
    return total


def proxy_label_nll(z_i, z_j, t):
    """Per-sample negative log of the (2*beta - 1)-way softmax probability that
    each view assigns to its peer view, both directions summed.

    Computed by explicit per-sample enumeration, independently of nt_xent,
    so the two serve as mutual oracles for the contrastive-loss identity.
    """
    beta = z_i.shape[0]
    z = _normalize_rows(torch.cat([z_i, z_j], dim=0))
    out = torch.zeros(beta, dtype=z.dtype, device=z.device)
    for k in range(beta):
        for anchor, peer in ((k, k + beta), (k + beta, k)):
            candidates = [c for c in range(2 * beta) if c != anchor]
            logits = torch.stack([torch.dot(z[anchor], z[c]) / t for c in candidates])
            probs = torch.softmax(logits, dim=0)
            out[k] = out[k] - probs[candidates.index(peer)].log()
    return out


def proxy_label_identity_gap(batch, model, t, use_adv=False):
    """Max per-sample gap between the contrastive loss and the negative log
    proxy-label probabilities it should equal."""
    if use_adv:
        batch.require_adversarial()
        tag, vi, vj = BranchTag.ADVERSARIAL, batch.adv_i, batch.adv_j
    else:
        tag, vi, vj = BranchTag.STANDARD, batch.view_i, batch.view_j
    z_i, z_j = _embed(model, vi, tag), _embed(model, vj, tag)
    lhs = nt_xent(z_i, z_j, t)
    rhs = proxy_label_nll(z_i, z_j, t)
    return float((lhs - rhs).abs().max())
