"""Pre-training loop: seeded view generation, joint PGD, SGD on the combined
objective with cosine learning-rate annealing and epoch-level scheduling."""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .augment import make_view_pair, view_seed
from .attacks import PGDConfig, pgd_pair
from .data import iter_minibatches
from .losses import RegularizerConfig, ViewBatch, acl_loss, air_loss, sir_loss, uncalibrated_air
from .models import SchedulerState, save_checkpoint
from .schedules import cosine_lr, dynacl_schedule


@dataclass
class TrainConfig:
    lr: float = 0.1
    epochs: int = 20
    batch_size: int = 64
    momentum: float = 0.9
    weight_decay: float = 1e-4
    mode: str = "dynacl"  # "acl" fixes mu=1, omega=0
    decay_period: int = 50
    reweight_rate: float = 2.0 / 3.0
    regularizer: RegularizerConfig = field(default_factory=RegularizerConfig)
    attack: PGDConfig = field(default_factory=PGDConfig)
    seed: int = 0
    checkpoint_every: int = None  # defaults to max(1, epochs // 20)

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for contrastive denominators")
        if self.mode not in ("acl", "dynacl"):
            raise ValueError(f"mode must be 'acl' or 'dynacl', got {self.mode!r}")


def _num_workers():
    try:
        return max(1, int(os.environ.get("AIR_NUM_WORKERS", "1")))
    except ValueError:
        return 1


def build_view_batch(images, indices, mu, base_seed, epoch):
    """Augment each sample with per-(sample, epoch, view) seeds; parallel over
    samples when AIR_NUM_WORKERS > 1 (seeding makes order irrelevant)."""
    def one(pos):
        idx = int(indices[pos])
        si = view_seed(base_seed, epoch, idx, 0)
        sj = view_seed(base_seed, epoch, idx, 1)
        return make_view_pair(images[idx], mu, si, sj)

    n = len(indices)
    workers = _num_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(one, range(n)))
    else:
        pairs = [one(p) for p in range(n)]
    view_i = torch.stack([p[0] for p in pairs])
    view_j = torch.stack([p[1] for p in pairs])
    return ViewBatch(x=images[indices], view_i=view_i, view_j=view_j)


def objective_terms(batch, model, cfg: RegularizerConfig, omega):
    """The combined objective and its pieces, evaluated once per step."""
    acl = acl_loss(batch, model, cfg.temperature, omega)
    sir = sir_loss(batch, model, cfg.temperature)
    adv_reg = air_loss if cfg.calibrated else uncalibrated_air
    air = adv_reg(batch, model, cfg.temperature)
    total = acl + cfg.lambda1 * sir + cfg.lambda2 * air
    return {"acl_loss": acl, "sir": sir, "air": air, "total": total}


def pretrain(dataset, model, cfg: TrainConfig, out_dir):
    """Run the pre-training loop; writes metrics JSONL and checkpoints, and
    returns the final checkpoint path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.jsonl"
    torch.manual_seed(cfg.seed)
    shuffle_gen = torch.Generator().manual_seed(cfg.seed + 1)
    attack_gen = torch.Generator().manual_seed(cfg.seed + 2)

    optimizer = torch.optim.SGD(model.parameters(), lr=cfg.lr,
                                momentum=cfg.momentum,
                                weight_decay=cfg.weight_decay)
    batches_per_epoch = len(dataset) // cfg.batch_size
    if batches_per_epoch == 0:
        raise ValueError("dataset smaller than one batch")
    total_steps = cfg.epochs * batches_per_epoch
    ckpt_every = cfg.checkpoint_every or max(1, cfg.epochs // 20)

    step = 0
    with open(metrics_path, "w") as mf:
        for epoch in range(cfg.epochs):
            if cfg.mode == "dynacl":
                mu, omega = dynacl_schedule(epoch, cfg.decay_period, cfg.epochs,
                                            cfg.reweight_rate)
            else:
                mu, omega = 1.0, 0.0
            model.train()
            sums = {"acl_loss": 0.0, "sir": 0.0, "air": 0.0, "total": 0.0}
            nb = 0
            epoch_lr = None
            for indices in iter_minibatches(dataset, cfg.batch_size, shuffle_gen):
                batch = build_view_batch(dataset.images, indices, mu, cfg.seed, epoch)
                batch.adv_i, batch.adv_j = pgd_pair(
                    batch.view_i, batch.view_j, model,
                    cfg.regularizer.temperature, cfg.attack, attack_gen)
                model.train()
                terms = objective_terms(batch, model, cfg.regularizer, omega)
                total = terms["total"]
                if not torch.isfinite(total):
                    save_checkpoint(out_dir / "diagnostic.ckpt", model, model.spec,
                                    optimizer, epoch)
                    raise FloatingPointError(
                        f"non-finite objective at epoch {epoch}; "
                        f"diagnostic checkpoint written")
                lr = cosine_lr(step, total_steps, cfg.lr)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                optimizer.zero_grad()
                total.backward()
                optimizer.step()
                epoch_lr = lr
                step += 1
                nb += 1
                for k in sums:
                    sums[k] += float(terms[k].detach())
            record = {"epoch": epoch, "lr": epoch_lr, "mu": mu, "omega": omega}
            record.update({k: sums[k] / nb for k in sums})
            mf.write(json.dumps(record) + "\n")
            mf.flush()
            state = SchedulerState(epoch, cfg.epochs, cfg.decay_period,
                                   cfg.reweight_rate, mu, omega)
            if (epoch + 1) % ckpt_every == 0 or epoch == cfg.epochs - 1:
                save_checkpoint(out_dir / f"epoch_{epoch:04d}.ckpt", model,
                                model.spec, optimizer, epoch, state)
    final = out_dir / "final.ckpt"
    save_checkpoint(final, model, model.spec, optimizer, cfg.epochs - 1, state)
    return final
