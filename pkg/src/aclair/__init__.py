"""Adversarial contrastive pre-training with invariant regularization."""

from .attacks import PGDConfig, pgd_pair, project_linf
from .augment import augment, make_view_pair
from .losses import (ProbabilityTable, RegularizerConfig, ViewBatch, acl_loss,
                     air_decomposition, air_loss, cl_loss, kl_batch, sir_loss,
                     total_objective, uncalibrated_air)
from .models import BranchTag, DualBranchEncoder, EncoderSpec, TinyEncoder
from .schedules import cosine_lr, dynacl_schedule
from .training import TrainConfig, pretrain

__version__ = "0.1.0"
