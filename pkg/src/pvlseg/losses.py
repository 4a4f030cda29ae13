"""Training objectives: Dice+BCE segmentation loss and the soft
patch-level contrastive loss with text-similarity soft targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

POOLINGS = ("average", "cls")


@dataclass
class LossConfig:
    lambda_seg: float = 0.5
    lambda_softcon: float = 0.1
    tau: float = 0.2
    dice_smooth: float = 1.0
    pooling: str = "average"
    logit_scale_init: float = 2.659  # ~ln(1/0.07), the usual contrastive scale

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.lambda_seg < 0 or self.lambda_softcon < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.pooling not in POOLINGS:
            raise ValueError(f"unknown pooling {self.pooling!r}")


def dice_bce(logits: Tensor, target: np.ndarray, smooth: float = 1.0) -> Tensor:
    """0.5 * DiceLoss + 0.5 * BCE on mask logits [B,H,W] vs {0,1} targets."""
    target = np.asarray(target)
    if logits.shape != target.shape:
        raise T.ShapeError(f"logits {logits.shape} vs target {target.shape}")
    if not np.isin(target, (0, 1)).all():
        raise ValueError("target mask must be binary")
    y = T.Tensor(target.astype(logits.dtype))
    p = T.sigmoid(logits)
    inter = T.sum_axes(p * y)
    denom = T.sum_axes(p) + T.sum_axes(y)
    dice_loss = 1.0 - (2.0 * inter + smooth) / (denom + smooth)
    # logit-stable BCE: max(m,0) - m*y + log(1+exp(-|m|))
    m = logits
    bce = T.mean_axes(T.softplus(-1.0 * m) * y + T.softplus(m) * (1.0 - y))
    return 0.5 * dice_loss + 0.5 * bce


def _soft_cross_entropy(logits: Tensor, targets: Tensor) -> Tensor:
    """-(1/B) sum_ij targets_ij * log softmax(logits_i)_j."""
    b = logits.shape[0]
    shifted = logits - T.Tensor(logits.data.max(axis=-1, keepdims=True))
    log_z = T.log(T.sum_axes(T.exp(shifted), axis=-1, keepdims=True))
    log_probs = shifted - log_z
    return -1.0 / b * T.sum_axes(targets * log_probs)


def soft_targets(p_t: Tensor, tau: float) -> Tensor:
    """Batch text-similarity soft targets G = softmax(p_t p_t^T / tau)."""
    return T.softmax_lastdim(T.matmul(p_t, T.transpose_last2(p_t)) / tau)


def soft_contrastive(z_v_patches: Tensor, z_t_eos: Tensor, cfg: LossConfig,
                     logit_scale: Tensor, cls_token: Tensor | None = None) -> Tensor:
    """Symmetric soft contrastive loss over batch image/text pairs.

    Visual side pools patch tokens (mean over the patch axis, or the [CLS]
    token under cls pooling); both sides are L2-normalized before the
    scaled similarity matrices.
    """
    if cfg.pooling == "cls":
        if cls_token is None:
            raise ValueError("cls pooling needs the [CLS] token")
        pooled = cls_token
    else:
        pooled = T.mean_axes(z_v_patches, axis=1)
    p_v = T.l2_normalize_lastdim(pooled)
    p_t = T.l2_normalize_lastdim(z_t_eos)
    scale = T.exp(logit_scale)
    p_v2t = scale * T.matmul(p_v, T.transpose_last2(p_t))
    p_t2v = T.transpose_last2(p_v2t)
    g = soft_targets(p_t, cfg.tau)
    g_t = T.transpose_last2(g)
    return 0.5 * (_soft_cross_entropy(p_t2v, g) + _soft_cross_entropy(p_v2t, g_t))


def total_loss(seg: Tensor, con: Tensor, cfg: LossConfig) -> Tensor:
    """Weighted objective lambda_seg * seg + lambda_softcon * con."""
    return cfg.lambda_seg * seg + cfg.lambda_softcon * con
