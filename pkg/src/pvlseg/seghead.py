"""Pixel-text similarity segmentation head.

Patch tokens are L2-normalized, reshaped onto their grid, and upscaled by
a learned stack of nearest-neighbor-upsample + 3x3 conv + GELU blocks
(channels halve per block with a floor of 32). A two-layer MLP maps the
normalized global text embedding to the same channel count; per-pixel
logits are their dot product, bilinearly upsampled to full resolution.
The sigmoid link lives with the losses, not here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .encoders import ConfigurationError
from .tensor import Rng, Tensor

MIN_CHANNELS = 32


def upscale_channel_plan(d_vision: int, n_blocks: int) -> list[int]:
    chans = [d_vision]
    for _ in range(n_blocks):
        chans.append(max(MIN_CHANNELS, chans[-1] // 2))
    return chans


@dataclass
class SegHeadParams:
    conv_w: list[Tensor] = field(default_factory=list)
    conv_b: list[Tensor] = field(default_factory=list)
    phi_w1: Tensor = None
    phi_b1: Tensor = None
    phi_w2: Tensor = None
    phi_b2: Tensor = None
    out_h: int = 64
    out_w: int = 64

    @property
    def n_blocks(self) -> int:
        return len(self.conv_w)

    def tensors(self, prefix: str = "head") -> dict[str, Tensor]:
        out = {}
        for i, (w, b) in enumerate(zip(self.conv_w, self.conv_b)):
            out[f"{prefix}.conv{i + 1}_w"] = w
            out[f"{prefix}.conv{i + 1}_b"] = b
        out[f"{prefix}.phi_w1"] = self.phi_w1
        out[f"{prefix}.phi_b1"] = self.phi_b1
        out[f"{prefix}.phi_w2"] = self.phi_w2
        out[f"{prefix}.phi_b2"] = self.phi_b2
        return out


def init_seg_head(d_vision: int, d_text: int, out_h: int, out_w: int,
                  upscale_blocks: int, rng: Rng, init_std: float = 0.02,
                  dtype=np.float64) -> SegHeadParams:
    chans = upscale_channel_plan(d_vision, upscale_blocks)
    conv_w = [T.parameter(rng.normal((co, ci, 3, 3), dtype=dtype) * init_std)
              for ci, co in zip(chans[:-1], chans[1:])]
    conv_b = [T.parameter(np.zeros(co, dtype=dtype)) for co in chans[1:]]
    c_out = chans[-1]
    return SegHeadParams(
        conv_w=conv_w,
        conv_b=conv_b,
        phi_w1=T.parameter(rng.normal((d_text, d_text), dtype=dtype) * init_std),
        phi_b1=T.parameter(np.zeros(d_text, dtype=dtype)),
        phi_w2=T.parameter(rng.normal((d_text, c_out), dtype=dtype) * init_std),
        phi_b2=T.parameter(np.zeros(c_out, dtype=dtype)),
        out_h=out_h,
        out_w=out_w,
    )


def text_mask_embedding(params: SegHeadParams, z_t_eos: Tensor) -> Tensor:
    """phi: normalized [EOS] embedding -> upscaled-channel space."""
    pt = T.l2_normalize_lastdim(z_t_eos)
    hidden = T.gelu(T.matmul(pt, params.phi_w1) + params.phi_b1)
    return T.matmul(hidden, params.phi_w2) + params.phi_b2


def seg_logits(params: SegHeadParams, z_v_patches: Tensor, z_t_eos: Tensor) -> Tensor:
    """Segmentation logits [B, H, W] from patch tokens [B,P,Dv] and text [B,Dt]."""
    b, p, dv = z_v_patches.shape
    grid = math.isqrt(p)
    if grid * grid != p:
        raise ConfigurationError(f"patch count {p} is not a perfect square")
    pv = T.l2_normalize_lastdim(z_v_patches)
    x = T.permute(T.reshape(pv, (b, grid, grid, dv)), (0, 3, 1, 2))
    for w, bia in zip(params.conv_w, params.conv_b):
        x = T.gelu(T.conv2d_3x3(T.nearest_upsample2x(x), w, bia))
    t = text_mask_embedding(params, z_t_eos)
    logits = T.sum_axes(x * T.reshape(t, (b, t.shape[-1], 1, 1)), axis=1)
    up = T.bilinear_upsample(T.reshape(logits, (b, 1) + logits.shape[-2:]),
                             params.out_h, params.out_w)
    return T.reshape(up, (b, params.out_h, params.out_w))


def mask_probability(logits: Tensor) -> Tensor:
    """Sigmoid link from logits to foreground probability."""
    return T.sigmoid(logits)
