"""Full trainable model: encoders + fusion adapters + segmentation head.

One flat name->Tensor parameter dict drives the optimizer, the gradient
audit, and the checkpoint container.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .adapter import AdapterStack, init_adapter_stack, place_adapters
from .attention import MODES
from .encoders import (
    EncoderConfig,
    TextEncoderParams,
    VisionEncoderParams,
    init_text_encoder,
    init_vision_encoder,
    joint_forward,
)
from .losses import LossConfig
from .seghead import SegHeadParams, init_seg_head, seg_logits
from .tensor import Rng, Tensor


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    adapter_dim: int = 256
    depth_limit: int | None = None  # None -> all but the final block
    beta: float = 2.35
    mechanism: str = "difference"
    order: str = "vision_first"
    gate_init_logit: float = 0.0
    upscale_blocks: int = 2
    adapters_enabled: bool = True
    deterministic_values: bool = False  # train/eval with value means, no sampling


@dataclass
class ForwardOut:
    logits: Tensor   # [B, H, W]
    z_v: Tensor      # [B, P+1, Dv]
    z_t: Tensor      # [B, L, Dt]
    patches: Tensor  # [B, P, Dv]
    cls: Tensor      # [B, Dv]
    eos: Tensor      # [B, Dt]


class SegModel:
    """Text-conditioned segmentation model with probabilistic fusion."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float64):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        enc = cfg.encoder
        rng = Rng(seed, stream=777)
        self.vision = init_vision_encoder(enc, rng, dtype=dtype)
        self.text = init_text_encoder(enc, rng, dtype=dtype)
        if cfg.adapters_enabled:
            schedule = place_adapters(enc.depth, cfg.depth_limit)
            self.adapters: AdapterStack | None = init_adapter_stack(
                enc.d_vision, enc.d_text, cfg.adapter_dim, schedule, rng,
                beta=cfg.beta, mechanism=cfg.mechanism, order=cfg.order,
                gate_init_logit=cfg.gate_init_logit, dtype=dtype)
        else:
            self.adapters = None
        self.head: SegHeadParams = init_seg_head(
            enc.d_vision, enc.d_text, enc.image_size, enc.image_size,
            cfg.upscale_blocks, rng, dtype=dtype)
        self.logit_scale = T.parameter(np.asarray(cfg.loss.logit_scale_init, dtype=dtype))

    # -- parameters --------------------------------------------------------

    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        out.update(self.vision.tensors("vision"))
        out.update(self.text.tensors("text"))
        if self.adapters is not None:
            out.update(self.adapters.tensors("adapter"))
        out.update(self.head.tensors("head"))
        out["contrastive.logit_scale"] = self.logit_scale
        return out

    def zero_grad(self):
        for p in self.named_parameters().values():
            p.grad = None

    # -- forward -----------------------------------------------------------

    def encode(self, images: np.ndarray, ids: np.ndarray, rng: Rng | None,
               mode: str) -> tuple[Tensor, Tensor]:
        """Joint tokens (Z_v [B,P+1,Dv], Z_t [B,L,Dt]) for a batch."""
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if self.cfg.deterministic_values:
            mode = "infer_mean"
        x_v = T.Tensor(np.asarray(images, dtype=self.dtype))
        return joint_forward(self.cfg.encoder, self.vision, self.text,
                             self.adapters, x_v, ids, rng, mode)

    def forward(self, images: np.ndarray, ids: np.ndarray, rng: Rng | None,
                mode: str) -> "ForwardOut":
        """Segmentation logits plus every token view the losses consume."""
        z_v, z_t = self.encode(images, ids, rng, mode)
        from .encoders import eos_positions

        eos = T.select_positions(z_t, eos_positions(ids))
        cls = z_v[:, 0, :]
        patches = z_v[:, 1:, :]
        logits = seg_logits(self.head, patches, eos)
        return ForwardOut(logits=logits, z_v=z_v, z_t=z_t, patches=patches,
                          cls=cls, eos=eos)

    def forward_logits(self, images: np.ndarray, ids: np.ndarray, rng: Rng | None,
                       mode: str) -> tuple[Tensor, Tensor, Tensor]:
        """Segmentation logits [B,H,W] plus the token sequences behind them."""
        out = self.forward(images, ids, rng, mode)
        return out.logits, out.z_v, out.z_t
