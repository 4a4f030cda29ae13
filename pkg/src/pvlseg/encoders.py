"""Toy CLIP-style vision and text encoders.

Both are small pre-norm transformers trained from random init: the vision
side patchifies the image and prepends a learnable [CLS] token; the text
side embeds corpus-tokenized prompts under a causal mask and reads its
global embedding at the [EOS] position. joint_forward runs the two towers
block-by-block in lockstep so fusion adapters see same-depth tokens from
both modalities.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .adapter import AdapterStack, adapter_fuse
from .tensor import Rng, Tensor

LN_EPS = 1e-5
NEG_INF = -1e9


class InputError(ValueError):
    """Malformed encoder input (token ids, missing [EOS], ...)."""


class ConfigurationError(ValueError):
    """Inconsistent encoder/adapter configuration."""


@dataclass
class EncoderConfig:
    image_size: int = 64
    patch_size: int = 8
    d_vision: int = 128
    d_text: int = 128
    depth: int = 6
    heads: int = 4
    vocab_size: int = 0
    max_text_len: int = 32

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ConfigurationError("image size must be divisible by patch size")
        if self.max_text_len < 2:
            raise ConfigurationError("max_text_len must leave room for [EOS]")
        if self.d_vision % self.heads or self.d_text % self.heads:
            raise ConfigurationError("embed dims must be divisible by head count")

    @property
    def n_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2


# -- tokenizer ---------------------------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class Vocabulary:
    """Corpus-built tokenizer with reserved [PAD]=0, [EOS]=1, [UNK]=2."""

    PAD, EOS, UNK = 0, 1, 2
    RESERVED = 3

    def __init__(self, tokens: list[str]):
        self.tokens = list(tokens)
        self._ids = {tok: self.RESERVED + i for i, tok in enumerate(self.tokens)}

    @classmethod
    def build(cls, texts) -> "Vocabulary":
        seen = set()
        for text in texts:
            seen.update(_TOKEN_RE.findall(text.lower()))
        return cls(sorted(seen))

    @property
    def size(self) -> int:
        return self.RESERVED + len(self.tokens)

    def encode(self, text: str, max_len: int) -> np.ndarray:
        """Token ids padded to max_len with exactly one [EOS]."""
        words = _TOKEN_RE.findall(text.lower())[: max_len - 1]
        ids = [self._ids.get(w, self.UNK) for w in words]
        ids.append(self.EOS)
        ids.extend([self.PAD] * (max_len - len(ids)))
        return np.asarray(ids, dtype=np.int64)

    def known_fraction(self, text: str) -> float:
        words = _TOKEN_RE.findall(text.lower())
        if not words:
            return 0.0
        return sum(w in self._ids for w in words) / len(words)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.strip()])


# -- parameters --------------------------------------------------------------


@dataclass
class BlockParams:
    ln1_g: Tensor
    ln1_b: Tensor
    w_q: Tensor
    b_q: Tensor
    w_k: Tensor
    b_k: Tensor
    w_v: Tensor
    b_v: Tensor
    w_o: Tensor
    b_o: Tensor
    ln2_g: Tensor
    ln2_b: Tensor
    w_ff1: Tensor
    b_ff1: Tensor
    w_ff2: Tensor
    b_ff2: Tensor

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{name}": getattr(self, name) for name in self.__dataclass_fields__}


@dataclass
class VisionEncoderParams:
    patch_w: Tensor
    patch_b: Tensor
    cls_token: Tensor
    pos: Tensor
    ln_f_g: Tensor
    ln_f_b: Tensor
    blocks: list[BlockParams] = field(default_factory=list)

    def tensors(self, prefix: str = "vision") -> dict[str, Tensor]:
        out = {f"{prefix}.patch_w": self.patch_w, f"{prefix}.patch_b": self.patch_b,
               f"{prefix}.cls_token": self.cls_token, f"{prefix}.pos": self.pos,
               f"{prefix}.ln_f_g": self.ln_f_g, f"{prefix}.ln_f_b": self.ln_f_b}
        for i, blk in enumerate(self.blocks):
            out.update(blk.tensors(f"{prefix}.block{i + 1}"))
        return out


@dataclass
class TextEncoderParams:
    tok_emb: Tensor
    pos: Tensor
    ln_f_g: Tensor
    ln_f_b: Tensor
    blocks: list[BlockParams] = field(default_factory=list)

    def tensors(self, prefix: str = "text") -> dict[str, Tensor]:
        out = {f"{prefix}.tok_emb": self.tok_emb, f"{prefix}.pos": self.pos,
               f"{prefix}.ln_f_g": self.ln_f_g, f"{prefix}.ln_f_b": self.ln_f_b}
        for i, blk in enumerate(self.blocks):
            out.update(blk.tensors(f"{prefix}.block{i + 1}"))
        return out


def _init_block(d: int, rng: Rng, std: float, dtype) -> BlockParams:
    def w(shape):
        return T.parameter(rng.normal(shape, dtype=dtype) * std)

    def zeros(shape):
        return T.parameter(np.zeros(shape, dtype=dtype))

    def ones(shape):
        return T.parameter(np.ones(shape, dtype=dtype))

    return BlockParams(
        ln1_g=ones((d,)), ln1_b=zeros((d,)),
        w_q=w((d, d)), b_q=zeros((d,)),
        w_k=w((d, d)), b_k=zeros((d,)),
        w_v=w((d, d)), b_v=zeros((d,)),
        w_o=w((d, d)), b_o=zeros((d,)),
        ln2_g=ones((d,)), ln2_b=zeros((d,)),
        w_ff1=w((d, 4 * d)), b_ff1=zeros((4 * d,)),
        w_ff2=w((4 * d, d)), b_ff2=zeros((d,)),
    )


def init_vision_encoder(cfg: EncoderConfig, rng: Rng, std: float = 0.02,
                        dtype=np.float64) -> VisionEncoderParams:
    in_dim = 3 * cfg.patch_size ** 2
    return VisionEncoderParams(
        patch_w=T.parameter(rng.normal((in_dim, cfg.d_vision), dtype=dtype) * std),
        patch_b=T.parameter(np.zeros(cfg.d_vision, dtype=dtype)),
        cls_token=T.parameter(rng.normal((1, 1, cfg.d_vision), dtype=dtype) * std),
        pos=T.parameter(rng.normal((cfg.n_patches + 1, cfg.d_vision), dtype=dtype) * std),
        ln_f_g=T.parameter(np.ones(cfg.d_vision, dtype=dtype)),
        ln_f_b=T.parameter(np.zeros(cfg.d_vision, dtype=dtype)),
        blocks=[_init_block(cfg.d_vision, rng, std, dtype) for _ in range(cfg.depth)],
    )


def init_text_encoder(cfg: EncoderConfig, rng: Rng, std: float = 0.02,
                      dtype=np.float64) -> TextEncoderParams:
    if cfg.vocab_size < Vocabulary.RESERVED + 1:
        raise ConfigurationError("vocab_size must cover reserved ids plus content")
    return TextEncoderParams(
        tok_emb=T.parameter(rng.normal((cfg.vocab_size, cfg.d_text), dtype=dtype) * std),
        pos=T.parameter(rng.normal((cfg.max_text_len, cfg.d_text), dtype=dtype) * std),
        ln_f_g=T.parameter(np.ones(cfg.d_text, dtype=dtype)),
        ln_f_b=T.parameter(np.zeros(cfg.d_text, dtype=dtype)),
        blocks=[_init_block(cfg.d_text, rng, std, dtype) for _ in range(cfg.depth)],
    )


# -- forward pieces ----------------------------------------------------------


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    mu = T.mean_axes(x, axis=-1, keepdims=True)
    centered = x - mu
    var = T.mean_axes(T.square(centered), axis=-1, keepdims=True)
    return centered / T.sqrt(var + LN_EPS) * gamma + beta


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return T.matmul(x, w) + b


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, t, d = x.shape
    return T.permute(T.reshape(x, (b, t, heads, d // heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, h, t, dh = x.shape
    return T.reshape(T.permute(x, (0, 2, 1, 3)), (b, t, h * dh))


def block_forward(bp: BlockParams, x: Tensor, heads: int,
                  mask: np.ndarray | None = None) -> Tensor:
    h = layer_norm(x, bp.ln1_g, bp.ln1_b)
    q = _split_heads(_linear(h, bp.w_q, bp.b_q), heads)
    k = _split_heads(_linear(h, bp.w_k, bp.b_k), heads)
    v = _split_heads(_linear(h, bp.w_v, bp.b_v), heads)
    dh = q.shape[-1]
    scores = T.matmul(q, T.transpose_last2(k)) / math.sqrt(dh)
    if mask is not None:
        scores = scores + T.Tensor(mask.astype(x.dtype))
    attn = T.softmax_lastdim(scores)
    ctx = _merge_heads(T.matmul(attn, v))
    x = x + _linear(ctx, bp.w_o, bp.b_o)
    h2 = layer_norm(x, bp.ln2_g, bp.ln2_b)
    ff = _linear(T.gelu(_linear(h2, bp.w_ff1, bp.b_ff1)), bp.w_ff2, bp.b_ff2)
    return x + ff


def causal_mask(t: int) -> np.ndarray:
    return np.triu(np.full((t, t), NEG_INF), k=1)


def _vision_embed(cfg: EncoderConfig, params: VisionEncoderParams, x_v: Tensor) -> Tensor:
    b, c, h, w = x_v.shape
    if (c, h, w) != (3, cfg.image_size, cfg.image_size):
        raise T.ShapeError(f"expected [B,3,{cfg.image_size},{cfg.image_size}] image, got {x_v.shape}")
    ps = cfg.patch_size
    gh = h // ps
    patches = T.reshape(
        T.permute(T.reshape(x_v, (b, c, gh, ps, gh, ps)), (0, 2, 4, 1, 3, 5)),
        (b, gh * gh, c * ps * ps))
    tokens = _linear(patches, params.patch_w, params.patch_b)
    cls = T.broadcast_to(params.cls_token, (b, 1, cfg.d_vision))
    return T.concat([cls, tokens], axis=1) + params.pos


def _text_embed(cfg: EncoderConfig, params: TextEncoderParams, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    if ids.ndim != 2 or ids.shape[1] != cfg.max_text_len:
        raise T.ShapeError(f"expected [B,{cfg.max_text_len}] token ids, got {ids.shape}")
    if ids.max() >= cfg.vocab_size or ids.min() < 0:
        raise InputError("token id outside vocabulary")
    if not ((ids == Vocabulary.EOS).sum(axis=1) == 1).all():
        raise InputError("each prompt row must contain exactly one [EOS]")
    return T.take_rows(params.tok_emb, ids) + params.pos


def eos_positions(ids: np.ndarray) -> np.ndarray:
    return np.argmax(np.asarray(ids) == Vocabulary.EOS, axis=1)


def encode_image(cfg: EncoderConfig, params: VisionEncoderParams, x_v: Tensor) -> Tensor:
    """Vision tokens [B, P+1, D_v]; token 0 is [CLS]. No cross-modal fusion."""
    x = _vision_embed(cfg, params, x_v)
    for blk in params.blocks:
        x = block_forward(blk, x, cfg.heads)
    return layer_norm(x, params.ln_f_g, params.ln_f_b)


def encode_text(cfg: EncoderConfig, params: TextEncoderParams, ids: np.ndarray) -> Tensor:
    """Text tokens [B, L, D_t] under a causal mask. No cross-modal fusion."""
    x = _text_embed(cfg, params, ids)
    mask = causal_mask(cfg.max_text_len)
    for blk in params.blocks:
        x = block_forward(blk, x, cfg.heads, mask)
    return layer_norm(x, params.ln_f_g, params.ln_f_b)


def joint_forward(cfg: EncoderConfig, vparams: VisionEncoderParams,
                  tparams: TextEncoderParams, stack: AdapterStack | None,
                  x_v: Tensor, ids: np.ndarray, rng: Rng | None,
                  mode: str) -> tuple[Tensor, Tensor]:
    """Lockstep pass of both towers with adapters fused after scheduled blocks.

    With an empty schedule this equals running the encoders independently.
    """
    schedule = set(stack.schedule) if stack is not None else set()
    if schedule:
        if len(vparams.blocks) != len(tparams.blocks):
            raise ConfigurationError("adapter fusion requires equal encoder depths")
        if max(schedule) > len(vparams.blocks):
            raise ConfigurationError("adapter scheduled past encoder depth")
    v = _vision_embed(cfg, vparams, x_v)
    t = _text_embed(cfg, tparams, ids)
    mask = causal_mask(cfg.max_text_len)
    for n, (vblk, tblk) in enumerate(zip(vparams.blocks, tparams.blocks), start=1):
        v = block_forward(vblk, v, cfg.heads)
        t = block_forward(tblk, t, cfg.heads, mask)
        if n in schedule:
            v, t = adapter_fuse(stack.layers[n], stack.order, v, t, rng, mode)
    v = layer_norm(v, vparams.ln_f_g, vparams.ln_f_b)
    t = layer_norm(t, tparams.ln_f_g, tparams.ln_f_b)
    return v, t
