"""Run configuration: a flat key=value schema with range validation.

A run config merges encoder, adapter, loss, training and evaluation knobs.
Architectural keys (anything that changes parameter shapes or forward
semantics) feed a sha256 hash recorded in checkpoints and reports; eval
refuses a checkpoint whose hash disagrees with its own config.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .encoders import EncoderConfig
from .losses import LossConfig
from .model import ModelConfig
from .train import TrainConfig


class ConfigError(ValueError):
    """Unknown key, bad type, or out-of-range value in a run config."""


@dataclass
class Field:
    default: object
    kind: type
    lo: float | None = None
    hi: float | None = None
    choices: tuple | None = None
    arch: bool = False


SCHEMA: dict[str, Field] = {
    # architecture
    "image_size": Field(64, int, 16, 256, arch=True),
    "patch_size": Field(8, int, 2, 32, arch=True),
    "d_vision": Field(128, int, 8, 1024, arch=True),
    "d_text": Field(128, int, 8, 1024, arch=True),
    "depth": Field(6, int, 1, 24, arch=True),
    "heads": Field(4, int, 1, 16, arch=True),
    "max_text_len": Field(32, int, 4, 128, arch=True),
    "vocab_size": Field(0, int, 0, 1000000, arch=True),  # 0: resolve from vocab file
    "adapter_dim": Field(256, int, 1, 1024, arch=True),
    "depth_limit": Field(0, int, 0, 24, arch=True),      # 0: all but the final block
    "beta": Field(2.35, float, 0.0, 10.0, arch=True),
    "mechanism": Field("difference", str, choices=("difference", "scaling", "none"), arch=True),
    "order": Field("vision_first", str, choices=("vision_first", "text_first", "one_way"), arch=True),
    "gate_init_logit": Field(0.0, float, -10.0, 10.0),
    "upscale_blocks": Field(2, int, 0, 3, arch=True),
    "adapters_enabled": Field(True, bool, arch=True),
    "deterministic_values": Field(False, bool, arch=True),
    "dtype": Field("float64", str, choices=("float64", "float32"), arch=True),
    # losses
    "lambda_seg": Field(0.5, float, 0.0, 10.0),
    "lambda_softcon": Field(0.1, float, 0.0, 10.0),
    "tau": Field(0.2, float, 1e-6, 10.0),
    "dice_smooth": Field(1.0, float, 0.0, 100.0),
    "pooling": Field("average", str, choices=("average", "cls")),
    "logit_scale_init": Field(2.659, float, -5.0, 10.0),
    # training
    "epochs": Field(60, int, 1, 10000),
    "lr": Field(3e-4, float, 0.0, 1.0),
    "batch_size": Field(24, int, 1, 512),
    "adam_beta1": Field(0.9, float, 0.0, 1.0),
    "adam_beta2": Field(0.999, float, 0.0, 1.0),
    "adam_eps": Field(1e-8, float, 1e-16, 1.0),
    "grad_clip": Field(5.0, float, 0.0, 1000.0),
    "seed": Field(0, int, 0, 2**31 - 1),
    "checkpoint_every": Field(0, int, 0, 10000),
    # evaluation
    "mc_samples": Field(30, int, 1, 100000),
    "nsd_tol_px": Field(2.0, float, 0.0, 32.0),
    "brier_band_px": Field(5.0, float, 0.0, 64.0),
    "eval_region": Field("foreground_band", str, choices=("foreground_band", "full")),
    "eval_batch": Field(24, int, 1, 512),
    "spearman_scope": Field("pooled", str, choices=("pooled", "per_image")),
}


def _coerce(key: str, raw: str):
    spec = SCHEMA[key]
    if spec.kind is bool:
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return spec.kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {spec.kind.__name__}, got {raw!r}") from None


class RunConfig:
    def __init__(self, values: dict | None = None):
        self._values = {k: f.default for k, f in SCHEMA.items()}
        if values:
            for k, v in values.items():
                self.set(k, v)

    def __getattr__(self, key):
        values = object.__getattribute__(self, "_values")
        if key in values:
            return values[key]
        raise AttributeError(key)

    def set(self, key: str, value):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        spec = SCHEMA[key]
        if isinstance(value, str) and spec.kind is not str:
            value = _coerce(key, value)
        if spec.kind is float and isinstance(value, int):
            value = float(value)
        if not isinstance(value, spec.kind):
            raise ConfigError(f"{key}: expected {spec.kind.__name__}")
        if spec.choices is not None and value not in spec.choices:
            raise ConfigError(f"{key}: must be one of {spec.choices}, got {value!r}")
        if spec.lo is not None and spec.kind is not bool and not (spec.lo <= value <= spec.hi):
            raise ConfigError(f"{key}: {value} outside [{spec.lo}, {spec.hi}]")
        self._values[key] = value

    def update(self, pairs: dict):
        for k, v in pairs.items():
            self.set(k, v)

    @classmethod
    def from_file(cls, path: str, overrides: list[str] | None = None) -> "RunConfig":
        cfg = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, _, raw = stripped.partition("=")
                cfg.set(key.strip(), raw.strip())
        for item in overrides or []:
            if "=" not in item:
                raise ConfigError(f"override {item!r}: expected key=value")
            key, _, raw = item.partition("=")
            cfg.set(key.strip(), raw.strip())
        return cfg

    def lines(self, keys=None) -> list[str]:
        sel = keys if keys is not None else sorted(SCHEMA)
        return [f"{k}={self._values[k]}" for k in sel]

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.lines()) + "\n")

    def arch_hash(self) -> str:
        arch_keys = sorted(k for k, f in SCHEMA.items() if f.arch)
        blob = "\n".join(self.lines(arch_keys)).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    # -- typed views -------------------------------------------------------

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            image_size=self.image_size, patch_size=self.patch_size,
            d_vision=self.d_vision, d_text=self.d_text, depth=self.depth,
            heads=self.heads, vocab_size=self.vocab_size,
            max_text_len=self.max_text_len)

    def loss_config(self) -> LossConfig:
        return LossConfig(
            lambda_seg=self.lambda_seg, lambda_softcon=self.lambda_softcon,
            tau=self.tau, dice_smooth=self.dice_smooth, pooling=self.pooling,
            logit_scale_init=self.logit_scale_init)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            encoder=self.encoder_config(), loss=self.loss_config(),
            adapter_dim=self.adapter_dim,
            depth_limit=self.depth_limit or None,
            beta=self.beta, mechanism=self.mechanism, order=self.order,
            gate_init_logit=self.gate_init_logit,
            upscale_blocks=self.upscale_blocks,
            adapters_enabled=self.adapters_enabled,
            deterministic_values=self.deterministic_values)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, lr=self.lr, batch_size=self.batch_size,
            adam_beta1=self.adam_beta1, adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps, grad_clip=self.grad_clip, seed=self.seed,
            checkpoint_every=self.checkpoint_every)
