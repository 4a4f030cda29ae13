"""Adam training loop with cosine annealing, plus binary checkpoints.

One optimizer step per batch: joint forward in single-sample mode, Dice+BCE
plus the soft contrastive objective, backward, global-norm clipping, Adam
update under a cosine-annealed learning rate. No validation set: the
last-epoch checkpoint is the result.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import Sample, image_to_input
from .encoders import Vocabulary
from .losses import dice_bce, soft_contrastive, total_loss
from .model import SegModel
from .tensor import Rng, Tensor


class TrainDivergenceError(RuntimeError):
    def __init__(self, step: int, last_finite_loss: float):
        super().__init__(f"non-finite loss at step {step}; "
                         f"last finite loss was {last_finite_loss:.6f}")
        self.step = step
        self.last_finite_loss = last_finite_loss


@dataclass
class TrainConfig:
    epochs: int = 60
    lr: float = 3e-4
    batch_size: int = 24
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 5.0
    seed: int = 0
    checkpoint_every: int = 0  # epochs between intermediate saves; 0 = final only

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch size and epochs must be >= 1")


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """lr0 * 0.5 * (1 + cos(pi * step / total_steps))."""
    if step < 0 or step > total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


class Adam:
    """Standard bias-corrected Adam over a name -> Tensor parameter dict."""

    def __init__(self, params: dict[str, Tensor], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def clip_gradients(self) -> float:
        total = 0.0
        for p in self.params.values():
            if p.grad is not None:
                total += float((p.grad.astype(np.float64) ** 2).sum())
        norm = math.sqrt(total)
        limit = self.cfg.grad_clip
        if limit > 0 and norm > limit:
            scale = limit / norm
            for p in self.params.values():
                if p.grad is not None:
                    p.grad = p.grad * scale
        return norm

    def step(self, lr: float):
        self.t += 1
        b1, b2, eps = self.cfg.adam_beta1, self.cfg.adam_beta2, self.cfg.adam_eps
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * (g * g)
            m_hat = self.m[name] / c1
            v_hat = self.v[name] / c2
            p.data = p.data - (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype)


@dataclass
class StepLog:
    step: int
    lr: float
    seg_loss: float
    con_loss: float
    total_loss: float


def _batch_arrays(samples: list[Sample], vocab: Vocabulary, max_len: int, dtype):
    images = np.stack([image_to_input(s.image) for s in samples]).astype(dtype)
    ids = np.stack([vocab.encode(s.text, max_len) for s in samples])
    masks = np.stack([s.mask.astype(np.float64) for s in samples])
    return images, ids, masks


def compute_losses(model: SegModel, images, ids, masks, rng, mode: str):
    out = model.forward(images, ids, rng, mode)
    seg = dice_bce(out.logits, masks, smooth=model.cfg.loss.dice_smooth)
    con = soft_contrastive(out.patches, out.eos, model.cfg.loss,
                           model.logit_scale, cls_token=out.cls)
    return total_loss(seg, con, model.cfg.loss), seg, con


def train(model: SegModel, samples: list[Sample], vocab: Vocabulary,
          cfg: TrainConfig, out_dir: str | None = None,
          config_hash: str = "") -> list[StepLog]:
    """Run the full schedule over the samples; returns the per-step log.

    When out_dir is set, writes ckpt.bin (plus epoch checkpoints at the
    configured cadence) and loss_log.tsv there.
    """
    if not samples:
        raise ValueError("empty training set")
    params = model.named_parameters()
    opt = Adam(params, cfg)
    n = len(samples)
    steps_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size
    total_steps = cfg.epochs * steps_per_epoch
    max_len = model.cfg.encoder.max_text_len
    base_rng = Rng(cfg.seed, stream=9090)

    history: list[StepLog] = []
    last_finite = float("nan")
    step = 0
    for epoch in range(cfg.epochs):
        order = Rng(cfg.seed, stream=5000 + epoch).shuffled(n)
        for b in range(steps_per_epoch):
            batch = [samples[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            images, ids, masks = _batch_arrays(batch, vocab, max_len, model.dtype)
            lr = cosine_lr(step, total_steps, cfg.lr)
            model.zero_grad()
            loss, seg, con = compute_losses(model, images, ids, masks,
                                            base_rng.spawn(step), "train_sample_once")
            loss_val = float(loss.data)
            if not math.isfinite(loss_val):
                raise TrainDivergenceError(step, last_finite)
            last_finite = loss_val
            loss.backward()
            opt.clip_gradients()
            opt.step(lr)
            history.append(StepLog(step, lr, float(seg.data), float(con.data), loss_val))
            step += 1
        if out_dir and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0 \
                and epoch + 1 < cfg.epochs:
            save_checkpoint(os.path.join(out_dir, f"ckpt_epoch{epoch + 1:03d}.bin"),
                            model, opt, step, config_hash)

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(os.path.join(out_dir, "ckpt.bin"), model, opt, step, config_hash)
        with open(os.path.join(out_dir, "loss_log.tsv"), "w", encoding="utf-8") as fh:
            fh.write("step\tlr\tseg_loss\tcon_loss\ttotal_loss\n")
            for row in history:
                fh.write(f"{row.step}\t{row.lr:.8e}\t{row.seg_loss:.8e}\t"
                         f"{row.con_loss:.8e}\t{row.total_loss:.8e}\n")
    return history


def audit_gradients(model: SegModel, samples: list[Sample], vocab: Vocabulary,
                    seed: int = 0) -> list[str]:
    """Names of trainable tensors with missing or all-zero gradients after
    one backward pass on the given batch; empty list means healthy flow."""
    images, ids, masks = _batch_arrays(samples, vocab,
                                       model.cfg.encoder.max_text_len, model.dtype)
    model.zero_grad()
    loss, _, _ = compute_losses(model, images, ids, masks, Rng(seed), "train_sample_once")
    loss.backward()
    dead = []
    for name, p in model.named_parameters().items():
        if p.grad is None or not np.any(p.grad):
            dead.append(name)
    return dead


# -- checkpoint container ------------------------------------------------------

MAGIC = b"PVLCKPT1"
VERSION = 1
_DTYPE_TAGS = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}
_TAG_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}


def _write_tensor(fh, name: str, arr: np.ndarray):
    nb = name.encode("utf-8")
    fh.write(struct.pack("<I", len(nb)))
    fh.write(nb)
    fh.write(struct.pack("<B", _DTYPE_TAGS[arr.dtype]))
    fh.write(struct.pack("<I", arr.ndim))
    for ext in arr.shape:
        fh.write(struct.pack("<Q", ext))
    fh.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())


def _read_tensor(fh) -> tuple[str, np.ndarray]:
    (nlen,) = struct.unpack("<I", fh.read(4))
    name = fh.read(nlen).decode("utf-8")
    (tag,) = struct.unpack("<B", fh.read(1))
    (rank,) = struct.unpack("<I", fh.read(4))
    shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(rank))
    dtype = _TAG_DTYPES[tag]
    count = int(np.prod(shape)) if shape else 1
    arr = np.frombuffer(fh.read(count * dtype.itemsize), dtype=dtype).reshape(shape)
    return name, arr.astype(dtype.newbyteorder("="))


def save_checkpoint(path: str, model: SegModel, opt: Adam | None, step: int,
                    config_hash: str):
    """Self-describing binary container: header, then named tensor records
    (parameters, optimizer moments, step counter)."""
    params = model.named_parameters()
    records: list[tuple[str, np.ndarray]] = [(k, p.data) for k, p in params.items()]
    if opt is not None:
        records += [(f"adam.m.{k}", v) for k, v in opt.m.items()]
        records += [(f"adam.v.{k}", v) for k, v in opt.v.items()]
        records.append(("adam.t", np.asarray(float(opt.t))))
    records.append(("step", np.asarray(float(step))))
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        hb = config_hash.encode("ascii")
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        fh.write(struct.pack("<I", len(records)))
        for name, arr in records:
            _write_tensor(fh, name, arr)


def read_checkpoint(path: str) -> tuple[dict[str, np.ndarray], str]:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise IOError(f"{path}: not a model checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise IOError(f"{path}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        config_hash = fh.read(hlen).decode("ascii")
        (count,) = struct.unpack("<I", fh.read(4))
        tensors = dict(_read_tensor(fh) for _ in range(count))
    return tensors, config_hash


def load_checkpoint(path: str, model: SegModel,
                    opt: Adam | None = None) -> tuple[int, str]:
    """Restore parameters (and optimizer state if given) in place."""
    tensors, config_hash = read_checkpoint(path)
    params = model.named_parameters()
    missing = set(params) - set(tensors)
    if missing:
        raise IOError(f"checkpoint misses parameters: {sorted(missing)[:5]} ...")
    for name, p in params.items():
        arr = tensors[name]
        if arr.shape != p.data.shape:
            raise IOError(f"checkpoint tensor {name} has shape {arr.shape}, "
                          f"model expects {p.data.shape}")
        p.data = arr.copy()
    if opt is not None:
        for name in params:
            if f"adam.m.{name}" in tensors:
                opt.m[name] = tensors[f"adam.m.{name}"].copy()
                opt.v[name] = tensors[f"adam.v.{name}"].copy()
        opt.t = int(tensors.get("adam.t", np.asarray(0.0)).item())
    return int(tensors["step"].item()), config_hash
