"""Probabilistic cross-attention with Gaussian keys/values.

Queries are deterministic; keys and values carry learned mean and
log-variance halves. Score variance penalizes uncertain keys before the
softmax (difference mechanism) or attenuates rows after it (scaling
mechanism), and values are sampled once per forward pass through the
reparameterization trick. A scalar sigmoid gate blends the attended
output with the untouched query stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Rng, Tensor

MECHANISMS = ("difference", "scaling", "none")
MODES = ("train_sample_once", "infer_sample", "infer_mean")

SCORE_VAR_FLOOR = 1e-12  # keeps sqrt differentiable when score variance hits zero


@dataclass
class PvlAttentionParams:
    """Weights of one cross-attention instance.

    w_k and w_v hold [mean | log-variance] column splits of width 2*d_attn.
    beta scales the confidence penalty; gate_logit parameterizes the
    residual gate g = sigmoid(gate_logit).
    """

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_out: Tensor
    gate_logit: Tensor
    beta: float = 2.35
    mechanism: str = "difference"

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")

    @property
    def d_model(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_attn(self) -> int:
        return self.w_q.shape[1]

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.w_q": self.w_q,
            f"{prefix}.w_k": self.w_k,
            f"{prefix}.w_v": self.w_v,
            f"{prefix}.w_out": self.w_out,
            f"{prefix}.gate_logit": self.gate_logit,
        }


@dataclass
class AttentionDiagnostics:
    """Plain-array snapshots of the score statistics of one forward pass."""

    score_mean: np.ndarray
    score_std: np.ndarray
    attention: np.ndarray
    value_variance_per_token: np.ndarray = field(repr=False)


def init_pvl_attention(d_model: int, d_attn: int, rng: Rng, beta: float = 2.35,
                       mechanism: str = "difference", gate_init_logit: float = 0.0,
                       init_std: float = 0.02, dtype=np.float64) -> PvlAttentionParams:
    """Small-variance Gaussian init; gate_logit defaults to 0 => g = 0.5."""
    if d_attn < 1:
        raise ValueError("d_attn must be >= 1")

    def w(shape):
        return T.parameter(rng.normal(shape, dtype=dtype) * init_std)

    return PvlAttentionParams(
        w_q=w((d_model, d_attn)),
        w_k=w((d_model, 2 * d_attn)),
        w_v=w((d_model, 2 * d_attn)),
        w_out=w((d_attn, d_model)),
        gate_logit=T.parameter(np.asarray(gate_init_logit, dtype=dtype)),
        beta=beta,
        mechanism=mechanism,
    )


def _split_halves(x: Tensor, d: int) -> tuple[Tensor, Tensor]:
    return x[..., :d], x[..., d:]


def attn_pvl(params: PvlAttentionParams, x: Tensor, z: Tensor, rng: Rng | None,
             mode: str) -> tuple[Tensor, AttentionDiagnostics]:
    """Fused output of query sequence x [B,Tq,D] against context z [B,Tk,D].

    Modes: train_sample_once and infer_sample draw one fresh Gaussian per
    call for the values; infer_mean uses the value means and is fully
    deterministic.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if x.shape[-1] != params.d_model or z.shape[-1] != params.d_model:
        raise T.ShapeError(
            f"token dim mismatch: x {x.shape}, z {z.shape}, params expect {params.d_model}")
    if x.shape[-2] < 1 or z.shape[-2] < 1:
        raise T.ShapeError("query and context sequences must be nonempty")
    d_attn = params.d_attn

    q = T.matmul(x, params.w_q)
    k_mu, k_logvar = _split_halves(T.matmul(z, params.w_k), d_attn)
    v_mu, v_logvar = _split_halves(T.matmul(z, params.w_v), d_attn)
    T.check_finite("qkv projection", q, k_mu, k_logvar, v_mu, v_logvar)

    k_var = T.softplus(k_logvar)
    v_var = T.softplus(v_logvar)

    score_mean = T.matmul(q, T.transpose_last2(k_mu)) / math.sqrt(d_attn)
    score_var = T.matmul(T.square(q), T.transpose_last2(k_var)) / float(d_attn)
    score_std = T.sqrt(score_var + SCORE_VAR_FLOOR)
    T.check_finite("scores", score_mean, score_std)

    if params.mechanism == "difference":
        attn = T.softmax_lastdim(score_mean - params.beta * score_std)
    elif params.mechanism == "scaling":
        attn = T.softmax_lastdim(score_mean) / (1.0 + params.beta * score_std)
    else:
        attn = T.softmax_lastdim(score_mean)
    T.check_finite("attention weights", attn)

    if mode == "infer_mean":
        v = v_mu
    else:
        if rng is None:
            raise ValueError(f"mode {mode!r} requires an rng")
        eps = rng.gaussian_tensor(v_mu.shape, dtype=x.dtype)
        v = v_mu + eps * T.sqrt(v_var)

    attended = T.matmul(attn, v)
    projected = T.matmul(attended, params.w_out)
    T.check_finite("output projection", projected)

    g = T.sigmoid(params.gate_logit)
    y = g * projected + (1.0 - g) * x

    diag = AttentionDiagnostics(
        score_mean=score_mean.data.copy(),
        score_std=score_std.data.copy(),
        attention=attn.data.copy(),
        value_variance_per_token=v_var.data.mean(axis=-1).copy(),
    )
    return y, diag


def mc_moments(params: PvlAttentionParams, x: Tensor, z: Tensor, rng: Rng,
               n: int) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise sample mean and unbiased variance of Y over n stochastic passes."""
    if n < 2:
        raise ValueError("mc_moments needs n >= 2 passes")
    total = None
    total_sq = None
    with T.no_grad():
        for i in range(n):
            y, _ = attn_pvl(params, x, z, rng.spawn(i), "infer_sample")
            yd = y.data
            if total is None:
                total = yd.copy()
                total_sq = yd * yd
            else:
                total += yd
                total_sq += yd * yd
    mean = total / n
    var = (total_sq - n * mean * mean) / (n - 1)
    return mean, np.maximum(var, 0.0)
