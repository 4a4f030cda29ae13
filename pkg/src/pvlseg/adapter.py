"""Per-layer bidirectional fusion adapters between the two token streams.

Each adapter projects vision and text tokens into a shared low-dimensional
space, runs two probabilistic cross-attention passes (vision queries first
by default), and projects the fused features back with residual
connections, so a zeroed adapter is an exact identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import PvlAttentionParams, attn_pvl, init_pvl_attention
from .tensor import Rng, Tensor

ORDERS = ("vision_first", "text_first", "one_way")


@dataclass
class AdapterLayer:
    down_v: Tensor
    down_t: Tensor
    up_v: Tensor
    up_t: Tensor
    attn_v2t: PvlAttentionParams  # vision queries, text context
    attn_t2v: PvlAttentionParams  # text queries, vision context

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        out = {
            f"{prefix}.down_v": self.down_v,
            f"{prefix}.down_t": self.down_t,
            f"{prefix}.up_v": self.up_v,
            f"{prefix}.up_t": self.up_t,
        }
        out.update(self.attn_v2t.tensors(f"{prefix}.attn_v2t"))
        out.update(self.attn_t2v.tensors(f"{prefix}.attn_t2v"))
        return out


@dataclass
class AdapterStack:
    layers: dict[int, AdapterLayer]  # keyed by 1-based encoder block index
    d_shared: int
    order: str = "vision_first"

    def __post_init__(self):
        if self.order not in ORDERS:
            raise ValueError(f"unknown interaction order {self.order!r}")

    @property
    def schedule(self) -> list[int]:
        return sorted(self.layers)

    def tensors(self, prefix: str = "adapter") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for n, layer in sorted(self.layers.items()):
            out.update(layer.tensors(f"{prefix}.layer{n}"))
        return out


def place_adapters(encoder_depth: int, depth_limit: int | None = None) -> list[int]:
    """Blocks 1..depth_limit get an adapter after them.

    The default leaves the final encoder block untouched, matching the
    best-performing placement at a 10-of-12 depth ratio.
    """
    if depth_limit is None:
        depth_limit = max(1, encoder_depth - 1)
    if not 1 <= depth_limit <= encoder_depth:
        raise ValueError(f"depth_limit {depth_limit} outside [1, {encoder_depth}]")
    return list(range(1, depth_limit + 1))


def init_adapter_stack(d_vision: int, d_text: int, d_shared: int, schedule: list[int],
                       rng: Rng, beta: float = 2.35, mechanism: str = "difference",
                       order: str = "vision_first", gate_init_logit: float = 0.0,
                       init_std: float = 0.02, dtype=np.float64) -> AdapterStack:
    """Gaussian init (std 0.02); up-projections scaled by 0.1 so the stack
    starts close to identity alongside the half-open gates."""
    layers: dict[int, AdapterLayer] = {}
    for n in schedule:
        def w(shape, scale=1.0):
            return T.parameter(rng.normal(shape, dtype=dtype) * (init_std * scale))

        layers[n] = AdapterLayer(
            down_v=w((d_vision, d_shared)),
            down_t=w((d_text, d_shared)),
            up_v=w((d_shared, d_vision), scale=0.1),
            up_t=w((d_shared, d_text), scale=0.1),
            attn_v2t=init_pvl_attention(d_shared, d_shared, rng, beta=beta,
                                        mechanism=mechanism, gate_init_logit=gate_init_logit,
                                        init_std=init_std, dtype=dtype),
            attn_t2v=init_pvl_attention(d_shared, d_shared, rng, beta=beta,
                                        mechanism=mechanism, gate_init_logit=gate_init_logit,
                                        init_std=init_std, dtype=dtype),
        )
    return AdapterStack(layers=layers, d_shared=d_shared, order=order)


def adapter_fuse(layer: AdapterLayer, order: str, vis: Tensor, txt: Tensor,
                 rng: Rng | None, mode: str) -> tuple[Tensor, Tensor]:
    """Mutual update of vision tokens [B,Tv,Dv] and text tokens [B,Tt,Dt].

    one_way runs only the vision-query attention and leaves the text path
    attention-free (its shared-space tokens pass straight to the
    up-projection). Both outputs keep residual connections to the inputs.
    """
    if order not in ORDERS:
        raise ValueError(f"unknown interaction order {order!r}")
    if vis.shape[-1] != layer.down_v.shape[0] or txt.shape[-1] != layer.down_t.shape[0]:
        raise T.ShapeError(
            f"adapter dims expect Dv={layer.down_v.shape[0]}, Dt={layer.down_t.shape[0]}, "
            f"got {vis.shape} and {txt.shape}")
    v = T.matmul(vis, layer.down_v)
    t = T.matmul(txt, layer.down_t)
    if order == "vision_first":
        v_new, _ = attn_pvl(layer.attn_v2t, v, t, rng, mode)
        t_new, _ = attn_pvl(layer.attn_t2v, t, v_new, rng, mode)
    elif order == "text_first":
        t_new, _ = attn_pvl(layer.attn_t2v, t, v, rng, mode)
        v_new, _ = attn_pvl(layer.attn_v2t, v, t_new, rng, mode)
    else:  # one_way
        v_new, _ = attn_pvl(layer.attn_v2t, v, t, rng, mode)
        t_new = t
    vis_out = vis + T.matmul(v_new, layer.up_v)
    txt_out = txt + T.matmul(t_new, layer.up_t)
    return vis_out, txt_out


def adapter_param_count(n_layers: int, d_vision: int, d_text: int, d_shared: int) -> int:
    """Analytic scalar count: projections plus two attention instances per
    layer, each contributing Q/K/V/out matrices and two scalars (gate and
    penalty weight)."""
    d_a = d_shared
    per_attn = d_shared * d_a + 2 * d_shared * d_a + 2 * d_shared * d_a + d_a * d_shared + 2
    per_layer = (d_vision * d_shared + d_text * d_shared
                 + d_shared * d_vision + d_shared * d_text + 2 * per_attn)
    return n_layers * per_layer


def count_stack_scalars(stack: AdapterStack) -> int:
    """Stored scalars in the stack: every tensor element plus each
    attention instance's beta."""
    total = 0
    for layer in stack.layers.values():
        for t in layer.tensors("x").values():
            total += t.size
        total += 2  # beta of attn_v2t and attn_t2v
    return total
