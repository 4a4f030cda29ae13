"""Monte-Carlo inference: mean probability maps and entropy uncertainty.

Multiple stochastic forward passes sample the value distributions inside
every fused attention; the per-pixel mean of the sigmoided logits gives
the segmentation probability and its binary entropy the uncertainty map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .model import SegModel
from .tensor import Rng

LN2 = float(np.log(2.0))


def binary_entropy(p: np.ndarray) -> np.ndarray:
    """Elementwise -p ln p - (1-p) ln(1-p) with 0 ln 0 := 0."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    for q in (p, 1.0 - p):
        inside = (q > 0) & (q < 1)
        out[inside] -= (q * np.log(q))[inside]
    return out


@dataclass
class UncertaintyResult:
    mean_prob: np.ndarray
    entropy: np.ndarray
    prediction: np.ndarray
    n_samples: int


def mc_infer_batch(model: SegModel, images: np.ndarray, ids: np.ndarray,
                   n: int, seed: int, sample: bool = True) -> list[UncertaintyResult]:
    """n stochastic passes over one batch; pass k uses the rng stream
    derived from (seed, k). sample=False runs deterministic value means
    (n is forced to 1 pass semantics but still averaged if n > 1)."""
    if n < 1:
        raise ValueError("need at least one pass")
    base = Rng(seed, stream=4242)
    b = images.shape[0]
    acc = None
    mode = "infer_sample" if sample else "infer_mean"
    with T.no_grad():
        for k in range(n):
            rng = base.spawn(k) if sample else None
            logits, _, _ = model.forward_logits(images, ids, rng, mode)
            probs = 1.0 / (1.0 + np.exp(-logits.data.astype(np.float64)))
            acc = probs if acc is None else acc + probs
    mean_prob = acc / n
    results = []
    for i in range(b):
        mp = mean_prob[i]
        results.append(UncertaintyResult(
            mean_prob=mp,
            entropy=binary_entropy(mp),
            prediction=mp >= 0.5,
            n_samples=n,
        ))
    return results


def mc_infer(model: SegModel, image: np.ndarray, ids: np.ndarray, n: int,
             seed: int, sample: bool = True) -> UncertaintyResult:
    """Single-sample Monte-Carlo inference -> UncertaintyResult."""
    image = np.asarray(image)
    if image.ndim == 3:
        image = image[None]
    ids = np.asarray(ids)
    if ids.ndim == 1:
        ids = ids[None]
    return mc_infer_batch(model, image, ids, n, seed, sample=sample)[0]


def scale_to_uint8(arr: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Min-max scale a map to [0, 255] for image export; returns the range."""
    lo = float(arr.min())
    hi = float(arr.max())
    if hi > lo:
        scaled = np.round((arr - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(arr)
    return scaled.astype(np.uint8), lo, hi
