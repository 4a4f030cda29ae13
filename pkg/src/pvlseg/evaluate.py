"""Batch evaluation: Monte-Carlo inference over corpus splits into a MetricReport."""

from __future__ import annotations

import numpy as np

from .data import Sample, image_to_input
from .encoders import Vocabulary
from .metrics import (
    EvaluationError,
    MetricReport,
    brier,
    dsc,
    foreground_band,
    nsd,
    spearman_uncertainty_error,
)
from .model import SegModel
from .uncertainty import mc_infer_batch


def evaluate_split(model: SegModel, samples: list[Sample], vocab: Vocabulary,
                   report: MetricReport, split: str, mc_samples: int = 30,
                   seed: int = 0, nsd_tol_px: float = 2.0, brier_band_px: float = 5.0,
                   region: str = "foreground_band", sample_values: bool = True,
                   batch_size: int = 24, spearman_scope: str = "pooled"):
    """Fill one split of the report; returns the per-sample results list."""
    sm = report.split(split)
    entropies, errors, regions = [], [], []
    max_len = model.cfg.encoder.max_text_len
    all_results = []
    for start in range(0, len(samples), batch_size):
        batch = samples[start:start + batch_size]
        images = np.stack([image_to_input(s.image) for s in batch]).astype(model.dtype)
        ids = np.stack([vocab.encode(s.text, max_len) for s in batch])
        results = mc_infer_batch(model, images, ids, mc_samples,
                                 seed + start, sample=sample_values)
        for s, res in zip(batch, results):
            gt = s.mask
            values = {
                "dsc": dsc(res.prediction, gt),
                "nsd": nsd(res.prediction, gt, nsd_tol_px),
            }
            try:
                values["brier"] = brier(res.mean_prob, gt, region=region,
                                        band_px=brier_band_px)
            except EvaluationError:
                pass  # empty region: skip the calibration score for this sample
            sm.add(f"{s.image_id:04d}", **values)
            sel = (foreground_band(gt, brier_band_px) if region == "foreground_band"
                   else np.ones_like(gt, dtype=bool))
            entropies.append(res.entropy)
            errors.append(np.abs(res.prediction.astype(float) - gt.astype(float)))
            regions.append(sel)
            all_results.append(res)
    pooled = {}
    try:
        if spearman_scope == "per_image":
            per = []
            for u, e, r in zip(entropies, errors, regions):
                try:
                    per.append(spearman_uncertainty_error([u], [e], regions=[r]))
                except EvaluationError:
                    continue
            if per:
                pooled["spearman"] = float(np.mean(per))
        else:
            pooled["spearman"] = spearman_uncertainty_error(entropies, errors,
                                                            regions=regions)
    except EvaluationError:
        pass
    report.pooled[split] = pooled
    return all_results
