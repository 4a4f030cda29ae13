"""Segmentation and calibration metrics, all reported on a 0-100 scale.

Boundaries come from a 4-neighborhood erosion difference and distances
from the exact Euclidean distance transform. The Brier score restricts to
a dilated foreground band by default since whole-image scores are
dominated by easy background.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.stats import rankdata

CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class EvaluationError(ValueError):
    """Metric undefined for the given inputs (empty region, constant ranks)."""


def _as_bool(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.dtype != bool:
        arr = arr > 0.5 if arr.dtype.kind == "f" else arr.astype(bool)
    return arr


def dsc(pred, gt) -> float:
    """Dice overlap 100 * 2|P∩G| / (|P|+|G|); both-empty counts as 100."""
    p, g = _as_bool(pred), _as_bool(gt)
    total = p.sum() + g.sum()
    if total == 0:
        return 100.0
    return 100.0 * 2.0 * np.logical_and(p, g).sum() / total


def boundary(mask) -> np.ndarray:
    """Foreground pixels with a 4-neighbor outside the mask (or the frame)."""
    m = _as_bool(mask)
    eroded = ndimage.binary_erosion(m, structure=CROSS, border_value=0)
    return m & ~eroded


def nsd(pred, gt, tol_px: float = 2.0) -> float:
    """Normalized surface distance: mean of the two boundary fractions
    within tol_px of the other mask's boundary, times 100."""
    if tol_px < 0:
        raise ValueError("tol_px must be nonnegative")
    p, g = _as_bool(pred), _as_bool(gt)
    bp, bg = boundary(p), boundary(g)
    if not bp.any() and not bg.any():
        return 100.0
    if not bp.any() or not bg.any():
        return 0.0
    dist_to_g = ndimage.distance_transform_edt(~bg)
    dist_to_p = ndimage.distance_transform_edt(~bp)
    frac_p = (dist_to_g[bp] <= tol_px).mean()
    frac_g = (dist_to_p[bg] <= tol_px).mean()
    return 100.0 * 0.5 * (frac_p + frac_g)


def foreground_band(gt, radius_px: float = 5.0) -> np.ndarray:
    """Ground truth dilated by a Euclidean disk of the given radius."""
    g = _as_bool(gt)
    if g.all() or not g.any():
        return g
    return ndimage.distance_transform_edt(~g) <= radius_px


def brier(mean_prob, gt, region: str = "foreground_band",
          band_px: float = 5.0) -> float:
    """100 * mean squared gap between predicted probability and truth."""
    p = np.asarray(mean_prob, dtype=np.float64)
    g = _as_bool(gt)
    if region == "full":
        sel = np.ones_like(g)
    elif region == "foreground_band":
        sel = foreground_band(g, band_px)
    else:
        raise ValueError(f"unknown region {region!r}")
    if not sel.any():
        raise EvaluationError("empty evaluation region for Brier score")
    diff = p[sel] - g[sel].astype(np.float64)
    return 100.0 * float((diff * diff).mean())


def spearman_uncertainty_error(entropies, errors, regions=None) -> float:
    """Rank correlation (average-rank ties) between pooled uncertainty and
    error pixels, times 100.

    entropies/errors are sequences of per-sample maps; regions optionally
    restricts pooling (same shapes, boolean).
    """
    us, es = [], []
    n = len(entropies)
    for i in range(n):
        u = np.asarray(entropies[i], dtype=np.float64)
        e = np.asarray(errors[i], dtype=np.float64)
        if regions is not None:
            sel = _as_bool(regions[i])
            u, e = u[sel], e[sel]
        us.append(u.ravel())
        es.append(e.ravel())
    u = np.concatenate(us)
    e = np.concatenate(es)
    if u.size < 2 or np.ptp(u) == 0 or np.ptp(e) == 0:
        raise EvaluationError("Spearman undefined: constant or singleton input")
    ru = rankdata(u)
    re = rankdata(e)
    c = np.corrcoef(ru, re)[0, 1]
    return 100.0 * float(c)


def harmonic_mean(a: float, b: float) -> float:
    """2ab / (a+b) for positive inputs."""
    if a <= 0 or b <= 0:
        raise ValueError("harmonic mean needs positive inputs")
    return 2.0 * a * b / (a + b)


# -- reporting ---------------------------------------------------------------


@dataclass
class SplitMetrics:
    split: str
    per_sample: list[dict] = field(default_factory=list)

    def add(self, sample_id: str, **values):
        self.per_sample.append({"id": sample_id, **values})

    def aggregate(self) -> dict[str, float]:
        keys = [k for k in self.per_sample[0] if k != "id"] if self.per_sample else []
        return {k: float(np.mean([s[k] for s in self.per_sample])) for k in keys}


@dataclass
class MetricReport:
    splits: dict[str, SplitMetrics] = field(default_factory=dict)
    pooled: dict[str, dict[str, float]] = field(default_factory=dict)
    pairs: list[tuple[str, str]] = field(default_factory=list)
    config_hash: str = ""

    HM_METRICS = ("dsc", "nsd", "spearman")

    def split(self, name: str) -> SplitMetrics:
        if name not in self.splits:
            self.splits[name] = SplitMetrics(name)
        return self.splits[name]

    def summary_rows(self) -> list[dict]:
        rows = []
        for name, sm in self.splits.items():
            agg = sm.aggregate()
            agg.update(self.pooled.get(name, {}))
            rows.append({"split": name, **agg})
        for id_split, ood_split in self.pairs:
            have = {r["split"]: r for r in rows}
            if id_split in have and ood_split in have:
                hm_row = {"split": f"hm({id_split},{ood_split})"}
                for metric in self.HM_METRICS:
                    a = have[id_split].get(metric)
                    b = have[ood_split].get(metric)
                    if a is not None and b is not None and a > 0 and b > 0:
                        hm_row[metric] = harmonic_mean(a, b)
                rows.append(hm_row)
        return rows

    def to_text(self) -> str:
        lines = [f"config_hash: {self.config_hash}"]
        for name, sm in self.splits.items():
            lines.append(f"[split {name}]")
            for s in sm.per_sample:
                parts = [f"{k}: {v:.4f}" for k, v in s.items() if k != "id"]
                lines.append(f"  sample {s['id']}: " + ", ".join(parts))
            for k, v in sm.aggregate().items():
                lines.append(f"  mean {k}: {v:.4f}")
            for k, v in self.pooled.get(name, {}).items():
                lines.append(f"  pooled {k}: {v:.4f}")
        for row in self.summary_rows():
            if row["split"].startswith("hm("):
                parts = [f"{k}: {v:.4f}" for k, v in row.items() if k != "split"]
                lines.append(f"[{row['split']}] " + ", ".join(parts))
        return "\n".join(lines) + "\n"

    def to_tsv(self) -> str:
        rows = self.summary_rows()
        keys: list[str] = []
        for row in rows:
            for k in row:
                if k != "split" and k not in keys:
                    keys.append(k)
        out = ["\t".join(["split"] + keys)]
        for row in rows:
            cells = [row["split"]] + [f"{row[k]:.4f}" if k in row else "" for k in keys]
            out.append("\t".join(cells))
        return "\n".join(out) + "\n"
