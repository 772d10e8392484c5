"""Nine-metric battery for (prediction, ground truth) mask pairs.

Overlap (Jaccard, F-measure), pair counting (ARI), information theoretic
(mutual information), probabilistic (Cohen's kappa), spatial distance
(Hausdorff) and pixel-error (MAE, MSE, PSNR) scores.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.ndimage import distance_transform_edt

from .data_model import LabelMask

METRIC_NAMES = ("jaccard", "f_measure", "ari", "mutual_information", "kappa",
                "hausdorff", "mae", "mse", "psnr")


def _check_pair(pred: LabelMask, gt: LabelMask, check_classes=True):
    if pred.shape != gt.shape:
        raise ValueError(f"mask dimensions differ: {pred.shape} vs {gt.shape}")
    if check_classes and pred.num_classes != gt.num_classes:
        raise ValueError(f"class counts differ: {pred.num_classes} vs {gt.num_classes}")


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    """counts[i, j] = number of pixels with ground-truth class i and predicted class j."""

    counts: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def gt_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def pred_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def contingency(pred: LabelMask, gt: LabelMask) -> ContingencyTable:
    _check_pair(pred, gt)
    c = gt.num_classes
    flat = gt.labels.ravel().astype(np.int64) * c + pred.labels.ravel()
    counts = np.bincount(flat, minlength=c * c).reshape(c, c)
    counts.flags.writeable = False
    return ContingencyTable(counts)


class OverlapScores(NamedTuple):
    jaccard: float
    f_measure: float
    ari: float
    mutual_information: float
    kappa: float


def _comb2(n: int) -> int:
    return n * (n - 1) // 2


def adjusted_rand_index(table: ContingencyTable) -> float:
    """Chance-corrected Rand index; exact rational arithmetic, rounded once."""
    n = table.total
    sum_ij = sum(_comb2(int(v)) for v in table.counts.ravel())
    sum_a = sum(_comb2(int(v)) for v in table.gt_totals)
    sum_b = sum(_comb2(int(v)) for v in table.pred_totals)
    pairs = _comb2(n)
    if pairs == 0:
        return 1.0
    expected = Fraction(sum_a * sum_b, pairs)
    max_index = Fraction(sum_a + sum_b, 2)
    if max_index == expected:
        # both partitions trivial (single cluster or all singletons)
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def mutual_information(table: ContingencyTable) -> float:
    """Mutual information between the two partitions, in nats."""
    n = table.total
    a = table.gt_totals.astype(np.float64)
    b = table.pred_totals.astype(np.float64)
    i, j = np.nonzero(table.counts)
    nij = table.counts[i, j].astype(np.float64)
    mi = float(np.sum(nij / n * (np.log(nij) + math.log(n) - np.log(a[i]) - np.log(b[j]))))
    return max(mi, 0.0)


def normalized_mutual_information(table: ContingencyTable) -> float:
    """MI divided by the arithmetic mean of the two partition entropies."""
    n = table.total
    h = 0.5 * (_entropy(table.gt_totals, n) + _entropy(table.pred_totals, n))
    if h == 0:
        return 1.0
    return min(mutual_information(table) / h, 1.0)


def cohen_kappa(table: ContingencyTable) -> float:
    n = table.total
    p_o = np.trace(table.counts) / n
    p_e = float(np.dot(table.gt_totals, table.pred_totals)) / (n * n)
    if p_e == 1.0:
        return 1.0
    return float((p_o - p_e) / (1.0 - p_e))


def class_overlaps(table: ContingencyTable) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class (jaccard, dice, present) with ``present`` marking classes in gt or pred."""
    inter = np.diag(table.counts).astype(np.float64)
    size_gt = table.gt_totals.astype(np.float64)
    size_pred = table.pred_totals.astype(np.float64)
    present = (size_gt + size_pred) > 0
    union = size_gt + size_pred - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        jac = np.where(present, inter / union, np.nan)
        dice = np.where(present, 2 * inter / (size_gt + size_pred), np.nan)
    return jac, dice, present


def overlap_metrics(table: ContingencyTable) -> OverlapScores:
    if table.total < 1:
        raise ValueError("contingency table is empty")
    jac, dice, present = class_overlaps(table)
    return OverlapScores(
        jaccard=float(np.mean(jac[present])),
        f_measure=float(np.mean(dice[present])),
        ari=adjusted_rand_index(table),
        mutual_information=mutual_information(table),
        kappa=cohen_kappa(table),
    )


# ---------------------------------------------------------------------------
# Hausdorff


def _directed_sq(src: np.ndarray, dst: np.ndarray) -> int:
    """max over src pixels of the squared distance to the nearest dst pixel."""
    iy, ix = distance_transform_edt(~dst, return_distances=False, return_indices=True)
    yy, xx = np.nonzero(src)
    d2 = (iy[yy, xx] - yy) ** 2 + (ix[yy, xx] - xx) ** 2
    return int(d2.max())


def hausdorff_sets(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two boolean pixel sets.

    Returns the image diagonal if exactly one set is empty and 0 if both are.
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    has_a, has_b = a.any(), b.any()
    if not has_a and not has_b:
        return 0.0
    if has_a != has_b:
        h, w = a.shape
        return math.sqrt(w * w + h * h)
    # integer squared distances keep the result exact
    return math.sqrt(max(_directed_sq(a, b), _directed_sq(b, a)))


def hausdorff_per_class(pred: LabelMask, gt: LabelMask) -> dict[int, float]:
    _check_pair(pred, gt, check_classes=False)
    n = max(pred.num_classes, gt.num_classes)
    return {c: hausdorff_sets(pred.labels == c, gt.labels == c) for c in range(1, n)}


def hausdorff(pred: LabelMask, gt: LabelMask) -> float:
    """Sum over flame classes (all ids but background) of per-class Hausdorff distances."""
    return float(sum(hausdorff_per_class(pred, gt).values()))


# ---------------------------------------------------------------------------
# pixel error


def pixel_error_metrics(pred: LabelMask, gt: LabelMask) -> tuple[float, float, float]:
    """(MAE, MSE, PSNR) treating class ids as intensities with peak ``num_classes - 1``."""
    _check_pair(pred, gt, check_classes=False)
    diff = pred.labels.astype(np.float64) - gt.labels.astype(np.float64)
    mae = float(np.mean(np.abs(diff)))
    mse = float(np.mean(diff * diff))
    peak = max(pred.num_classes, gt.num_classes) - 1
    psnr = math.inf if mse == 0 else 10.0 * math.log10(peak * peak / mse)
    return mae, mse, psnr


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricScores:
    jaccard: float
    f_measure: float
    ari: float
    mutual_information: float
    kappa: float
    hausdorff: float
    mae: float
    mse: float
    psnr: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


def evaluate_pair(pred: LabelMask, gt: LabelMask) -> MetricScores:
    overlap = overlap_metrics(contingency(pred, gt))
    mae, mse, psnr = pixel_error_metrics(pred, gt)
    return MetricScores(
        *overlap,
        hausdorff=hausdorff(pred, gt),
        mae=mae,
        mse=mse,
        psnr=psnr,
    )


def per_class_breakdown(pred: LabelMask, gt: LabelMask) -> dict[str, list[float]]:
    """Per-class Jaccard, Dice and Hausdorff (NaN where a class is absent)."""
    jac, dice, _ = class_overlaps(contingency(pred, gt))
    hd = hausdorff_per_class(pred, gt)
    return {
        "jaccard": jac.tolist(),
        "dice": dice.tolist(),
        "hausdorff": [math.nan] + [hd[c] for c in sorted(hd)],
    }
