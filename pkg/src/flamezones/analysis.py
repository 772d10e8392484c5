"""Metric-versus-expert correlation study and model ranking."""
from __future__ import annotations

import csv
import functools
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data_model import LabelMask


@dataclass(frozen=True)
class RankingVector:
    """One annotator's scores, one per evaluated segmentation; higher is better."""

    scores: tuple
    annotator: str = "rank1"

    def __post_init__(self):
        s = tuple(float(v) for v in self.scores)
        if not all(math.isfinite(v) for v in s):
            raise ValueError("ranking scores must be finite")
        object.__setattr__(self, "scores", s)

    def __len__(self):
        return len(self.scores)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-D vectors of equal length")
    if x.size < 2:
        raise ValueError("pearson needs at least two observations")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("pearson needs finite values")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(np.dot(dx, dx)), float(np.dot(dy, dy))
    if sxx == 0 or syy == 0:
        raise ValueError("pearson is undefined for a constant vector")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    names: tuple
    values: np.ndarray

    def __getitem__(self, key):
        a, b = key
        return float(self.values[self.names.index(a), self.names.index(b)])

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([""] + list(self.names))
            for name, row in zip(self.names, self.values):
                writer.writerow([name] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "CorrelationMatrix":
        with open(Path(path), newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        names = tuple(rows[0][1:])
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        return cls(names, values)


def correlation_study(metric_table: Mapping[str, Sequence[float]],
                      rankings: Sequence[RankingVector] = (),
                      drop_degenerate: bool = True) -> CorrelationMatrix:
    """Pairwise Pearson matrix over metric columns and ranking columns.

    Each row of the inputs is one evaluated segmentation. Columns that are
    constant or contain non-finite values (e.g. PSNR of a perfect match) have
    no Pearson coefficient; they are dropped with a warning unless
    ``drop_degenerate`` is false, in which case they raise.
    """
    columns = {name: np.asarray(list(col), dtype=np.float64) for name, col in dict(metric_table).items()}
    for rank in rankings:
        if rank.annotator in columns:
            raise ValueError(f"duplicate column name {rank.annotator!r}")
        columns[rank.annotator] = np.asarray(rank.scores)
    lengths = {c.size for c in columns.values()}
    if len(lengths) != 1:
        raise ValueError(f"columns are not aligned to one segmentation set (lengths {sorted(lengths)})")
    names = []
    for name, col in columns.items():
        bad = not np.all(np.isfinite(col)) or np.ptp(col) == 0
        if bad:
            if not drop_degenerate:
                raise ValueError(f"column {name!r} is constant or non-finite")
            warnings.warn(f"dropping column {name!r}: constant or non-finite", RuntimeWarning)
            continue
        names.append(name)
    k = len(names)
    values = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            values[i, j] = values[j, i] = pearson(columns[names[i]], columns[names[j]])
    return CorrelationMatrix(tuple(names), values)


# ---------------------------------------------------------------------------
# model ranking


@dataclass(frozen=True)
class ModelSummary:
    name: str
    mean_hausdorff: float
    mean_ari: float
    total_seconds: float


HAUSDORFF_TIE = 1e-9


def _compare(a: ModelSummary, b: ModelSummary) -> int:
    if abs(a.mean_hausdorff - b.mean_hausdorff) > HAUSDORFF_TIE:
        return -1 if a.mean_hausdorff < b.mean_hausdorff else 1
    if a.mean_ari != b.mean_ari:
        return -1 if a.mean_ari > b.mean_ari else 1
    # unknown timings sort last
    ta = math.inf if math.isnan(a.total_seconds) else a.total_seconds
    tb = math.inf if math.isnan(b.total_seconds) else b.total_seconds
    if ta != tb:
        return -1 if ta < tb else 1
    return 0


def rank_models(summaries: Sequence[ModelSummary]) -> list[ModelSummary]:
    """Order by mean Hausdorff (ascending), then mean ARI (descending), then time."""
    if not summaries:
        raise ValueError("no models to rank")
    return sorted(summaries, key=functools.cmp_to_key(_compare))


# ---------------------------------------------------------------------------
# synthetic degradations


def flip_pixels(mask: LabelMask, fraction: float, rng: np.random.Generator) -> LabelMask:
    """Reassign a random ``fraction`` of pixels to a different, uniformly drawn class."""
    labels = mask.labels.astype(np.int64).ravel().copy()
    n = int(round(fraction * labels.size))
    idx = rng.choice(labels.size, size=n, replace=False)
    offset = rng.integers(1, mask.num_classes, size=n)
    labels[idx] = (labels[idx] + offset) % mask.num_classes
    return LabelMask(labels.reshape(mask.shape), mask.num_classes)


def _shift(region: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(region)
    h, w = region.shape
    if abs(dy) >= h or abs(dx) >= w:
        return out
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    out[yd, xd] = region[ys, xs]
    return out


def displace_zones(mask: LabelMask, level: float, rng: np.random.Generator,
                   step: float = 1.0) -> LabelMask:
    """Translate each nested zone by ``level * step`` pixels in its own random direction.

    Zone ``c`` is painted where the shifted support ``labels >= c`` lands,
    outer zones first; uncovered pixels fall back to background.
    """
    labels = mask.labels
    out = np.zeros(mask.shape, dtype=np.int64)
    for c in range(1, mask.num_classes):
        theta = rng.uniform(0.0, 2.0 * np.pi)
        dy = int(round(level * step * np.sin(theta)))
        dx = int(round(level * step * np.cos(theta)))
        out[_shift(labels >= c, dy, dx)] = c
    return LabelMask(out, mask.num_classes)


def degradation_series(gt: LabelMask, levels: Sequence[float], seeds: Sequence[int],
                       step: float = 1.0) -> list[tuple[float, int, LabelMask]]:
    """(level, seed, degraded mask) for every level/seed pair."""
    out = []
    for level in levels:
        for seed in seeds:
            rng = np.random.default_rng([int(seed), int(round(level * 1000))])
            out.append((level, seed, displace_zones(gt, level, rng, step)))
    return out
