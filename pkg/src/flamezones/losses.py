"""Class-imbalance losses over per-pixel logits, each returning (loss, gradient).

Logits are ``(H, W, C)`` arrays of unnormalized scores. Targets are label masks
(or plain integer arrays) of shape ``(H, W)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ZONE_CLASS_WEIGHTS = (1.59, 10.61, 17.13, 22.25)
ENET_C = 1.02


@dataclass(frozen=True, eq=False)
class ClassWeights:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).ravel()
        if w.size < 2 or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("class weights must be finite and positive")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size

    def tolist(self) -> list[float]:
        return self.weights.tolist()


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
            raise ValueError("distance matrix must be square with at least 2 classes")
        if not np.all(np.isfinite(m)):
            raise ValueError("distance matrix must be finite")
        if not np.array_equal(m, m.T):
            raise ValueError("distance matrix must be symmetric")
        off = ~np.eye(m.shape[0], dtype=bool)
        if np.any(np.diag(m) != 0) or np.any(m[off] <= 0):
            raise ValueError("distance matrix needs a zero diagonal and positive off-diagonal")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def zone_distances(cls, num_classes: int = 4, background: float = 1.0,
                       between_zones: float = 0.5) -> "DistanceMatrix":
        """Background-to-zone distance ``background``, zone-to-zone ``between_zones``."""
        m = np.full((num_classes, num_classes), between_zones)
        m[0, :] = m[:, 0] = background
        np.fill_diagonal(m, 0.0)
        return cls(m)

    @classmethod
    def uniform(cls, num_classes: int = 4) -> "DistanceMatrix":
        return cls(1.0 - np.eye(num_classes))


def enet_class_weights(frequencies, c: float = ENET_C, sum_tol: float = 1e-2) -> ClassWeights:
    """``w_i = 1 / ln(c + p_i)``: rarer classes get larger weights.

    ``sum_tol`` bounds how far the frequencies may sum from 1, which lets
    frequencies recovered from rounded weights through.
    """
    p = np.asarray(frequencies, dtype=np.float64).ravel()
    if c <= 0:
        raise ValueError("c must be positive")
    if np.any(p < 0) or abs(p.sum() - 1.0) > sum_tol:
        raise ValueError(f"frequencies must be nonnegative and sum to 1, got sum {p.sum()}")
    if np.any(c + p <= 1.0):
        raise ValueError("c + p_i must exceed 1 for every class")
    return ClassWeights(1.0 / np.log(c + p))


def class_frequencies(masks, num_classes: int) -> np.ndarray:
    """Pixel share of each class pooled over ``masks``."""
    counts = np.zeros(num_classes, dtype=np.int64)
    for m in masks:
        counts += np.bincount(np.asarray(getattr(m, "labels", m)).ravel(), minlength=num_classes)
    return counts / counts.sum()


# ---------------------------------------------------------------------------


def _prepare(logits, target):
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(getattr(target, "labels", target)).astype(np.int64)
    if z.ndim != 3 or y.shape != z.shape[:2]:
        raise ValueError(f"logits {z.shape} and target {y.shape} do not agree")
    c = z.shape[2]
    if y.min() < 0 or y.max() >= c:
        raise ValueError("target ids exceed logit channels")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    z2 = z.reshape(-1, c)
    shifted = z2 - z2.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_norm
    return z.shape, y.ravel(), log_p, np.exp(log_p)


def _weights_for(weights, c: int) -> np.ndarray:
    if weights is None:
        return np.ones(c)
    w = weights.weights if isinstance(weights, ClassWeights) else ClassWeights(weights).weights
    if w.size != c:
        raise ValueError(f"{w.size} class weights for {c} channels")
    return w


def weighted_cross_entropy(logits, target, weights=None) -> tuple[float, np.ndarray]:
    """Weighted NLL of the softmax, normalized by the summed pixel weights."""
    shape, y, log_p, p = _prepare(logits, target)
    n, c = p.shape
    w = _weights_for(weights, c)[y]
    rows = np.arange(n)
    onehot = np.zeros_like(p)
    onehot[rows, y] = 1.0
    total_w = w.sum()
    loss = float(np.sum(w * -log_p[rows, y]) / total_w)
    grad = w[:, None] * (p - onehot) / total_w
    return loss, grad.reshape(shape)


def focal_loss(logits, target, weights=None, gamma: float = 2.0) -> tuple[float, np.ndarray]:
    """Weighted focal loss ``w_y (1 - p_y)^gamma (-ln p_y)``; same normalization as weighted CE.

    ``gamma = 0`` reduces exactly to :func:`weighted_cross_entropy`.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    shape, y, log_p, p = _prepare(logits, target)
    n, c = p.shape
    w = _weights_for(weights, c)[y]
    rows = np.arange(n)
    onehot = np.zeros_like(p)
    onehot[rows, y] = 1.0
    nll = -log_p[rows, y]
    p_y = p[rows, y]
    # 1 - p_y from the other classes' mass keeps precision near saturation
    q = p.sum(axis=1) - p_y
    mod = q ** gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        dmod = np.where(q > 0, gamma * q ** (gamma - 1.0), 0.0)
    # d term / d z_c = w [gamma q^(gamma-1) nll p_y + q^gamma] (p_c - [c == y])
    coef = w * (dmod * nll * p_y + mod)
    total_w = w.sum()
    loss = float(np.sum(w * mod * nll) / total_w)
    grad = coef[:, None] * (p - onehot) / total_w
    return loss, grad.reshape(shape)


def generalized_wasserstein_dice_loss(logits, target, distances: DistanceMatrix | None = None
                                      ) -> tuple[float, np.ndarray]:
    """Dice-style loss with a semantic misclassification cost per pixel.

    Per pixel the Wasserstein error against the one-hot truth is
    ``W_i = sum_c M[y_i, c] p_ic``. With ``a_i = M[y_i, 0]`` (distance of the
    true class to background; 0 for background pixels)::

        TP   = sum_i a_i (a_i - W_i)
        loss = 1 - 2 TP / (2 TP + sum_i W_i)
    """
    shape, y, _, p = _prepare(logits, target)
    n, c = p.shape
    m = (distances or DistanceMatrix.zone_distances(c)).matrix
    if m.shape[0] != c:
        raise ValueError(f"distance matrix is {m.shape[0]}x{m.shape[0]} for {c} channels")
    alpha = m[y, 0]
    if not np.any(alpha > 0):
        raise ValueError("target contains only background; the Dice ratio is undefined")
    rows_m = m[y]
    wass = np.sum(rows_m * p, axis=1)
    tp = float(np.sum(alpha * (alpha - wass)))
    err = float(np.sum(wass))
    denom = 2.0 * tp + err
    loss = 1.0 - 2.0 * tp / denom
    dl_dw = (2.0 * err * alpha + 2.0 * tp) / (denom * denom)
    grad = dl_dw[:, None] * p * (rows_m - wass[:, None])
    return float(loss), grad.reshape(shape)


LOSSES = {
    "wce": weighted_cross_entropy,
    "focal": focal_loss,
    "gwdl": generalized_wasserstein_dice_loss,
}


def zone_class_weights() -> ClassWeights:
    return ClassWeights(ZONE_CLASS_WEIGHTS)


def invert_enet_weights(weights, c: float = ENET_C) -> np.ndarray:
    """Frequencies that reproduce ``weights`` under the ENet formula."""
    w = np.asarray(getattr(weights, "weights", weights), dtype=np.float64)
    return np.exp(1.0 / w) - c
