"""Traditional intensity-based segmenters: K-means, GMM, multi-level Otsu, Chan-Vese.

Every segmenter works on the 1-D pixel intensities of a normalized image and
returns a LabelMask whose ids are ordered by ascending mean intensity, so the
brightest region lands on the Central zone id.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .data_model import IntensityImage, LabelMask, NUM_ZONE_CLASSES


class SegmentationError(RuntimeError):
    pass


class ConvergenceWarning(UserWarning):
    pass


def _values(img) -> np.ndarray:
    return np.asarray(getattr(img, "values", img), dtype=np.float64)


def relabel_by_mean(regions: np.ndarray, values: np.ndarray, num_classes: int) -> np.ndarray:
    """Map arbitrary region ids to 0.. ordered by ascending mean intensity.

    Regions whose means are exactly equal share an id.
    """
    ids = np.unique(regions)
    means = np.array([values[regions == r].mean() for r in ids])
    # means that differ only by summation rounding count as equal
    slack = 1e-12 * max(1.0, float(np.max(np.abs(means))))
    order = np.argsort(means, kind="stable")
    lookup = np.zeros(int(ids.max()) + 1, dtype=np.int64)
    label = 0
    for pos, idx in enumerate(order):
        if pos and means[idx] - means[order[pos - 1]] > slack:
            label += 1
        lookup[ids[idx]] = label
    out = lookup[regions]
    if out.max() >= num_classes:
        raise SegmentationError("more regions than classes")
    return out


# ---------------------------------------------------------------------------
# K-means


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(x.size)]]
    d2 = (x - centers[0]) ** 2
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            break
        nxt = x[rng.choice(x.size, p=d2 / total)]
        centers.append(nxt)
        d2 = np.minimum(d2, (x - nxt) ** 2)
    return np.sort(np.array(centers))


def _assign(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return np.argmin((x[:, None] - centers[None, :]) ** 2, axis=1)


def kmeans_1d(x: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 300,
              tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray, float]:
    """One Lloyd run from a k-means++ start. Returns (labels, centers, inertia)."""
    centers = _kmeans_pp(x, k, rng)
    labels = _assign(x, centers)
    for _ in range(max_iter):
        counts = np.bincount(labels, minlength=centers.size)
        sums = np.bincount(labels, weights=x, minlength=centers.size)
        new = np.where(counts > 0, sums / np.maximum(counts, 1), centers)
        shift = np.max(np.abs(new - centers))
        centers = new
        labels = _assign(x, centers)
        if shift < tol:
            break
    inertia = float(np.sum((x - centers[labels]) ** 2))
    return labels, centers, inertia


def segment_kmeans(img, k: int = NUM_ZONE_CLASSES, seed: int = 0, max_iter: int = 300,
                   tol: float = 1e-6, n_init: int = 10) -> LabelMask:
    """Lloyd's algorithm on pixel intensities, best of ``n_init`` k-means++ starts."""
    v = _values(img)
    x = v.ravel()
    if k < 2:
        raise ValueError("k must be >= 2")
    if np.unique(x).size < k:
        raise SegmentationError(f"image has fewer than k={k} distinct values")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        run = kmeans_1d(x, k, rng, max_iter, tol)
        if best is None or run[2] < best[2]:
            best = run
    labels = relabel_by_mean(best[0], x, k)
    return LabelMask(labels.reshape(v.shape), k)


# ---------------------------------------------------------------------------
# Gaussian mixture


VARIANCE_FLOOR = 1e-6


@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: list = field(default_factory=list)
    converged: bool = False

    @property
    def k(self) -> int:
        return self.means.size

    def log_joint(self, x: np.ndarray) -> np.ndarray:
        """(N, K) array of log(weight_k * N(x | mean_k, var_k))."""
        return (np.log(self.weights)[None, :]
                - 0.5 * np.log(2 * np.pi * self.variances)[None, :]
                - 0.5 * (x[:, None] - self.means[None, :]) ** 2 / self.variances[None, :])


class _Degenerate(Exception):
    pass


def _fit_em(x, labels0, k, max_iter, tol, min_weight):
    n = x.size
    resp = np.zeros((n, k))
    resp[np.arange(n), labels0] = 1.0
    model = None
    history = []
    converged = False
    for _ in range(max_iter):
        nk = resp.sum(axis=0)
        if np.any(nk / n < min_weight):
            raise _Degenerate
        means = resp.T @ x / nk
        var = np.einsum("nk,nk->k", resp, (x[:, None] - means[None, :]) ** 2) / nk
        model = GmmModel(nk / n, means, np.maximum(var, VARIANCE_FLOOR))
        lj = model.log_joint(x)
        norm = logsumexp(lj, axis=1)
        ll = float(norm.mean())
        history.append(ll)
        resp = np.exp(lj - norm[:, None])
        if len(history) > 1 and history[-1] - history[-2] < tol:
            converged = True
            break
    model.log_likelihood = history
    model.converged = converged
    return model, resp


def segment_gmm(img, k: int = NUM_ZONE_CLASSES, seed: int = 0, max_iter: int = 500,
                tol: float = 1e-7, min_weight: float = 1e-8,
                restarts: int = 3) -> tuple[LabelMask, GmmModel]:
    """EM for a 1-D Gaussian mixture over pixel intensities, seeded by K-means.

    ``tol`` applies to the per-pixel mean log-likelihood. A component whose
    weight falls below ``min_weight`` triggers a restart from a fresh K-means
    seed; after ``restarts`` such restarts the fit fails.
    """
    v = _values(img)
    x = v.ravel()
    if k < 2:
        raise ValueError("k must be >= 2")
    for attempt in range(restarts + 1):
        init = segment_kmeans(v, k, seed=seed + attempt).labels.ravel().astype(np.int64)
        try:
            model, resp = _fit_em(x, init, k, max_iter, tol, min_weight)
            break
        except _Degenerate:
            continue
    else:
        raise SegmentationError(f"EM collapsed a component in {restarts + 1} attempts")
    order = np.argsort(model.means, kind="stable")
    model = GmmModel(model.weights[order], model.means[order], model.variances[order],
                     model.log_likelihood, model.converged)
    labels = np.argmax(resp[:, order], axis=1)
    labels = relabel_by_mean(labels, x, k)
    return LabelMask(labels.reshape(v.shape), k), model


# ---------------------------------------------------------------------------
# multi-level Otsu


N_BINS = 256


def intensity_bins(values: np.ndarray, n_bins: int = N_BINS) -> np.ndarray:
    """Bin index of each value on [0, 1]; out-of-range values are clipped."""
    return np.clip(np.floor(np.asarray(values) * n_bins), 0, n_bins - 1).astype(np.int64)


def _class_term(count: float, total: float) -> float:
    return total * total / count if count > 0 else 0.0


def otsu_thresholds(hist: np.ndarray, n_thresholds: int) -> tuple[int, ...]:
    """Thresholds maximizing between-class variance on a histogram.

    A threshold ``t`` sends bins ``< t`` to the lower class. Maximizing
    ``sum_k S_k^2 / N_k`` (S = intensity mass, N = count per class) is
    equivalent to maximizing between-class variance since the total mean is
    fixed. Solved exactly by dynamic programming over occupied bins; each
    threshold is reported at its canonical position, one past the last
    occupied bin of the class below it.
    """
    hist = np.asarray(hist, dtype=np.int64)
    occupied = np.flatnonzero(hist)
    m = occupied.size
    if m <= n_thresholds:
        raise SegmentationError("not enough occupied bins for the requested thresholds")
    cnt = np.concatenate([[0], np.cumsum(hist[occupied])]).tolist()
    mass = np.concatenate([[0], np.cumsum(hist[occupied] * occupied)]).tolist()

    def term(i, j):  # occupied bins i..j-1 form one class
        return _class_term(cnt[j] - cnt[i], mass[j] - mass[i])

    n_classes = n_thresholds + 1
    # best[c][j]: best score splitting occupied[0:j] into c+1 nonempty classes
    best = [[term(0, j) if j >= 1 else -np.inf for j in range(m + 1)]]
    arg = [[0] * (m + 1)]
    for c in range(1, n_classes):
        row, arow = [-np.inf] * (m + 1), [0] * (m + 1)
        for j in range(c + 1, m + 1):
            for i in range(c, j):
                val = best[c - 1][i] + term(i, j)
                if val > row[j]:
                    row[j], arow[j] = val, i
        best.append(row)
        arg.append(arow)
    cuts = []
    j = m
    for c in range(n_classes - 1, 0, -1):
        j = arg[c][j]
        cuts.append(j)
    cuts.reverse()
    return tuple(int(occupied[i - 1]) + 1 for i in cuts)


def segment_threshold(img, num_classes: int = NUM_ZONE_CLASSES,
                      return_thresholds: bool = False):
    """Multi-level Otsu over a 256-bin histogram of the normalized image."""
    v = _values(img)
    bins = intensity_bins(v)
    hist = np.bincount(bins.ravel(), minlength=N_BINS)
    n_occ = np.count_nonzero(hist)
    if n_occ == 1:
        warnings.warn("constant image: thresholding yields a single class", ConvergenceWarning)
        mask = LabelMask(np.zeros(v.shape, dtype=np.int64), num_classes)
        return (mask, ()) if return_thresholds else mask
    n_thr = min(num_classes - 1, n_occ - 1)
    thresholds = otsu_thresholds(hist, n_thr)
    labels = np.searchsorted(np.asarray(thresholds), bins, side="right")
    mask = LabelMask(labels, num_classes)
    return (mask, thresholds) if return_thresholds else mask


# ---------------------------------------------------------------------------
# multiphase Chan-Vese


@dataclass
class ChanVeseParams:
    mu: float = 0.01
    time_step: float = 0.5
    max_iter: int = 500
    tol: float = 1e-4
    epsilon: float = 1.5
    eta: float = 1e-3
    init: str = "checkerboard"
    init_fields: tuple | None = None
    init_means: tuple | None = None
    warmup: int = 50

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if self.time_step <= 0 or self.tol <= 0 or self.epsilon <= 0 or self.eta <= 0:
            raise ValueError("time_step, tol, epsilon and eta must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.init not in ("checkerboard", "fields"):
            raise ValueError(f"unknown initialization {self.init!r}")
        if self.init == "fields" and self.init_fields is None:
            raise ValueError("init='fields' requires init_fields")
        if self.init_means is not None and len(self.init_means) != 4:
            raise ValueError("init_means needs one value per phase")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")


@dataclass
class ChanVeseResult:
    mask: LabelMask
    phi1: np.ndarray
    phi2: np.ndarray
    means: np.ndarray
    energies: list
    iterations: int
    converged: bool


def checkerboard_fields(shape) -> tuple[np.ndarray, np.ndarray]:
    """Two interleaved sinusoidal checkerboards of different periods."""
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    phi1 = np.sin(np.pi * xx / 5.0) * np.sin(np.pi * yy / 5.0)
    phi2 = np.sin(np.pi * xx / 3.0 + 0.5) * np.sin(np.pi * yy / 3.0 + 0.5)
    return phi1, phi2


def _heaviside(phi, eps):
    # C^1 step with support [-eps, eps]
    t = np.clip(phi / eps, -1.0, 1.0)
    return 0.5 * (1.0 + t + np.sin(np.pi * t) / np.pi)


def _dirac(phi, eps):
    inside = np.abs(phi) < eps
    return np.where(inside, (1.0 + np.cos(np.pi * phi / eps)) / (2.0 * eps), 0.0)


def _grad(h):
    gx = np.zeros_like(h)
    gy = np.zeros_like(h)
    gx[:, :-1] = h[:, 1:] - h[:, :-1]
    gy[:-1, :] = h[1:, :] - h[:-1, :]
    return gx, gy


def _grad_adjoint(px, py):
    # adjoint of the forward-difference operator above (negative divergence)
    out = np.zeros_like(px)
    out[:, :-1] -= px[:, :-1]
    out[:, 1:] += px[:, :-1]
    out[:-1, :] -= py[:-1, :]
    out[1:, :] += py[:-1, :]
    return out


def _phase_weights(h1, h2):
    # phases ordered (phi1>0,phi2>0), (phi1>0,phi2<0), (phi1<0,phi2>0), (phi1<0,phi2<0)
    return np.stack([h1 * h2, h1 * (1 - h2), (1 - h1) * h2, (1 - h1) * (1 - h2)])


# phase index holding the k-th lowest seeded mean; neighbouring bands differ in one level set
_SEED_ORDER = (3, 2, 0, 1)


def spread_means(u: np.ndarray) -> np.ndarray:
    """Phase means evenly spaced over the image range, indexed by phase."""
    lo, hi = float(u.min()), float(u.max())
    levels = lo + (hi - lo) * (np.arange(4) + 0.5) / 4
    out = np.empty(4)
    out[list(_SEED_ORDER)] = levels
    return out


def _region_means(u, w):
    tot = w.sum(axis=(1, 2))
    means = (w * u).sum(axis=(1, 2)) / np.maximum(tot, 1e-300)
    # an empty phase has no mean of its own; park it at the image mean
    return np.where(tot > 0, means, u.mean())


def chanvese_energy(u, phi1, phi2, means, params: ChanVeseParams) -> float:
    h1, h2 = _heaviside(phi1, params.epsilon), _heaviside(phi2, params.epsilon)
    w = _phase_weights(h1, h2)
    data = np.sum(w * (u[None] - means[:, None, None]) ** 2)
    length = 0.0
    if params.mu > 0:
        for h in (h1, h2):
            gx, gy = _grad(h)
            length += np.sum(np.sqrt(gx * gx + gy * gy + params.eta ** 2))
    return float(data + params.mu * length)


def chanvese_gradient(u, phi1, phi2, means, params: ChanVeseParams):
    """Exact gradient of ``chanvese_energy`` with respect to both level sets."""
    eps = params.epsilon
    h1, h2 = _heaviside(phi1, eps), _heaviside(phi2, eps)
    r = (u[None] - means[:, None, None]) ** 2
    d_h1 = (r[0] - r[2]) * h2 + (r[1] - r[3]) * (1 - h2)
    d_h2 = (r[0] - r[1]) * h1 + (r[2] - r[3]) * (1 - h1)
    if params.mu > 0:
        for h, acc in ((h1, d_h1), (h2, d_h2)):
            gx, gy = _grad(h)
            norm = np.sqrt(gx * gx + gy * gy + params.eta ** 2)
            acc += params.mu * _grad_adjoint(gx / norm, gy / norm)
    return _dirac(phi1, eps) * d_h1, _dirac(phi2, eps) * d_h2


def chanvese_evolve(img, params: ChanVeseParams | None = None) -> ChanVeseResult:
    """Alternate closed-form region means with a backtracked descent step.

    The means minimize the energy for fixed level sets and every accepted
    level-set step lowers it, so the recorded energy never increases. For the
    first ``params.warmup`` iterations the means stay at their seeded values
    (evenly spread over the intensity range unless ``init_means`` is given):
    from an image-agnostic start every phase has nearly the global mean, and
    recomputing them immediately lets all bright pixels drain into one phase.
    """
    params = params or ChanVeseParams()
    u = _values(img)
    if np.ptp(u) == 0:
        # nothing to separate: one region, all means equal
        zeros = np.zeros(u.shape)
        means = np.full(4, float(u.flat[0]))
        energy = chanvese_energy(u, zeros, zeros, means, params)
        return ChanVeseResult(LabelMask(zeros.astype(np.int64), NUM_ZONE_CLASSES), zeros, zeros.copy(),
                              means, [energy], 0, True)
    if params.init == "fields":
        phi1, phi2 = (np.array(f, dtype=np.float64) for f in params.init_fields)
        if phi1.shape != u.shape or phi2.shape != u.shape:
            raise ValueError("initial level sets must match the image shape")
    else:
        phi1, phi2 = checkerboard_fields(u.shape)

    def means_for(p1, p2):
        w = _phase_weights(_heaviside(p1, params.epsilon), _heaviside(p2, params.epsilon))
        return _region_means(u, w)

    if params.init_means is not None:
        means = np.empty(4)
        means[list(_SEED_ORDER)] = np.sort(np.asarray(params.init_means, dtype=np.float64))
    else:
        means = spread_means(u)
    energy = chanvese_energy(u, phi1, phi2, means, params)
    energies = [energy]
    converged = False
    it = 0
    dt = params.time_step
    for it in range(1, params.max_iter + 1):
        g1, g2 = chanvese_gradient(u, phi1, phi2, means, params)
        gmax = max(np.abs(g1).max(), np.abs(g2).max())
        if gmax == 0:
            # every pixel sits outside the transition band: the flow has stopped
            converged = True
            break
        step = dt / gmax
        for _ in range(40):
            n1, n2 = phi1 - step * g1, phi2 - step * g2
            e_new = chanvese_energy(u, n1, n2, means, params)
            if e_new <= energy:
                break
            step *= 0.5
        else:
            n1, n2, e_new = phi1, phi2, energy
        change = 0.5 * (np.mean(np.abs(n1 - phi1)) + np.mean(np.abs(n2 - phi2)))
        phi1, phi2 = n1, n2
        if it > params.warmup:
            means = means_for(phi1, phi2)
            e_new = chanvese_energy(u, phi1, phi2, means, params)
        energy = e_new
        energies.append(energy)
        if it > params.warmup and change < params.tol:
            converged = True
            break

    final = means_for(phi1, phi2)
    if not np.array_equal(final, means):
        means = final
        energies.append(chanvese_energy(u, phi1, phi2, means, params))

    phases = 2 * (phi1 <= 0) + (phi2 <= 0)
    labels = relabel_by_mean(phases, u, NUM_ZONE_CLASSES)
    return ChanVeseResult(LabelMask(labels, NUM_ZONE_CLASSES), phi1, phi2, means,
                          energies, it, converged)


def segment_chanvese(img, params: ChanVeseParams | None = None) -> LabelMask:
    result = chanvese_evolve(img, params)
    if not result.converged:
        warnings.warn(f"Chan-Vese did not converge in {result.iterations} iterations",
                      ConvergenceWarning)
    return result.mask


METHODS = ("gmm", "kmeans", "threshold", "chanvese")


def run_segmenter(method: str, img, seed: int = 0, params: dict | None = None) -> LabelMask:
    """Dispatch by method name; ``params`` are keyword overrides for that segmenter."""
    params = dict(params or {})
    if method == "kmeans":
        return segment_kmeans(img, seed=seed, **params)
    if method == "gmm":
        return segment_gmm(img, seed=seed, **params)[0]
    if method == "threshold":
        return segment_threshold(img, **params)
    if method == "chanvese":
        return segment_chanvese(img, ChanVeseParams(**params))
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
