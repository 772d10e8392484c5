"""Joint image/mask augmentation: horizontal flip, random scale, random crop."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .data_model import IntensityImage, LabelMask


@dataclass(frozen=True)
class AugmentConfig:
    flip_probability: float = 0.5
    scale_range: tuple[float, float] = (0.7, 2.0)
    crop_size: tuple[int, int] | None = None  # (width, height); None keeps the input size

    def __post_init__(self):
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError("flip_probability must lie in [0, 1]")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError("scale_range must satisfy 0 < lo <= hi")
        if self.crop_size is not None and min(self.crop_size) < 1:
            raise ValueError("crop_size must be positive")


@dataclass(frozen=True)
class AugmentDraw:
    """The random choices behind one augmentation."""

    flip: bool
    scale: float
    offset: tuple[int, int]  # (x, y) of the crop window in the scaled frame


def _resample(arr: np.ndarray, out_shape: tuple[int, int], order: int) -> np.ndarray:
    h, w = arr.shape
    oh, ow = out_shape
    if (oh, ow) == (h, w):
        return arr.copy()
    # align pixel centers: in = (out + 0.5) * in_size / out_size - 0.5
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    if order == 0:
        yi = np.clip(np.floor(yy + 0.5), 0, h - 1).astype(np.int64)
        xi = np.clip(np.floor(xx + 0.5), 0, w - 1).astype(np.int64)
        return arr[yi, xi]
    return map_coordinates(arr, [yy, xx], order=1, mode="nearest")


def draw_params(shape: tuple[int, int], cfg: AugmentConfig, rng: np.random.Generator) -> AugmentDraw:
    h, w = shape
    flip = bool(rng.random() < cfg.flip_probability)
    lo, hi = cfg.scale_range
    scale = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    sh, sw = max(1, round(h * scale)), max(1, round(w * scale))
    cw, ch = cfg.crop_size or (w, h)
    ox = int(rng.integers(0, sw - cw + 1)) if sw > cw else 0
    oy = int(rng.integers(0, sh - ch + 1)) if sh > ch else 0
    return AugmentDraw(flip, scale, (ox, oy))


def apply_draw(img: IntensityImage, mask: LabelMask, draw: AugmentDraw,
               crop_size: tuple[int, int] | None = None) -> tuple[IntensityImage, LabelMask]:
    if img.shape != mask.shape:
        raise ValueError(f"image {img.shape} and mask {mask.shape} differ in size")
    h, w = img.shape
    values, labels = img.values, mask.labels
    if draw.flip:
        values, labels = values[:, ::-1], labels[:, ::-1]
    scaled = (max(1, round(h * draw.scale)), max(1, round(w * draw.scale)))
    values = _resample(np.ascontiguousarray(values), scaled, order=1)
    labels = _resample(np.ascontiguousarray(labels), scaled, order=0)
    cw, ch = crop_size or (w, h)
    out_v = np.zeros((ch, cw))
    out_l = np.zeros((ch, cw), dtype=labels.dtype)
    ox, oy = draw.offset
    win_v = values[oy:oy + ch, ox:ox + cw]
    win_l = labels[oy:oy + ch, ox:ox + cw]
    # smaller scaled images sit top-left on a zero / background canvas
    out_v[:win_v.shape[0], :win_v.shape[1]] = win_v
    out_l[:win_l.shape[0], :win_l.shape[1]] = win_l
    return IntensityImage(out_v), LabelMask(out_l, mask.num_classes)


def augment(img: IntensityImage, mask: LabelMask, cfg: AugmentConfig | None = None,
            seed=None) -> tuple[IntensityImage, LabelMask]:
    """One random flip/scale/crop draw applied identically to image and mask.

    Intensities are resampled bilinearly and labels by nearest neighbour, so
    the output mask never contains ids absent from the input (apart from
    background padding).
    """
    cfg = cfg or AugmentConfig()
    if img.shape != mask.shape:
        raise ValueError(f"image {img.shape} and mask {mask.shape} differ in size")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    draw = draw_params(img.shape, cfg, rng)
    return apply_draw(img, mask, draw, cfg.crop_size)
