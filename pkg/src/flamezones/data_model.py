"""Core image/mask types, file ingestion, splitting and a synthetic flame generator.

Class ids follow increasing temperature: 0 = background, 1 = Outer zone,
2 = Middle zone, 3 = Central zone.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

BACKGROUND, OUTER, MIDDLE, CENTRAL = 0, 1, 2, 3
CLASS_NAMES = ("background", "outer", "middle", "central")
NUM_ZONE_CLASSES = 4

# black, blue, orange, white: cold to hot
_PALETTE = [0, 0, 0, 30, 60, 200, 240, 140, 20, 255, 255, 255]


class FormatError(ValueError):
    """Raised when an input file does not follow the expected format."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class LabelMask:
    """H x W grid of class ids in ``{0..num_classes-1}``."""

    labels: np.ndarray
    num_classes: int = NUM_ZONE_CLASSES

    def __post_init__(self):
        labels = np.array(self.labels, copy=True)
        if labels.ndim != 2 or labels.size == 0:
            raise ValueError(f"labels must be a non-empty 2-D array, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise ValueError("labels must be integral")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ValueError(
                f"label values must lie in [0, {self.num_classes - 1}], "
                f"got [{labels.min()}, {labels.max()}]"
            )
        dtype = np.uint8 if self.num_classes <= 256 else np.int32
        object.__setattr__(self, "labels", _frozen(labels.astype(dtype)))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def __eq__(self, other):
        if not isinstance(other, LabelMask):
            return NotImplemented
        return self.num_classes == other.num_classes and np.array_equal(self.labels, other.labels)

    def __repr__(self):
        return f"LabelMask({self.width}x{self.height}, C={self.num_classes})"


@dataclass(frozen=True, eq=False)
class IntensityImage:
    """H x W grid of finite reals (raw temperatures or normalized values)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.size == 0:
            raise ValueError(f"values must be a non-empty 2-D array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("intensity values must be finite")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, IntensityImage):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"IntensityImage({self.width}x{self.height})"


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    val: list
    test: list

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)

    def to_json(self) -> str:
        return json.dumps({"train": self.train, "val": self.val, "test": self.test}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DatasetSplit":
        data = json.loads(text)
        return cls(list(data["train"]), list(data["val"]), list(data["test"]))


# ---------------------------------------------------------------------------
# file I/O


def load_label_mask(path, num_classes: int | None = None) -> LabelMask:
    """Read an 8-bit indexed PNG whose palette indices are class ids.

    ``num_classes`` defaults to one more than the largest index present
    (but never below 2). Pass it explicitly when a mask may not contain
    every class, e.g. a prediction that missed the Central zone.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            labels = np.asarray(im)
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"cannot read mask {path}: {exc}") from exc
    if mode != "P":
        raise FormatError(f"{path}: expected an indexed-color (palette) PNG, got mode {mode!r}")
    labels = labels.astype(np.int64)
    used = int(labels.max()) + 1
    if num_classes is None:
        num_classes = max(2, used)
    elif used > num_classes:
        raise FormatError(f"{path}: index {used - 1} outside {num_classes} classes")
    return LabelMask(labels, num_classes)


def save_label_mask(mask: LabelMask, path) -> None:
    if mask.num_classes > 256:
        raise ValueError("indexed PNG holds at most 256 classes")
    im = Image.fromarray(np.ascontiguousarray(mask.labels, dtype=np.uint8), mode="P")
    palette = list(_PALETTE)
    for i in range(len(palette) // 3, 256):
        palette += [i, i, i]
    im.putpalette(palette)
    im.save(Path(path), format="PNG")


def load_intensity_image(path) -> IntensityImage:
    """Read a headerless CSV grid of reals; values are returned unmodified."""
    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                vals = [float(cell) for cell in row]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
            if rows and len(vals) != len(rows[0]):
                raise FormatError(
                    f"{path}:{lineno}: ragged rows ({len(vals)} columns, expected {len(rows[0])})"
                )
            rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: empty intensity file")
    values = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise FormatError(f"{path}: non-finite value")
    return IntensityImage(values)


def save_intensity_image(img: IntensityImage, path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in img.values:
            writer.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# preprocessing


def normalize(img: IntensityImage) -> IntensityImage:
    """Per-image min-max scaling to [0, 1]; a constant image maps to zeros."""
    v = img.values
    lo, hi = v.min(), v.max()
    if hi == lo:
        return IntensityImage(np.zeros_like(v))
    out = (v - lo) / (hi - lo)
    # pin the extremes so normalize is idempotent bit-for-bit
    out[v == lo] = 0.0
    out[v == hi] = 1.0
    return IntensityImage(out)


def largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    """Apportion ``n`` items by ``ratios`` (Hamilton method, ties to earlier slots)."""
    quotas = [n * r for r in ratios]
    sizes = [math.floor(q) for q in quotas]
    left = n - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:left]:
        sizes[i] += 1
    return sizes


def split_dataset(ids: Sequence, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetSplit:
    ids = list(ids)
    if not ids:
        raise ValueError("cannot split an empty id list")
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive reals summing to 1, got {ratios}")
    n_train, n_val, _ = largest_remainder(len(ids), ratios)
    perm = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in perm]
    return DatasetSplit(
        train=shuffled[:n_train],
        val=shuffled[n_train:n_train + n_val],
        test=shuffled[n_train + n_val:],
    )


# ---------------------------------------------------------------------------
# synthetic flames


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    rx: float
    ry: float

    def rasterize(self, width: int, height: int) -> np.ndarray:
        yy, xx = np.mgrid[0:height, 0:width]
        return ((xx - self.cx) / self.rx) ** 2 + ((yy - self.cy) / self.ry) ** 2 <= 1.0


@dataclass(frozen=True)
class FlameGeometry:
    """Three nested ellipses, outermost first (Outer, Middle, Central)."""

    outer: Ellipse
    middle: Ellipse
    central: Ellipse
    levels: tuple[float, float, float, float] = (0.1, 0.4, 0.65, 0.9)

    @classmethod
    def default(cls, width: int, height: int) -> "FlameGeometry":
        # horizontal jet: zones shrink toward the nozzle on the left
        return cls(
            outer=Ellipse(0.50 * width, 0.50 * height, 0.40 * width, 0.30 * height),
            middle=Ellipse(0.42 * width, 0.50 * height, 0.26 * width, 0.19 * height),
            central=Ellipse(0.34 * width, 0.50 * height, 0.12 * width, 0.09 * height),
        )

    @classmethod
    def random(cls, width: int, height: int, rng: np.random.Generator) -> "FlameGeometry":
        cy = height * rng.uniform(0.42, 0.58)
        x0 = width * rng.uniform(0.08, 0.16)
        lo = rng.uniform(0.70, 0.84) * (width - 1 - x0) / 2
        oy = min(height * rng.uniform(0.22, 0.32), cy - 1, height - 2 - cy)
        outer = Ellipse(x0 + lo, cy, lo, oy)
        mx = lo * rng.uniform(0.55, 0.70)
        middle = Ellipse(x0 + mx + 1, cy + rng.uniform(-0.5, 0.5), mx, oy * rng.uniform(0.55, 0.68))
        cxr = mx * rng.uniform(0.40, 0.55)
        central = Ellipse(x0 + cxr + 2, middle.cy, cxr, middle.ry * rng.uniform(0.45, 0.60))
        return cls(outer, middle, central)

    def zones(self, width: int, height: int) -> np.ndarray:
        o = self.outer.rasterize(width, height)
        m = self.middle.rasterize(width, height)
        c = self.central.rasterize(width, height)
        if np.any(m & ~o) or np.any(c & ~m):
            raise ValueError("flame zones are not nested (Central within Middle within Outer)")
        if not (np.any(c) and np.any(m & ~c) and np.any(o & ~m)):
            raise ValueError("every flame zone must cover at least one pixel")
        if np.all(o):
            raise ValueError("outer zone must leave some background")
        return o.astype(np.uint8) + m + c


def generate_synthetic_flame(
    width: int,
    height: int,
    geometry: FlameGeometry | None = None,
    noise: float = 0.0,
    seed: int = 0,
) -> tuple[IntensityImage, LabelMask]:
    """Render a nested-zone flame: per-zone base level plus Gaussian noise."""
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    geometry = geometry or FlameGeometry.default(width, height)
    levels = np.asarray(geometry.levels, dtype=np.float64)
    if levels.shape != (4,) or np.any(np.diff(levels) <= 0):
        raise ValueError("zone levels must strictly increase from background to Central")
    labels = geometry.zones(width, height)
    values = levels[labels]
    if noise > 0:
        values = values + np.random.default_rng(seed).normal(0.0, noise, size=values.shape)
    return IntensityImage(values), LabelMask(labels, NUM_ZONE_CLASSES)


@dataclass
class SyntheticDataset:
    """A list of (id, image, mask) triples; mirrors the on-disk dataset layout."""

    items: list = field(default_factory=list)

    @classmethod
    def generate(cls, n: int, width: int = 64, height: int = 48, noise: float = 0.0,
                 seed: int = 0, vary_geometry: bool = True) -> "SyntheticDataset":
        rng = np.random.default_rng(seed)
        items = []
        for i in range(n):
            geom = FlameGeometry.random(width, height, rng) if vary_geometry else None
            img, mask = generate_synthetic_flame(width, height, geom, noise, seed=int(rng.integers(2**31)))
            items.append((f"frame_{i:04d}", img, mask))
        return cls(items)

    def write(self, root) -> Path:
        """Write ``images/<id>.csv`` and ``masks/<id>.png`` under ``root``."""
        root = Path(root)
        (root / "images").mkdir(parents=True, exist_ok=True)
        (root / "masks").mkdir(parents=True, exist_ok=True)
        for item_id, img, mask in self.items:
            save_intensity_image(img, root / "images" / f"{item_id}.csv")
            save_label_mask(mask, root / "masks" / f"{item_id}.png")
        return root
