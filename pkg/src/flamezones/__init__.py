"""Segmentation benchmark and classical segmenters for multi-zone flame imagery."""

from .data_model import (
    IntensityImage,
    LabelMask,
    DatasetSplit,
    FlameGeometry,
    generate_synthetic_flame,
    load_intensity_image,
    load_label_mask,
    normalize,
    save_intensity_image,
    save_label_mask,
    split_dataset,
)
from .metrics import MetricScores, evaluate_pair, hausdorff
from .classical_seg import (
    ChanVeseParams,
    segment_chanvese,
    segment_gmm,
    segment_kmeans,
    segment_threshold,
)
from .losses import (
    ClassWeights,
    DistanceMatrix,
    enet_class_weights,
    focal_loss,
    generalized_wasserstein_dice_loss,
    weighted_cross_entropy,
)
from .analysis import pearson, correlation_study, rank_models

__version__ = "0.1.0"
