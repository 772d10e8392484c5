"""Rank segmentation models from their mean Hausdorff, mean ARI and total time.

The defaults are reference results for four deep networks and four classical
methods on a 201-frame flame dataset; pass a JSON file of
``[name, hausdorff, ari, seconds]`` rows to rank your own.
"""
import argparse
import json

from flamezones.analysis import ModelSummary, rank_models

REFERENCE = [
    ("GMM", 1288.10, 0.9156, 2723.8),
    ("K-means", 1000.63, 0.8855, 3035.1),
    ("Thresholding", 1029.08, 0.9152, 30.7),
    ("Chan-Vese", 1031.90, 0.8568, 18177.5),
    ("DeepLabv3", 784.86, 0.9514, 17.1),
    ("SegNet", 692.73, 0.9381, 16.4),
    ("UNet", 586.46, 0.9504, 15.7),
    ("AttentionUNet", 601.05, 0.9592, 17.7),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--models", help="JSON file of [name, hausdorff, ari, seconds] rows")
    args = ap.parse_args()
    rows = REFERENCE
    if args.models:
        with open(args.models, encoding="utf-8") as fh:
            rows = [tuple(r) for r in json.load(fh)]
    for i, m in enumerate(rank_models([ModelSummary(*r) for r in rows]), start=1):
        print(f"{i}. {m.name:14s} HD={m.mean_hausdorff:8.2f} ARI={m.mean_ari:.4f} time={m.total_seconds:9.1f}s")


if __name__ == "__main__":
    main()
