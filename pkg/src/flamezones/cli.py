"""Command line entry point: ``flamezones <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, augment as aug, benchmark, classical_seg, data_model, losses, metrics


def _json_arg(text):
    """Inline JSON, or a path to a JSON file."""
    if text is None:
        return None
    p = Path(text)
    if p.exists():
        return json.loads(p.read_text())
    return json.loads(text)


def _crop(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"crop must look like WxH, got {text!r}")
    return w, h


# ---------------------------------------------------------------------------


def cmd_segment(args):
    src, dst = Path(args.inp), Path(args.out)
    params = _json_arg(args.params) or {}
    if src.is_dir():
        files = sorted(src.glob("*.csv"))
        dst.mkdir(parents=True, exist_ok=True)
        outs = [dst / f"{f.stem}.png" for f in files]
    else:
        files, outs = [src], [dst]
    timings = []
    for f, o in zip(files, outs):
        img = data_model.normalize(data_model.load_intensity_image(f))
        seed = benchmark.image_seed(args.seed, f.stem)
        t0 = time.perf_counter()
        mask = classical_seg.run_segmenter(args.method, img, seed=seed, params=params)
        seconds = time.perf_counter() - t0
        data_model.save_label_mask(mask, o)
        timings.append((f.stem, seconds))
        logging.info("%s: %.3fs", f.name, seconds)
    timing_path = (dst if src.is_dir() else dst.parent) / "timings.csv"
    with open(timing_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "method", "seconds"])
        for stem, s in timings:
            w.writerow([stem, args.method, repr(s)])
    print(f"segmented {len(files)} image(s) with {args.method}; timings in {timing_path}")


def cmd_eval(args):
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    names = metrics.METRIC_NAMES if args.metrics == "all" else tuple(
        m.strip() for m in args.metrics.split(","))
    unknown = set(names) - set(metrics.METRIC_NAMES)
    if unknown:
        raise SystemExit(f"unknown metrics: {sorted(unknown)}")
    timings_path = Path(args.timings) if args.timings else pred_dir / "timings.csv"
    timings = {}
    if timings_path.exists():
        with open(timings_path, newline="", encoding="utf-8") as fh:
            timings = {r["image_id"]: float(r["seconds"]) for r in csv.DictReader(fh)}
    method = args.method or pred_dir.name
    report = benchmark.EvalReport()
    per_class = {}
    for gt_path in sorted(gt_dir.glob("*.png")):
        pred_path = pred_dir / gt_path.name
        if not pred_path.exists():
            logging.warning("no prediction for %s", gt_path.stem)
            report.failures.append({"image_id": gt_path.stem, "method": method, "error": "missing prediction"})
            continue
        gt = data_model.load_label_mask(gt_path, args.num_classes)
        pred = data_model.load_label_mask(pred_path, args.num_classes)
        report.rows.append(benchmark.ReportRow(gt_path.stem, method, metrics.evaluate_pair(pred, gt),
                                               timings.get(gt_path.stem, float("nan"))))
        if args.per_class:
            per_class[gt_path.stem] = metrics.per_class_breakdown(pred, gt)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cols = ("image_id", "method") + names + ("seconds",)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in report.rows:
            rec = row.as_record()
            w.writerow([benchmark._fmt(rec[c]) for c in cols])
    if args.per_class:
        out.with_suffix(".per_class.json").write_text(json.dumps(per_class, indent=2))
    print(f"evaluated {len(report.rows)} pair(s), {len(report.failures)} missing; report in {out}")


def _read_logits(path, shape, channels=None):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [[float(v) for v in r] for r in csv.reader(fh) if r]
    arr = np.array(rows, dtype=np.float64)
    h, w = shape
    if arr.ndim != 2 or arr.shape[0] != h * w:
        raise SystemExit(f"logits file has {arr.shape[0]} rows, expected H*W = {h * w}")
    return arr.reshape(h, w, arr.shape[1])


def cmd_loss(args):
    target = data_model.load_label_mask(args.target)
    logits = _read_logits(args.logits, target.shape)
    c = logits.shape[2]
    if args.loss in ("wce", "focal"):
        if args.weights in (None, "zones"):
            weights = losses.zone_class_weights()
        else:
            weights = losses.ClassWeights(_json_arg(args.weights))
        if args.loss == "wce":
            value, grad = losses.weighted_cross_entropy(logits, target, weights)
        else:
            value, grad = losses.focal_loss(logits, target, weights, args.gamma)
    else:
        if args.distances in (None, "zones"):
            dist = losses.DistanceMatrix.zone_distances(c)
        else:
            dist = losses.DistanceMatrix(_json_arg(args.distances))
        value, grad = losses.generalized_wasserstein_dice_loss(logits, target, dist)
    print(json.dumps({"loss": args.loss, "value": value}))
    if args.grad_out:
        with open(args.grad_out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in grad.reshape(-1, c):
                w.writerow([repr(float(v)) for v in row])


def cmd_weights(args):
    if args.from_masks:
        masks = [data_model.load_label_mask(p, args.num_classes)
                 for p in sorted(Path(args.from_masks).glob("*.png"))]
        if not masks:
            raise SystemExit(f"no masks in {args.from_masks}")
        freqs = losses.class_frequencies(masks, args.num_classes)
    elif args.frequencies:
        freqs = np.asarray(_json_arg(args.frequencies), dtype=np.float64)
    else:
        raise SystemExit("give --frequencies or --from-masks")
    weights = losses.enet_class_weights(freqs, c=args.c)
    print(json.dumps({"frequencies": list(map(float, freqs)), "c": args.c,
                      "weights": weights.tolist()}))


def cmd_correlate(args):
    report = benchmark.EvalReport.from_csv(args.report)
    rankings = benchmark.load_rankings(args.rankings, report)
    corr = analysis.correlation_study(report.metric_table(), rankings)
    corr.to_csv(args.out)
    for r in rankings:
        line = ", ".join(f"{n}={corr[n, r.annotator]:+.3f}" for n in corr.names
                         if n not in {x.annotator for x in rankings})
        print(f"{r.annotator}: {line}")


def cmd_rank(args):
    paths = sorted(Path(args.reports).glob("*.csv"))
    if not paths:
        raise SystemExit(f"no report CSVs in {args.reports}")
    report = benchmark.EvalReport.merge(benchmark.EvalReport.from_csv(p) for p in paths)
    ranking = report.ranking()
    out = [{"rank": i + 1, "method": s.name, "mean_hausdorff": s.mean_hausdorff,
            "mean_ari": s.mean_ari, "total_seconds": s.total_seconds}
           for i, s in enumerate(ranking)]
    Path(args.out).write_text(json.dumps(out, indent=2))
    for entry in out:
        print(f"{entry['rank']}. {entry['method']}  HD={entry['mean_hausdorff']:.2f}  ARI={entry['mean_ari']:.4f}")


def cmd_augment(args):
    img = data_model.load_intensity_image(args.image)
    mask = data_model.load_label_mask(args.mask, args.num_classes)
    cfg = aug.AugmentConfig(args.flip_prob, (args.scale_lo, args.scale_hi), args.crop)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    stem = Path(args.image).stem
    for i in range(args.count):
        a_img, a_mask = aug.augment(img, mask, cfg, rng)
        data_model.save_intensity_image(a_img, out / f"{stem}_aug{i:03d}.csv")
        data_model.save_label_mask(a_mask, out / f"{stem}_aug{i:03d}.png")
    print(f"wrote {args.count} augmented pair(s) to {out}")


def cmd_benchmark(args):
    cfg = benchmark.BenchmarkConfig.from_json(args.config)
    report = benchmark.run_benchmark(cfg, args.out)
    for i, s in enumerate(report.ranking(), start=1):
        secs = "n/a" if math.isnan(s.total_seconds) else f"{s.total_seconds:.2f}s"
        print(f"{i}. {s.name}  HD={s.mean_hausdorff:.2f}  ARI={s.mean_ari:.4f}  time={secs}")
    if report.failures:
        print(f"{len(report.failures)} failure(s); see aggregate.json")


def cmd_synth(args):
    ds = data_model.SyntheticDataset.generate(args.n, args.width, args.height, args.noise, args.seed)
    root = ds.write(args.out)
    print(f"wrote {args.n} synthetic flame(s) to {root}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flamezones", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment intensity CSVs with a classical method")
    p.add_argument("--method", required=True, choices=classical_seg.METHODS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", help="JSON object (inline or file) of method parameters")
    p.add_argument("--in", dest="inp", required=True, help="CSV file or directory of CSVs")
    p.add_argument("--out", required=True, help="PNG file or output directory")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="score predicted masks against ground truth")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--metrics", default="all", help="'all' or comma list of metric names")
    p.add_argument("--out", required=True)
    p.add_argument("--method", help="method label for the report (default: pred dir name)")
    p.add_argument("--timings", help="CSV with image_id,seconds (default: <pred-dir>/timings.csv)")
    p.add_argument("--num-classes", type=int, default=data_model.NUM_ZONE_CLASSES)
    p.add_argument("--per-class", action="store_true", help="also write per-class scores as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("loss", help="evaluate a loss and its gradient on stored logits")
    p.add_argument("--loss", required=True, choices=sorted(losses.LOSSES))
    p.add_argument("--logits", required=True, help="CSV with H*W rows and C columns")
    p.add_argument("--target", required=True, help="indexed PNG target mask")
    p.add_argument("--weights", help="JSON list of class weights, or 'zones' for the flame-zone default")
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--distances", help="JSON CxC distance matrix, or 'zones' for the flame-zone default")
    p.add_argument("--grad-out", help="write the gradient as CSV (H*W rows x C)")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("weights", help="ENet class weights from frequencies or masks")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--frequencies", help="JSON list of class frequencies")
    g.add_argument("--from-masks", help="directory of indexed PNG masks")
    p.add_argument("--c", type=float, default=losses.ENET_C)
    p.add_argument("--num-classes", type=int, default=data_model.NUM_ZONE_CLASSES)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("correlate", help="Pearson matrix of metrics against expert rankings")
    p.add_argument("--report", required=True)
    p.add_argument("--rankings", required=True, help="CSV: image_id[,method],rank1,rank2,...")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("rank", help="rank methods from a directory of report CSVs")
    p.add_argument("--reports", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("augment", help="write random flip/scale/crop variants of one pair")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--flip-prob", type=float, default=0.5)
    p.add_argument("--scale-lo", type=float, default=0.7)
    p.add_argument("--scale-hi", type=float, default=2.0)
    p.add_argument("--crop", type=_crop, default=None, help="WxH (default: input size)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--num-classes", type=int, default=data_model.NUM_ZONE_CLASSES)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("benchmark", help="run the full segmentation benchmark from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("synth", help="write a synthetic flame dataset")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=48)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
