"""End-to-end benchmark: segment, time, evaluate, rank and correlate."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import ModelSummary, RankingVector, correlation_study, rank_models
from .classical_seg import METHODS, run_segmenter
from .data_model import (
    NUM_ZONE_CLASSES,
    FormatError,
    LabelMask,
    load_intensity_image,
    load_label_mask,
    normalize,
    split_dataset,
)
from .metrics import METRIC_NAMES, MetricScores, evaluate_pair

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("image_id", "method") + METRIC_NAMES + ("seconds",)


@dataclass(frozen=True)
class MethodSpec:
    name: str
    kind: str = "classical"  # "classical" or "external"
    method: str | None = None  # classical segmenter; defaults to ``name``
    params: dict = field(default_factory=dict)
    pred_dir: str | None = None

    def __post_init__(self):
        if self.kind not in ("classical", "external"):
            raise ValueError(f"method {self.name!r}: kind must be 'classical' or 'external'")
        if self.kind == "classical" and (self.method or self.name) not in METHODS:
            raise ValueError(f"method {self.name!r}: unknown classical segmenter")
        if self.kind == "external" and not self.pred_dir:
            raise ValueError(f"method {self.name!r}: external methods need pred_dir")


@dataclass
class BenchmarkConfig:
    dataset: Path
    methods: list
    split_seed: int = 0
    ratios: tuple = (0.8, 0.1, 0.1)
    evaluate_on: str = "all"  # all | train | val | test | val+test
    parallelism: int = 1
    seed: int = 0
    num_classes: int = NUM_ZONE_CLASSES
    rankings: Path | None = None

    def __post_init__(self):
        self.dataset = Path(self.dataset)
        if not self.methods:
            raise ValueError("at least one method is required")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.evaluate_on not in ("all", "train", "val", "test", "val+test"):
            raise ValueError(f"unknown evaluate_on {self.evaluate_on!r}")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ValueError("method names must be unique")

    @classmethod
    def from_dict(cls, data: dict, base: Path | None = None) -> "BenchmarkConfig":
        base = Path(base or ".")

        def resolve(p):
            return None if p is None else (base / p if not Path(p).is_absolute() else Path(p))

        methods = []
        for m in data["methods"]:
            pred = m.get("pred_dir")
            methods.append(MethodSpec(
                name=m["name"], kind=m.get("kind", "classical"), method=m.get("method"),
                params=dict(m.get("params") or {}),
                pred_dir=str(resolve(pred)) if pred else None,
            ))
        split = data.get("split", {})
        return cls(
            dataset=resolve(data["dataset"]),
            methods=methods,
            split_seed=int(split.get("seed", 0)),
            ratios=tuple(split.get("ratios", (0.8, 0.1, 0.1))),
            evaluate_on=data.get("evaluate_on", "all"),
            parallelism=int(data.get("parallelism", 1)),
            seed=int(data.get("seed", 0)),
            num_classes=int(data.get("num_classes", NUM_ZONE_CLASSES)),
            rankings=resolve(data.get("rankings")),
        )

    @classmethod
    def from_json(cls, path) -> "BenchmarkConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base=path.parent)


@dataclass
class ReportRow:
    image_id: str
    method: str
    scores: MetricScores
    seconds: float

    def as_record(self) -> dict:
        return {"image_id": self.image_id, "method": self.method, **self.scores.to_dict(),
                "seconds": self.seconds}


def _fmt(v) -> str:
    return v if isinstance(v, str) else repr(float(v))


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def methods(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.method not in seen:
                seen.append(r.method)
        return seen

    def aggregate(self) -> dict:
        out = {}
        for method in self.methods():
            rows = [r for r in self.rows if r.method == method]
            entry = {name: float(np.mean([getattr(r.scores, name) for r in rows]))
                     for name in METRIC_NAMES}
            entry["total_seconds"] = float(sum(r.seconds for r in rows))
            entry["n_images"] = len(rows)
            out[method] = entry
        return out

    def summaries(self) -> list[ModelSummary]:
        return [ModelSummary(m, a["hausdorff"], a["ari"], a["total_seconds"])
                for m, a in self.aggregate().items()]

    def ranking(self) -> list[ModelSummary]:
        return rank_models(self.summaries())

    def metric_table(self) -> dict[str, list[float]]:
        return {name: [getattr(r.scores, name) for r in self.rows] for name in METRIC_NAMES}

    def to_csv(self, path, include_seconds: bool = True) -> None:
        cols = REPORT_COLUMNS if include_seconds else REPORT_COLUMNS[:-1]
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(cols)
            for r in self.rows:
                rec = r.as_record()
                writer.writerow([_fmt(rec[c]) for c in cols])

    @classmethod
    def from_csv(cls, path) -> "EvalReport":
        rows = []
        with open(Path(path), newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                scores = MetricScores(**{n: float(rec[n]) for n in METRIC_NAMES})
                seconds = float(rec["seconds"]) if rec.get("seconds") not in (None, "") else math.nan
                rows.append(ReportRow(rec["image_id"], rec["method"], scores, seconds))
        return cls(rows)

    @classmethod
    def merge(cls, reports) -> "EvalReport":
        out = cls()
        for rep in reports:
            out.rows.extend(rep.rows)
            out.failures.extend(rep.failures)
            out.warnings.extend(rep.warnings)
        return out


# ---------------------------------------------------------------------------


def discover_dataset(root) -> tuple[list[str], list[dict]]:
    """Ids with both ``images/<id>.csv`` and ``masks/<id>.png``, plus unpaired files."""
    root = Path(root)
    images = {p.stem for p in (root / "images").glob("*.csv")}
    masks = {p.stem for p in (root / "masks").glob("*.png")}
    failures = [{"image_id": i, "method": None, "error": "missing mask"} for i in sorted(images - masks)]
    failures += [{"image_id": i, "method": None, "error": "missing image"} for i in sorted(masks - images)]
    return sorted(images & masks), failures


def image_seed(master: int, image_id: str) -> int:
    """Per-image seed from (master seed, image id), independent of scheduling order."""
    ss = np.random.SeedSequence([int(master), zlib.crc32(image_id.encode("utf-8"))])
    return int(ss.generate_state(1)[0])


def _segment_task(args):
    image_path, method, params, seed = args
    try:
        img = normalize(load_intensity_image(image_path))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            t0 = time.perf_counter()
            mask = run_segmenter(method, img, seed=seed, params=params)
            seconds = time.perf_counter() - t0
        return mask.labels, seconds, [str(w.message) for w in caught], None
    except Exception as exc:  # quarantined per file
        return None, None, [], f"{type(exc).__name__}: {exc}"


def _split_ids(ids, cfg: BenchmarkConfig):
    split = split_dataset(ids, cfg.ratios, cfg.split_seed)
    chosen = {
        "all": ids,
        "train": split.train,
        "val": split.val,
        "test": split.test,
        "val+test": split.val + split.test,
    }[cfg.evaluate_on]
    return split, sorted(chosen)


def _external_timings(pred_dir: Path) -> dict[str, float]:
    path = pred_dir / "timings.csv"
    if not path.exists():
        return {}
    with open(path, newline="", encoding="utf-8") as fh:
        return {r["image_id"]: float(r["seconds"]) for r in csv.DictReader(fh)}


def run_benchmark(cfg: BenchmarkConfig, out_dir=None) -> EvalReport:
    ids, failures = discover_dataset(cfg.dataset)
    if not ids:
        raise FormatError(f"no paired images/masks under {cfg.dataset}")
    split, eval_ids = _split_ids(ids, cfg)
    report = EvalReport(failures=list(failures))

    gts = {}
    for image_id in eval_ids:
        try:
            gts[image_id] = load_label_mask(cfg.dataset / "masks" / f"{image_id}.png", cfg.num_classes)
        except (FormatError, ValueError) as exc:
            report.failures.append({"image_id": image_id, "method": None, "error": str(exc)})
    eval_ids = [i for i in eval_ids if i in gts]

    for spec in cfg.methods:
        if spec.kind == "classical":
            tasks = [(str(cfg.dataset / "images" / f"{i}.csv"), spec.method or spec.name,
                      spec.params, image_seed(cfg.seed, i)) for i in eval_ids]
            if cfg.parallelism > 1:
                with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
                    results = list(pool.map(_segment_task, tasks))
            else:
                results = [_segment_task(t) for t in tasks]
            for image_id, (labels, seconds, caught, error) in zip(eval_ids, results):
                if error:
                    log.warning("%s/%s failed: %s", spec.name, image_id, error)
                    report.failures.append({"image_id": image_id, "method": spec.name, "error": error})
                    continue
                for msg in caught:
                    report.warnings.append({"image_id": image_id, "method": spec.name, "warning": msg})
                pred = LabelMask(labels, cfg.num_classes)
                report.rows.append(ReportRow(image_id, spec.name, evaluate_pair(pred, gts[image_id]), seconds))
        else:
            pred_dir = Path(spec.pred_dir)
            timings = _external_timings(pred_dir)
            for image_id in eval_ids:
                try:
                    pred = load_label_mask(pred_dir / f"{image_id}.png", cfg.num_classes)
                    scores = evaluate_pair(pred, gts[image_id])
                except (OSError, FormatError, ValueError) as exc:
                    report.failures.append({"image_id": image_id, "method": spec.name, "error": str(exc)})
                    continue
                report.rows.append(ReportRow(image_id, spec.name, scores,
                                             timings.get(image_id, math.nan)))

    if out_dir is not None:
        write_outputs(report, Path(out_dir), split=split, rankings=cfg.rankings)
    return report


def load_rankings(path, report: EvalReport) -> list[RankingVector]:
    """Align a rankings CSV (image_id[, method], rank1, rank2, ...) to the report rows."""
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        recs = list(reader)
        cols = [c for c in reader.fieldnames if c not in ("image_id", "method")]
    keyed = "method" in (reader.fieldnames or [])
    table = {((r["image_id"], r["method"]) if keyed else r["image_id"]): r for r in recs}
    out = []
    for col in cols:
        scores = []
        for row in report.rows:
            key = (row.image_id, row.method) if keyed else row.image_id
            if key not in table:
                raise ValueError(f"rankings have no entry for {key}")
            scores.append(float(table[key][col]))
        out.append(RankingVector(tuple(scores), col))
    return out


def write_outputs(report: EvalReport, out_dir: Path, split=None, rankings=None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    report.to_csv(out_dir / "report.csv")
    aggregate = {"methods": report.aggregate(), "failures": report.failures,
                 "warnings": report.warnings}
    (out_dir / "aggregate.json").write_text(json.dumps(aggregate, indent=2))
    ranking = [{"rank": i + 1, "method": s.name, "mean_hausdorff": s.mean_hausdorff,
                "mean_ari": s.mean_ari, "total_seconds": s.total_seconds}
               for i, s in enumerate(report.ranking())] if report.rows else []
    (out_dir / "ranking.json").write_text(json.dumps(ranking, indent=2))
    if split is not None:
        (out_dir / "split.json").write_text(split.to_json())
    if rankings is not None:
        corr = correlation_study(report.metric_table(), load_rankings(rankings, report))
        corr.to_csv(out_dir / "corr.csv")
