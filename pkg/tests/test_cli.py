import csv
import json
import math

import numpy as np
import pytest

from flamezones.cli import main
from flamezones.data_model import load_intensity_image, load_label_mask
from flamezones.losses import weighted_cross_entropy, zone_class_weights


@pytest.fixture(scope="module")
def ds(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "ds"
    assert main(["synth", "--n", "4", "--width", "40", "--height", "30", "--seed", "2", "--out", str(root)]) == 0
    return root


def test_synth_layout(ds):
    assert len(list((ds / "images").glob("*.csv"))) == 4
    assert len(list((ds / "masks").glob("*.png"))) == 4


@pytest.mark.parametrize("method", ["kmeans", "gmm", "threshold", "chanvese"])
def test_segment_then_eval(ds, tmp_path, method):
    pred = tmp_path / method
    assert main(["segment", "--method", method, "--in", str(ds / "images"), "--out", str(pred)]) == 0
    assert (pred / "timings.csv").exists()
    out = tmp_path / "report.csv"
    assert main(["eval", "--pred-dir", str(pred), "--gt-dir", str(ds / "masks"), "--out", str(out)]) == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert all(float(r["ari"]) == 1.0 and r["method"] == method for r in rows)
    assert all(float(r["seconds"]) >= 0 for r in rows)


def test_segment_single_file_with_params(ds, tmp_path):
    out = tmp_path / "one.png"
    params = json.dumps({"n_init": 1})
    assert main(["segment", "--method", "kmeans", "--params", params,
                 "--in", str(ds / "images" / "frame_0000.csv"), "--out", str(out)]) == 0
    assert load_label_mask(out, 4) == load_label_mask(ds / "masks" / "frame_0000.png", 4)


def test_eval_metric_subset_and_per_class(ds, tmp_path):
    out = tmp_path / "r.csv"
    assert main(["eval", "--pred-dir", str(ds / "masks"), "--gt-dir", str(ds / "masks"),
                 "--metrics", "ari,hausdorff", "--out", str(out), "--per-class", "--method", "gt"]) == 0
    header = out.read_text().splitlines()[0]
    assert header == "image_id,method,ari,hausdorff,seconds"
    per_class = json.loads(out.with_suffix(".per_class.json").read_text())
    assert per_class["frame_0000"]["jaccard"] == [1.0] * 4
    with pytest.raises(SystemExit):
        main(["eval", "--pred-dir", str(ds / "masks"), "--gt-dir", str(ds / "masks"),
              "--metrics", "bogus", "--out", str(out)])


def test_loss_command(ds, tmp_path, capsys):
    target = ds / "masks" / "frame_0001.png"
    mask = load_label_mask(target, 4)
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(mask.height * mask.width, 4))
    np.savetxt(tmp_path / "logits.csv", logits, delimiter=",")
    grad_path = tmp_path / "grad.csv"
    assert main(["loss", "--loss", "wce", "--logits", str(tmp_path / "logits.csv"),
                 "--target", str(target), "--grad-out", str(grad_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    expect, grad = weighted_cross_entropy(logits.reshape(mask.height, mask.width, 4), mask, zone_class_weights())
    assert out["loss"] == "wce"
    assert out["value"] == pytest.approx(expect, rel=1e-15)
    assert np.allclose(np.loadtxt(grad_path, delimiter=","), grad.reshape(-1, 4), rtol=0, atol=1e-15)
    for loss in ("focal", "gwdl"):
        assert main(["loss", "--loss", loss, "--logits", str(tmp_path / "logits.csv"), "--target", str(target),
                     "--weights", "[1, 2, 3, 4]", "--distances", "zones"]) == 0


def test_weights_command(ds, capsys):
    assert main(["weights", "--frequencies", "[0.25, 0.25, 0.25, 0.25]"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["weights"] == pytest.approx([1 / math.log(1.27)] * 4, abs=1e-12)
    assert main(["weights", "--from-masks", str(ds / "masks")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(sum(out["frequencies"]) - 1) < 1e-12


def test_correlate_and_rank(ds, tmp_path, capsys):
    reports = tmp_path / "reports"
    reports.mkdir()
    for method in ("kmeans", "threshold"):
        pred = tmp_path / f"pred_{method}"
        main(["segment", "--method", method, "--in", str(ds / "images"), "--out", str(pred)])
        main(["eval", "--pred-dir", str(pred), "--gt-dir", str(ds / "masks"),
              "--out", str(reports / f"{method}.csv"), "--method", method])
    assert main(["rank", "--reports", str(reports), "--out", str(tmp_path / "ranking.json")]) == 0
    ranking = json.loads((tmp_path / "ranking.json").read_text())
    assert {r["method"] for r in ranking} == {"kmeans", "threshold"}

    rankings = tmp_path / "rankings.csv"
    rng = np.random.default_rng(1)
    with open(rankings, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "rank1"])
        for i in range(4):
            w.writerow([f"frame_{i:04d}", rng.random()])
    # a report with varying scores: a noisy prediction set
    noisy = tmp_path / "noisy_report.csv"
    with open(noisy, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "method", "jaccard", "f_measure", "ari", "mutual_information", "kappa",
                    "hausdorff", "mae", "mse", "psnr", "seconds"])
        for i in range(4):
            w.writerow([f"frame_{i:04d}", "m"] + list(rng.random(10)))
    capsys.readouterr()
    assert main(["correlate", "--report", str(noisy), "--rankings", str(rankings),
                 "--out", str(tmp_path / "corr.csv")]) == 0
    assert "rank1:" in capsys.readouterr().out
    assert (tmp_path / "corr.csv").read_text().startswith(",jaccard")


def test_augment_command(ds, tmp_path):
    out = tmp_path / "aug"
    assert main(["augment", "--image", str(ds / "images" / "frame_0000.csv"),
                 "--mask", str(ds / "masks" / "frame_0000.png"), "--crop", "32x24",
                 "--seed", "3", "--count", "3", "--out-dir", str(out)]) == 0
    imgs = sorted(out.glob("*.csv"))
    assert len(imgs) == 3
    assert load_intensity_image(imgs[0]).shape == (24, 32)
    assert load_label_mask(sorted(out.glob("*.png"))[0], 4).shape == (24, 32)


def test_benchmark_command(ds, tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({
        "dataset": str(ds),
        "methods": [{"name": "threshold", "kind": "classical"},
                    {"name": "truth", "kind": "external", "pred_dir": str(ds / "masks")}],
        "split": {"seed": 0, "ratios": [0.5, 0.25, 0.25]},
        "parallelism": 1,
    }))
    assert main(["benchmark", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    assert "1. threshold" in capsys.readouterr().out
    split = json.loads((tmp_path / "out" / "split.json").read_text())
    assert [len(split[k]) for k in ("train", "val", "test")] == [2, 1, 1]
    agg = json.loads((tmp_path / "out" / "aggregate.json").read_text())
    assert agg["methods"]["truth"]["n_images"] == 4


def test_bad_crop_argument(ds, tmp_path):
    with pytest.raises(SystemExit):
        main(["augment", "--image", "x", "--mask", "y", "--crop", "big", "--out-dir", str(tmp_path)])
