import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from flamezones.data_model import (
    DatasetSplit,
    Ellipse,
    FlameGeometry,
    FormatError,
    IntensityImage,
    LabelMask,
    generate_synthetic_flame,
    largest_remainder,
    load_intensity_image,
    load_label_mask,
    normalize,
    save_intensity_image,
    save_label_mask,
    split_dataset,
)


def test_label_mask_validation():
    with pytest.raises(ValueError):
        LabelMask(np.array([[0, 4]]), 4)
    with pytest.raises(ValueError):
        LabelMask(np.array([[0, 1]]), 1)
    with pytest.raises(ValueError):
        LabelMask(np.zeros((0, 3), dtype=int))
    m = LabelMask(np.array([[0, 3], [1, 2]]))
    assert (m.width, m.height, m.num_classes) == (2, 2, 4)
    with pytest.raises(ValueError):
        m.labels[0, 0] = 1


def test_intensity_rejects_nonfinite():
    with pytest.raises(ValueError):
        IntensityImage(np.array([[1.0, np.nan]]))


def test_mask_png_640x480(tmp_path, rng):
    labels = rng.integers(0, 4, size=(480, 640))
    save_label_mask(LabelMask(labels), tmp_path / "m.png")
    m = load_label_mask(tmp_path / "m.png")
    assert (m.width, m.height, m.num_classes) == (640, 480, 4)


def test_mask_single_pixel(tmp_path):
    save_label_mask(LabelMask(np.zeros((1, 1), dtype=int), 2), tmp_path / "one.png")
    m = load_label_mask(tmp_path / "one.png")
    assert m.shape == (1, 1)
    assert m.labels[0, 0] == 0


def test_mask_round_trip_8x8(tmp_path, rng):
    labels = rng.integers(0, 4, size=(8, 8))
    mask = LabelMask(labels)
    save_label_mask(mask, tmp_path / "r.png")
    back = load_label_mask(tmp_path / "r.png", 4)
    assert back.labels.tobytes() == mask.labels.tobytes()


@settings(max_examples=25, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9))), st.integers(0, 255))
def test_mask_round_trip_any_class_count(tmp_path_factory, labels, extra):
    c = int(max(labels.max(), extra)) + 1
    mask = LabelMask(labels, max(c, 2))
    path = tmp_path_factory.mktemp("rt") / "m.png"
    save_label_mask(mask, path)
    assert load_label_mask(path, mask.num_classes) == mask


def test_load_mask_rejects_non_indexed(tmp_path):
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8), mode="L").save(tmp_path / "g.png")
    with pytest.raises(FormatError):
        load_label_mask(tmp_path / "g.png")
    (tmp_path / "bad.png").write_bytes(b"not a png")
    with pytest.raises(FormatError):
        load_label_mask(tmp_path / "bad.png")


def test_load_mask_class_override(tmp_path):
    save_label_mask(LabelMask(np.array([[0, 1]]), 4), tmp_path / "m.png")
    assert load_label_mask(tmp_path / "m.png").num_classes == 2
    assert load_label_mask(tmp_path / "m.png", 4).num_classes == 4
    with pytest.raises(FormatError):
        load_label_mask(tmp_path / "m.png", 1)


def test_load_intensity_csv(tmp_path):
    (tmp_path / "a.csv").write_text("300,400\n500,600\n")
    img = load_intensity_image(tmp_path / "a.csv")
    assert img.values.ravel().tolist() == [300, 400, 500, 600]


@pytest.mark.parametrize("text", ["1,2,3\n4,5,6,7\n", "1,x\n", "", "1,nan\n"])
def test_load_intensity_rejects_malformed(tmp_path, text):
    (tmp_path / "bad.csv").write_text(text)
    with pytest.raises(FormatError):
        load_intensity_image(tmp_path / "bad.csv")


def test_intensity_640x480_round_trip(tmp_path, rng):
    vals = rng.uniform(280, 1400, size=(480, 640))
    save_intensity_image(IntensityImage(vals), tmp_path / "t.csv")
    img = load_intensity_image(tmp_path / "t.csv")
    assert (img.width, img.height) == (640, 480)
    assert np.array_equal(img.values, vals)


def test_normalize_examples():
    out = normalize(IntensityImage(np.array([[300.0, 400.0], [500.0, 600.0]])))
    assert np.allclose(out.values.ravel(), [0, 1 / 3, 2 / 3, 1], atol=1e-15)
    assert np.array_equal(normalize(IntensityImage(np.full((1, 3), 5.0))).values, np.zeros((1, 3)))


def test_normalize_random_range(rng):
    for _ in range(100):
        out = normalize(IntensityImage(rng.normal(500, 200, size=(7, 5))))
        assert out.values.min() == 0.0 and out.values.max() == 1.0


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_normalize_idempotent(values):
    once = normalize(IntensityImage(values))
    assert np.array_equal(normalize(once).values, once.values)
    assert once.values.min() >= 0.0 and once.values.max() <= 1.0


def test_split_201_and_10_ids():
    assert split_dataset(range(201), (0.8, 0.1, 0.1), seed=0).sizes() == (161, 20, 20)
    assert split_dataset(range(10), (0.8, 0.1, 0.1), seed=0).sizes() == (8, 1, 1)


def test_split_determinism():
    ids = [f"img{i}" for i in range(30)]
    a, b = split_dataset(ids, seed=7), split_dataset(ids, seed=7)
    assert a == b
    c = split_dataset(ids, seed=8)
    assert (a.train + a.val + a.test) != (c.train + c.val + c.test)


@given(st.integers(1, 400), st.integers(0, 2**32 - 1))
def test_split_partitions(n, seed):
    s = split_dataset(list(range(n)), (0.7, 0.2, 0.1), seed)
    together = s.train + s.val + s.test
    assert sorted(together) == list(range(n))
    assert sum(s.sizes()) == n


@pytest.mark.parametrize("ratios", [(0.5, 0.5, 0.1), (1.0, 0.0, 0.0), (0.5, 0.5)])
def test_split_rejects_bad_ratios(ratios):
    with pytest.raises(ValueError):
        split_dataset(range(10), ratios)


def test_split_rejects_empty():
    with pytest.raises(ValueError):
        split_dataset([], (0.8, 0.1, 0.1))


def test_split_json_round_trip():
    s = split_dataset(range(12), seed=1)
    assert DatasetSplit.from_json(s.to_json()) == s


def test_largest_remainder_sums():
    assert largest_remainder(7, (1 / 3, 1 / 3, 1 / 3)) == [3, 2, 2]


def test_synthetic_noise_free_levels():
    img, mask = generate_synthetic_flame(64, 48)
    assert np.unique(img.values).size == 4
    # same label <=> same intensity
    for c in range(4):
        assert np.unique(img.values[mask.labels == c]).size == 1
    levels = [img.values[mask.labels == c][0] for c in range(4)]
    assert levels == sorted(levels)
    mids = np.convolve(levels, [0.5, 0.5], "valid")
    assert np.array_equal(np.searchsorted(mids, img.values), mask.labels)


def test_synthetic_deterministic():
    a = generate_synthetic_flame(40, 30, noise=0.05, seed=9)
    b = generate_synthetic_flame(40, 30, noise=0.05, seed=9)
    assert a[0].values.tobytes() == b[0].values.tobytes() and a[1] == b[1]


def test_synthetic_rejects_bad_geometry():
    bad = FlameGeometry(Ellipse(20, 15, 5, 5), Ellipse(20, 15, 8, 8), Ellipse(20, 15, 2, 2))
    with pytest.raises(ValueError):
        generate_synthetic_flame(40, 30, bad)
    with pytest.raises(ValueError):
        generate_synthetic_flame(0, 30)
    with pytest.raises(ValueError):
        generate_synthetic_flame(40, 30, noise=-1)


def test_random_geometry_always_valid(rng):
    for _ in range(200):
        geom = FlameGeometry.random(64, 48, rng)
        labels = geom.zones(64, 48)
        assert set(np.unique(labels)) == {0, 1, 2, 3}
