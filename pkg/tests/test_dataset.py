import numpy as np
import pytest

from fsatfusion.dataset import DataError, DatasetIndex, load_all, load_pair, luminance
from fsatfusion.fixtures import (FIXTURE_SIZE, HELDOUT_SEEDS, TRAIN_SEEDS, fixture_root, make_pair,
                                 write_bundled, write_corpus)
from fsatfusion.imageio import Image, load_pgm, rgb_to_yuv, save_pgm, save_ppm


def make_dir(root, names, size=(4, 5)):
    for side in ("ir", "vi"):
        (root / side).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)
    for n in names:
        save_pgm(Image(rng.random(size)), root / "ir" / f"{n}.pgm")
        save_pgm(Image(rng.random(size)), root / "vi" / f"{n}.pgm")


def test_scan_matches_and_sorts(tmp_path):
    make_dir(tmp_path, ["b", "a", "c"])
    (tmp_path / "vi" / "notes.txt").write_text("ignored")
    idx = DatasetIndex.scan(tmp_path)
    assert [p.name for p in idx] == ["a", "b", "c"] and len(idx) == 3


def test_scan_warns_on_unmatched(tmp_path):
    make_dir(tmp_path, ["a"])
    save_pgm(Image(np.zeros((4, 5))), tmp_path / "ir" / "lonely.pgm")
    with pytest.warns(UserWarning, match="without a partner"):
        idx = DatasetIndex.scan(tmp_path)
    assert idx.unmatched == ["lonely"] and len(idx) == 1


def test_scan_missing_side(tmp_path):
    (tmp_path / "ir").mkdir()
    with pytest.raises(DataError, match="vi/"):
        DatasetIndex.scan(tmp_path)


def test_rgb_visible_reduced_to_luma(tmp_path, rng):
    make_dir(tmp_path, ["a"])
    rgb = rng.random((4, 5, 3))
    save_ppm(Image(rgb), tmp_path / "vi" / "a.ppm")
    (tmp_path / "vi" / "a.pgm").unlink()
    ir, vi = load_pair(DatasetIndex.scan(tmp_path).pairs[0])
    stored = np.floor(rgb * 255 + 0.5) / 255
    np.testing.assert_allclose(vi, rgb_to_yuv(stored)[0].data, atol=1e-12)
    assert luminance(Image(ir)) is not None


def test_bad_pairs_skipped_with_warning(tmp_path):
    make_dir(tmp_path, ["a", "b", "c"])
    (tmp_path / "ir" / "b.pgm").write_bytes(b"P5\n4 5\n255\n")
    save_pgm(Image(np.zeros((3, 3))), tmp_path / "vi" / "c.pgm")
    with pytest.warns(UserWarning, match="skipping"):
        names, pairs, skipped = load_all(DatasetIndex.scan(tmp_path))
    assert names == ["a"] and skipped == ["b", "c"] and len(pairs) == 1


def test_rgb_infrared_rejected(tmp_path, rng):
    make_dir(tmp_path, ["a"])
    (tmp_path / "ir" / "a.pgm").unlink()
    save_ppm(Image(rng.random((4, 5, 3))), tmp_path / "ir" / "a.ppm")
    with pytest.raises(DataError, match="grayscale"):
        load_pair(DatasetIndex.scan(tmp_path).pairs[0])


# -- fixtures --------------------------------------------------------------------------
def test_bundled_corpus_matches_generator(tmp_path):
    write_bundled(tmp_path)
    for split, seeds in (("train", TRAIN_SEEDS), ("heldout", HELDOUT_SEEDS)):
        for side in ("ir", "vi"):
            for seed in seeds:
                name = f"scene{seed:03d}.pgm"
                assert ((tmp_path / split / side / name).read_bytes()
                        == (fixture_root() / split / side / name).read_bytes())


def test_fixture_corpus_shape():
    train = DatasetIndex.scan(fixture_root() / "train")
    held = DatasetIndex.scan(fixture_root() / "heldout")
    assert len(train) == 8 and len(held) == 4
    img = load_pgm(train.pairs[0].ir)
    assert img.size == (FIXTURE_SIZE, FIXTURE_SIZE)


def test_make_pair_deterministic_and_in_range():
    a, b = make_pair(3, 32), make_pair(3, 32)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
        assert x.min() >= 0 and x.max() <= 1
    assert not np.array_equal(make_pair(4, 32)[0], a[0])


def test_write_corpus_names(tmp_path):
    assert write_corpus(tmp_path, [1, 22], size=16) == ["scene001.pgm", "scene022.pgm"]
