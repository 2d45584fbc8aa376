import hashlib
import json

import numpy as np
import pytest

from ucfnet.data import (SynthConfig, half_max_mask, load_dataset, pad_to_multiple, read_gray, split,
                         synth_generate, synth_sample, write_gray)
from ucfnet.metrics import connected_components


def write_pair(root, sid, img, mask):
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    write_gray(root / "images" / f"{sid}.png", img)
    write_gray(root / "masks" / f"{sid}.png", mask)


def test_empty_directory_warns(tmp_path):
    with pytest.warns(UserWarning, match="no images"):
        assert load_dataset(tmp_path) == []


def test_mask_threshold_boundary(tmp_path):
    mask = np.array([[127, 128], [0, 255]], dtype=np.uint8)
    write_pair(tmp_path, "a", np.zeros((2, 2), np.uint8), mask)
    (rec,) = load_dataset(tmp_path, multiple=2)
    np.testing.assert_array_equal(rec.mask[0, 0], [[0, 1], [0, 1]])


def test_missing_mask_names_stem(tmp_path):
    write_pair(tmp_path, "a", np.zeros((4, 4), np.uint8), np.zeros((4, 4), np.uint8))
    write_gray(tmp_path / "images" / "orphan.png", np.zeros((4, 4), np.uint8))
    with pytest.raises(FileNotFoundError, match="orphan"):
        load_dataset(tmp_path)


def test_unreadable_image(tmp_path):
    write_pair(tmp_path, "a", np.zeros((4, 4), np.uint8), np.zeros((4, 4), np.uint8))
    (tmp_path / "images" / "a.png").write_bytes(b"not a png")
    with pytest.raises(OSError, match="a.png"):
        load_dataset(tmp_path)


def test_padding_and_crop(tmp_path):
    img = np.arange(20 * 18, dtype=np.uint8).reshape(20, 18)
    write_pair(tmp_path, "a", img, np.zeros_like(img))
    (rec,) = load_dataset(tmp_path, multiple=16)
    assert rec.image.shape == (1, 1, 32, 32) and rec.pad == (12, 14)
    assert rec.original_size == (20, 18)
    np.testing.assert_allclose(rec.crop(rec.image[0, 0]), img / 255.0)


def test_already_divisible_has_zero_pad():
    arr, pad = pad_to_multiple(np.zeros((1, 1, 480, 480)), 16)
    assert arr.shape == (1, 1, 480, 480) and pad == (0, 0)


def test_mask_roundtrip_lossless(tmp_path):
    m = (np.random.default_rng(0).random((9, 7)) < 0.3).astype(np.uint8) * 255
    write_gray(tmp_path / "m.png", m)
    np.testing.assert_array_equal(read_gray(tmp_path / "m.png"), m)


@pytest.mark.parametrize("n,n_train", [(10, 8), (427, 342), (5, 4)])
def test_split_sizes(n, n_train):
    tr, te = split(list(range(n)), 0.8, seed=1)
    assert len(tr) == n_train
    assert set(tr).isdisjoint(te) and sorted(tr + te) == list(range(n))


def test_split_deterministic():
    assert split(list(range(50)), seed=3) == split(list(range(50)), seed=3)
    assert split(list(range(50)), seed=3) != split(list(range(50)), seed=4)


def test_half_max_disc():
    m = half_max_mask((9, 9), (4, 4), 1.0)
    assert m.sum() == 5
    assert m[4, 4] and m[3, 4] and m[5, 4] and m[4, 3] and m[4, 5]


def test_synth_components_map_to_targets():
    cfg = SynthConfig()
    rng = np.random.default_rng(11)
    for _ in range(30):
        s = synth_sample(rng, cfg)
        comps = connected_components(s.mask)
        assert s.mask.any()
        assert len(comps) == len(s.targets)
        for c in comps:
            owners = [t for t in s.targets
                      if np.hypot(c.centroid[0] - t["center"][0], c.centroid[1] - t["center"][1]) < 1e-9]
            assert len(owners) == 1


def test_synth_area_fraction_in_band():
    cfg = SynthConfig()
    fracs = []
    for seed in range(100):
        s = synth_sample(np.random.default_rng(seed), cfg)
        fracs.append(s.mask.mean() / len(s.targets))
    assert 0.001 <= np.mean(fracs) <= 0.006


def test_synth_generate_deterministic(tmp_path):
    cfg = SynthConfig(count=4, seed=9)
    m1 = synth_generate(cfg, tmp_path / "a")
    m2 = synth_generate(cfg, tmp_path / "b")
    assert m1 == m2
    assert (tmp_path / "a" / "checksums.txt").read_bytes() == (tmp_path / "b" / "checksums.txt").read_bytes()
    line = (tmp_path / "a" / "checksums.txt").read_text().splitlines()[0]
    digest, rel = line.split()
    assert hashlib.sha256((tmp_path / "a" / rel).read_bytes()).hexdigest() == digest
    assert len(load_dataset(tmp_path / "a")) == 4
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["config"]["seed"] == 9


def test_synth_config_validation():
    with pytest.raises(ValueError, match="size"):
        SynthConfig(size=(60, 64)).validate()
    with pytest.raises(ValueError, match="target_sigma"):
        SynthConfig(target_sigma=(2.0, 1.0)).validate()
    with pytest.raises(ValueError, match="cannot place"):
        synth_sample(np.random.default_rng(0), SynthConfig(size=(16, 16), targets_per_image=(8, 9),
                                                           min_separation=8))
