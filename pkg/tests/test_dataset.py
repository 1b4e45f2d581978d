import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st
from PIL import Image

from tircolor.dataset import (
    DatasetManifest,
    ManifestEntry,
    PairingRule,
    build_manifest,
    denormalize,
    infer_split,
    iterate_batches,
    load_pair,
    normalize,
)
from tircolor.errors import ChannelMismatch, DatasetError, DecodeError, EmptyDataset, PairingAmbiguity, ShapeError
from synth import make_pair, write_kaist_tree


def _save(path, arr):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)


def test_manifest_counts_orphans(tmp_path):
    write_kaist_tree(tmp_path, n_train=4)
    _save(tmp_path / "set00" / "V000" / "lwir" / "I09999.png", np.zeros((8, 8), np.uint8))
    m = build_manifest(tmp_path)
    assert len(m) == 4
    assert len(m.warnings) == 1 and "I09999" in m.warnings[0]


def test_empty_directory_raises(tmp_path):
    with pytest.raises(EmptyDataset):
        build_manifest(tmp_path)


def test_missing_root_raises(tmp_path):
    with pytest.raises(DatasetError, match="does not exist"):
        build_manifest(tmp_path / "nope")


def test_ambiguous_partner(tmp_path):
    write_kaist_tree(tmp_path, n_train=1)
    _save(tmp_path / "set00" / "V000" / "visible" / "I00000.jpg", np.zeros((8, 8, 3), np.uint8))
    with pytest.raises(PairingAmbiguity):
        build_manifest(tmp_path)


def test_kaist_split_and_time_of_day():
    assert infer_split("set00/V000/I00001") == ("train", "day")
    assert infer_split("set04/V001/I00001") == ("train", "night")
    assert infer_split("set07/V000/I00001") == ("test", "day")
    assert infer_split("set10/V000/I00001") == ("test", "night")
    assert infer_split("test/night/0001") == ("test", "night")
    assert infer_split("0001") == ("train", "unknown")


def test_time_of_day_filter(tmp_path):
    write_kaist_tree(tmp_path, n_train=2, n_test=1)
    thermal, rgb = make_pair(9)
    _save(tmp_path / "set03" / "V000" / "lwir" / "I00100.png", thermal)
    _save(tmp_path / "set03" / "V000" / "visible" / "I00100.png", rgb)
    assert len(build_manifest(tmp_path)) == 4
    day = build_manifest(tmp_path, time_of_day="day")
    assert len(day) == 3
    assert [e.split for e in day.split("test")] == ["test"]


def test_custom_flat_pairing_rule(tmp_path):
    for i in range(3):
        thermal, rgb = make_pair(i, 64, 64)
        _save(tmp_path / "ir" / f"{i}.png", thermal)
        _save(tmp_path / "rgb" / f"{i}.png", rgb)
    m = build_manifest(tmp_path, PairingRule("ir/*.png", "rgb/*.png"))
    assert [e.id for e in m.entries] == ["0", "1", "2"]


def test_manifest_round_trip(tmp_path, kaist_root):
    m = build_manifest(kaist_root)
    path = tmp_path / "manifest.tsv"
    m.save(path)
    body = [line for line in path.read_text().splitlines() if not line.startswith("#")]
    assert all(len(line.split("\t")) == 5 for line in body)
    again = DatasetManifest.load(path)
    assert again.entries == sorted(m.entries, key=lambda e: e.id)


def test_load_pair_resizes_and_normalizes(kaist_root):
    m = build_manifest(kaist_root)
    t, r = load_pair(m.entries[0], (160, 128))
    assert t.shape == (1, 128, 160) and r.shape == (3, 128, 160)


def test_load_pair_640x512(tmp_path):
    thermal, rgb = make_pair(0, 640, 512)
    _save(tmp_path / "lwir" / "a.png", thermal)
    _save(tmp_path / "visible" / "a.png", rgb)
    m = build_manifest(tmp_path)
    t, r = load_pair(m.entries[0], (320, 256))
    assert t.shape == (1, 256, 320) and r.shape == (3, 256, 320)


@pytest.mark.parametrize("value,expected", [(0, -1.0), (255, 1.0)])
def test_normalization_endpoints(tmp_path, value, expected):
    _save(tmp_path / "lwir" / "a.png", np.full((64, 64), value, np.uint8))
    _save(tmp_path / "visible" / "a.png", np.full((64, 64, 3), value, np.uint8))
    t, r = load_pair(build_manifest(tmp_path).entries[0], (64, 64))
    assert torch.all(t == expected) and torch.all(r == expected)


def test_three_channel_grey_thermal_is_accepted(tmp_path):
    grey = make_pair(0, 64, 64)[0]
    _save(tmp_path / "lwir" / "a.png", np.repeat(grey[..., None], 3, axis=2))
    _save(tmp_path / "visible" / "a.png", make_pair(0, 64, 64)[1])
    t, _ = load_pair(build_manifest(tmp_path).entries[0], (64, 64))
    assert torch.equal(t, normalize(grey))


def test_rgba_is_rejected(tmp_path):
    _save(tmp_path / "lwir" / "a.png", np.zeros((64, 64), np.uint8))
    _save(tmp_path / "visible" / "a.png", np.zeros((64, 64, 4), np.uint8))
    with pytest.raises(ChannelMismatch):
        load_pair(build_manifest(tmp_path).entries[0], (64, 64))


def test_corrupt_file_is_decode_error(tmp_path):
    (tmp_path / "lwir").mkdir()
    (tmp_path / "lwir" / "a.png").write_bytes(b"not an image")
    _save(tmp_path / "visible" / "a.png", np.zeros((64, 64, 3), np.uint8))
    with pytest.raises(DecodeError):
        load_pair(build_manifest(tmp_path).entries[0], (64, 64))


def test_target_size_must_divide_by_32(kaist_root):
    with pytest.raises(ShapeError):
        load_pair(build_manifest(kaist_root).entries[0], (300, 256))


def test_normalize_round_trip_all_values():
    v = np.arange(256, dtype=np.uint8).reshape(16, 16)
    assert np.array_equal(denormalize(normalize(v)), v)


@given(st.lists(st.integers(0, 255), min_size=1, max_size=64))
def test_normalize_range_and_round_trip(values):
    v = np.array(values, dtype=np.uint8).reshape(1, -1)
    t = normalize(v)
    assert t.min() >= -1.0 and t.max() <= 1.0
    assert np.array_equal(denormalize(t), v)


def test_denormalize_clamps():
    t = torch.tensor([[[-3.0, 2.0]]])
    assert denormalize(t).tolist() == [[0, 255]]


def _entries(n):
    return [ManifestEntry(f"id{i}", None, None) for i in range(n)]


def test_batch_sizes(monkeypatch):
    m = DatasetManifest(root=None, entries=_entries(5), target_size=(32, 32))
    monkeypatch.setattr("tircolor.dataset.load_pair",
                        lambda e, size: (torch.zeros(1, 32, 32), torch.zeros(3, 32, 32)))
    sizes = [len(b.ids) for b in iterate_batches(m, "train", batch_size=2, shuffle=False)]
    assert sizes == [2, 2, 1]
    assert len(list(iterate_batches(m, "train", batch_size=1))) == 5


def test_shuffle_is_deterministic_and_covers_epoch(monkeypatch):
    m = DatasetManifest(root=None, entries=_entries(9), target_size=(32, 32))
    monkeypatch.setattr("tircolor.dataset.load_pair",
                        lambda e, size: (torch.zeros(1, 32, 32), torch.zeros(3, 32, 32)))

    def order(seed, epoch):
        return [i for b in iterate_batches(m, "train", 2, True, seed, epoch) for i in b.ids]

    assert order(3, 0) == order(3, 0)
    assert order(3, 0) != order(3, 1)
    assert sorted(order(3, 1)) == sorted(e.id for e in m.entries)


def test_batches_stay_in_range(kaist_root):
    m = build_manifest(kaist_root, target_size=(160, 128))
    for b in iterate_batches(m, "train", batch_size=3, seed=1):
        assert b.thermal.min() >= -1 and b.thermal.max() <= 1
        assert b.rgb.min() >= -1 and b.rgb.max() <= 1
        assert b.thermal.shape[1:] == (1, 128, 160)
