"""Glyph sampling: determinism, class coverage, normalization."""

import numpy as np
import pytest

from rfcnet.errors import SplitNotLoaded
from rfcnet.mnist import GlyphBank, resolve_glyph_bank


def test_same_seed_same_glyph(glyph_bank):
    a = glyph_bank.sample(np.random.default_rng(5))
    b = glyph_bank.sample(np.random.default_rng(5))
    assert a.digit == b.digit
    assert np.array_equal(a.image, b.image)


def test_all_digit_classes_appear_in_10000_draws(glyph_bank):
    rng = np.random.default_rng(0)
    counts = np.zeros(10, dtype=int)
    for _ in range(10000):
        counts[glyph_bank.sample(rng).digit] += 1
    assert (counts > 0).all()
    # uniform sampling: each class near 10%
    assert counts.min() > 10000 * 0.05


def test_glyph_intensity_range(glyph_bank):
    rng = np.random.default_rng(1)
    for _ in range(200):
        glyph = glyph_bank.sample(rng)
        assert glyph.image.min() >= 0.0
        assert glyph.image.max() <= 1.0


def test_builtin_banks_are_deterministic_and_split_disjoint():
    a = GlyphBank.builtin("train")
    b = GlyphBank.builtin("train")
    assert np.array_equal(a.images, b.images)
    test = GlyphBank.builtin("test")
    assert not np.array_equal(a.images[:len(test.images)], test.images)


def test_builtin_bank_covers_all_digits():
    bank = GlyphBank.builtin("test")
    assert sorted(set(bank.labels.tolist())) == list(range(10))


def test_resolve_unknown_source():
    with pytest.raises(SplitNotLoaded):
        resolve_glyph_bank("nonsense", "train")


def test_resolve_mnist_without_dir(monkeypatch):
    monkeypatch.delenv("RFCNET_MNIST_DIR", raising=False)
    with pytest.raises(SplitNotLoaded):
        resolve_glyph_bank("mnist", "train")


def test_resolve_mnist_via_env(monkeypatch, tmp_path):
    from rfcnet.mnist import write_idx
    images = np.zeros((3, 28, 28), dtype=np.uint8)
    labels = np.array([1, 2, 3], dtype=np.uint8)
    (tmp_path / "train-images-idx3-ubyte").write_bytes(write_idx(images))
    (tmp_path / "train-labels-idx1-ubyte").write_bytes(write_idx(labels))
    monkeypatch.setenv("RFCNET_MNIST_DIR", str(tmp_path))
    bank = resolve_glyph_bank("mnist", "train")
    assert len(bank) == 3
