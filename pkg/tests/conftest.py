import numpy as np
import pytest

from rfcnet.mnist import GlyphBank
from rfcnet.scene import SceneConfig


@pytest.fixture(scope="session")
def glyph_bank():
    return GlyphBank.builtin("train")


@pytest.fixture()
def default_scene_config():
    return SceneConfig()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A very small on-disk dataset shared by store/training/CLI tests."""
    from rfcnet.datastore import build_dataset

    out = tmp_path_factory.mktemp("dataset")
    config = SceneConfig()
    manifest = build_dataset(
        config, seed=77, out_dir=out,
        splits={"train": 6, "val": 4, "test": 3, "clean_test": 3},
        shard_size=4)
    return manifest
