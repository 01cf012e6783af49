import numpy as np
import pytest

from stllc.pipeline import PipelineConfig, train
from stllc.sequence_io import synth_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    synth_dataset(out, 4, seed=7)
    return out


@pytest.fixture(scope="session")
def synth_entries(synth_dir):
    from stllc.sequence_io import read_manifest

    return read_manifest(synth_dir / "manifest.csv")


@pytest.fixture(scope="session")
def small_config():
    return PipelineConfig(n_s=24, seed=3)


@pytest.fixture(scope="session")
def small_model(synth_entries, small_config):
    return train(synth_entries, small_config)
