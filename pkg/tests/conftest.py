import numpy as np
import pytest

from phonalign import core
from phonalign.data import CorpusConfig, SplitCounts, generate_corpus
from phonalign.model import Checkpoint, ModelConfig
from phonalign.pipeline import TrainConfig

TINY_BASE_DIM = 4


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale trend checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def no_global_tracker(monkeypatch):
    """Tests run without the process-wide tracker unless they install one."""
    monkeypatch.setattr(core, "_global_tracker", None)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_corpus_config():
    return CorpusConfig(
        counts=SplitCounts(train=12, dev=3, test=6),
        label_distribution=(0.6, 0.2, 0.1, 0.1),
        base_dim=TINY_BASE_DIM,
        prototype_min_distance=0.0,
        speakers_per_split=2,
        seed=3,
    )


@pytest.fixture
def tiny_corpus(tiny_corpus_config):
    return generate_corpus(tiny_corpus_config)


@pytest.fixture
def tiny_model_config():
    return ModelConfig(layers=1, hidden_per_direction=3, projection=3, dropout=0.0, bidirectional=True,
                       input_dim=3 * TINY_BASE_DIM, vocab_size=39)


@pytest.fixture
def tiny_checkpoint(tiny_model_config):
    return Checkpoint.initialize(tiny_model_config, seed=5)


@pytest.fixture
def tiny_train_config(tiny_model_config):
    return TrainConfig(model=tiny_model_config, loss="ctc", epochs=2, batch_size=4, seed=11)
