import json
from pathlib import Path

import numpy as np
import pytest

from legalner.corpus import build_vocab
from legalner.toydata import toy_sentences, toy_tagset

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_corpus():
    sentences = toy_sentences()
    tagset = toy_tagset()
    vocab = build_vocab(sentences)
    return sentences, tagset, vocab


def random_crf_instance(rng, T=None, K=None, scale=1.0, max_T=5, max_K=4):
    """Random emissions plus a transition matrix with finite trainable entries."""
    from legalner.crf import TransitionMatrix

    T = T if T is not None else int(rng.integers(1, max_T + 1))
    K = K if K is not None else int(rng.integers(2, max_K + 1))
    emissions = rng.normal(scale=scale, size=(T, K))
    trans = TransitionMatrix.zeros(K)
    trans.scores[:K, :K] = rng.normal(scale=scale, size=(K, K))
    trans.scores[K, :K] = rng.normal(scale=scale, size=K)       # START row
    trans.scores[:K, K + 1] = rng.normal(scale=scale, size=K)   # STOP column
    return emissions, trans


def write_config(path: Path, **overrides) -> Path:
    """Write a complete hyperparameter config file with optional overrides."""
    from legalner.training import Hyperparameters

    hp = Hyperparameters()
    data = hp.to_dict()
    data.update(overrides)
    path.write_text(json.dumps(data, indent=2), encoding="utf-8")
    return path
