import numpy as np
import pytest

from tokencom.vocab import Vocabulary


@pytest.fixture(scope="session")
def vocab4():
    return Vocabulary.synthetic(4)


@pytest.fixture(scope="session")
def vocab8():
    return Vocabulary.synthetic(8)


@pytest.fixture(scope="session")
def vocab256():
    return Vocabulary.synthetic(256)


@pytest.fixture(scope="session")
def vocab_bert_sized():
    return Vocabulary.synthetic(30522)


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
