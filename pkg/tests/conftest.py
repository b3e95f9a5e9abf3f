import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for helpers.py

from fdsic.bench import SplitSpec, split_dataset
from fdsic.txchain import TxConfig, synth_dataset


@pytest.fixture(scope="session")
def small_dataset():
    """4096-sample default-impairment dataset for fast training tests."""
    return synth_dataset(TxConfig(seed=11), 4096)


@pytest.fixture(scope="session")
def small_split(small_dataset):
    return split_dataset(small_dataset, SplitSpec())


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
