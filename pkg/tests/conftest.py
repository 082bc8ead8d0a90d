import numpy as np
import pytest
from absl import flags

from util import CACHE_ENV_VAR, shard_generators

FLAGS = flags.FLAGS


@pytest.fixture(scope="session", autouse=True)
def parsed_flags():
    if not FLAGS.is_parsed():
        FLAGS(["pytest"])
    yield FLAGS


@pytest.fixture(autouse=True)
def coefficient_cache(tmp_path_factory, monkeypatch):
    monkeypatch.setenv(CACHE_ENV_VAR, str(tmp_path_factory.getbasetemp() / "cache"))


@pytest.fixture
def rng():
    return shard_generators(1234, 1)[0]


def random_modes(rng, cutoff, radius=0.1):
    """{j: z_j} with modulus below radius on every mode 1 <= |j| <= cutoff"""
    out = {}
    for j in range(-cutoff, cutoff + 1):
        if j:
            out[j] = radius * rng.uniform() * np.exp(2j * np.pi * rng.uniform())
    return out
