import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from flare import flsim

settings.register_profile(
    "ci",
    max_examples=50,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")

DEFAULT_CORPUS_SEED = 1234


@pytest.fixture(scope="session")
def default_corpus():
    """The 72-trace benchmark corpus used by the acceptance suite."""
    specs = flsim.default_corpus_specs()
    return flsim.make_corpus(specs, 3, seed=DEFAULT_CORPUS_SEED).traces


@pytest.fixture(scope="session")
def small_corpus():
    """A reduced corpus for unit tests that just need a trainable mix."""
    profiles = [
        flsim.DEFAULT_MODEL_PROFILES[0],  # cnn
        flsim.DEFAULT_MODEL_PROFILES[1],  # cnn
        flsim.DEFAULT_MODEL_PROFILES[3],  # rnn
        flsim.DEFAULT_MODEL_PROFILES[4],  # rnn
        flsim.DEFAULT_MODEL_PROFILES[6],  # other
    ]
    specs = [
        flsim.SessionSpec(
            model=m,
            client=c,
            link=flsim.DEFAULT_LINK,
            duration_s=600.0,
            seed=0,
        )
        for m in profiles
        for c in flsim.DEFAULT_CLIENT_PROFILES
    ]
    return flsim.make_corpus(specs, 2, seed=7).traces


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
