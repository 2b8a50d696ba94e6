import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def small_scenario():
    """Desk-scale scenario: 1 subject, 4 objects, fast enough for unit tests."""
    from graspintent.synth import default_scenario

    spec = default_scenario(seed=42)
    spec.n_subjects = 1
    spec.n_objects = 4
    return spec.validate()


@pytest.fixture(scope="session")
def mvc_profile(small_scenario):
    from graspintent import preprocess, synth

    return preprocess.compute_mvc(synth.gen_mvc_trial(small_scenario, 0))


@pytest.fixture(scope="session")
def one_trial(small_scenario):
    from graspintent.synth import gen_trial

    return gen_trial(small_scenario, 0, 0, 1)


def rng(seed=0):
    return np.random.default_rng(seed)
