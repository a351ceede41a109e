import random

import pytest

from taulab.generators import CURATED, fair_walk, random_enlarged

SUITE_SEED = 20260810
SUITE_SIZE = 200


@pytest.fixture(scope="session")
def walk2():
    return fair_walk(2)


@pytest.fixture(scope="session")
def curated():
    return {name: fn() for name, fn in CURATED.items()}


@pytest.fixture(scope="session")
def random_suite():
    """The randomized model suite shared by the acceptance criteria:
    200 enlarged models on trees of at most 5 steps and 3 branches per node,
    with random exact kernels."""
    rng = random.Random(SUITE_SEED)
    return [random_enlarged(rng, max_steps=5, max_branch=3) for _ in range(SUITE_SIZE)]
