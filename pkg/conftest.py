import pytest

from instances import substream

TEST_SEED = 20240611


@pytest.fixture
def rng():
    """Seeded Philox generator, fresh for every test."""
    return substream(TEST_SEED, 0)
