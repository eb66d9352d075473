import pytest

from gridpg import default_paper_space


@pytest.fixture(scope="session")
def acdc():
    return default_paper_space()
