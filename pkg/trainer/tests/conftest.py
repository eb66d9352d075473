import pytest

from gridpg_cli import describe_json


@pytest.fixture(scope="session")
def small_descriptor() -> dict:
    """A narrow architecture straight from the optimizer's decoder."""
    coords = [1, 1, 1] * 24 + [1, 1] + [0, 1]
    return describe_json(coords)["architecture"]
