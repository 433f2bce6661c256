import pytest

from ligspace.tensor import reset_tape


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end training runs (deselect with '-m \"not slow\"')")


@pytest.fixture(autouse=True)
def fresh_tape():
    """Each test starts and ends with an empty tape."""
    reset_tape()
    yield
    reset_tape()
