import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from flowsift.synthetic import generate_synthetic  # noqa: E402


@pytest.fixture(scope="session")
def synth_small():
    return generate_synthetic(200, seed=3)


@pytest.fixture(scope="session")
def synth_1000():
    return generate_synthetic(1000, seed=7)
