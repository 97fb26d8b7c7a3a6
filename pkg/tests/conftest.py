import os

import numpy as np
import pytest

# one worker keeps the suite single-process; drivers are deterministic either way
os.environ.setdefault("WASSCERT_THREADS", "1")


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
