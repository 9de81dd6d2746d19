import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from teleprobe.calibration import load_calibration


@pytest.fixture(scope="session")
def calib():
    return load_calibration()
