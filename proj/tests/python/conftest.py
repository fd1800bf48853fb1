import os
import shutil
from pathlib import Path

import pytest


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("CFTK_CLI") or shutil.which("cftk")
    if not path:
        pytest.skip("cftk executable not found (set CFTK_CLI)")
    return Path(path)
