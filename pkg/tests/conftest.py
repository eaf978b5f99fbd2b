from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from vipose.skeleton import default_topology


@pytest.fixture(scope="session")
def topo():
    return default_topology()
