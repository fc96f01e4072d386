import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stubserver import StubServer  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def stub_server():
    server = StubServer().start()
    yield server
    server.stop()


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
