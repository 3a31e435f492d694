import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if not mod or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    order = ["1", "2", "3", "4", "5", "6", "7", "8p", "8a", "8b", "9", "10"]
    for key in order:
        line = mod.RESULTS.get(key if not key.isdigit() else int(key))
        if line:
            terminalreporter.write_line(line)
