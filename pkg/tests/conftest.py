import json
from pathlib import Path

import pytest

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def multiplier_oracle():
    raw = json.loads((GOLDEN / "multiplier_oracle.json").read_text())
    return {float(b): {int(k): float(v) for k, v in tab.items()} for b, tab in raw.items()}
