import json
from pathlib import Path

import pytest

from atomic.spec_io import data_dir
from helpers import config_path


@pytest.fixture
def negative_config(tmp_path) -> Path:
    """Copy of the serial adder config with one flipped expected bit."""
    cfg = json.loads(config_path("serial_full_adder").read_text())
    cfg["output_states"]["sum"][5] ^= 1
    cfg["algorithm"] = str(data_dir() / "algorithms" / cfg["algorithm"])
    path = tmp_path / "broken_adder.json"
    path.write_text(json.dumps(cfg))
    return path



def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
