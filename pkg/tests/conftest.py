import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from synth import write_kaist_tree  # noqa: E402

torch.use_deterministic_algorithms(True)


@pytest.fixture
def kaist_root(tmp_path):
    """Four training pairs and two test pairs at 320x256."""
    return write_kaist_tree(tmp_path / "data", n_train=4, n_test=2)


# -- acceptance summary ------------------------------------------------------------

ACCEPTANCE_RESULTS = {}


def pytest_runtest_logreport(report):
    marker = "test_acceptance.py::"
    if marker in report.nodeid and report.when == "call":
        ACCEPTANCE_RESULTS[report.nodeid.split(marker, 1)[1]] = report.outcome
    elif marker in report.nodeid and report.when == "setup" and report.skipped:
        ACCEPTANCE_RESULTS[report.nodeid.split(marker, 1)[1]] = "skipped"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(ACCEPTANCE_RESULTS.items()):
        label = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"{label}  {name}")
