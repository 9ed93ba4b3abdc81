from pathlib import Path

import numpy as np
import pytest

# acceptance results recorded by tests/test_acceptance.py, echoed at the end of the run
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, text in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {text}")


def disk(shape, cx, cy, r):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    return np.hypot(xx - cx, yy - cy) <= r


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


GOLDEN = Path(__file__).parent / "golden"


def golden_attribution():
    """Single-feature glioma attribution behind the golden user prompt."""
    from tumormorph.attribution import Attribution

    return Attribution(
        np.zeros(3), np.array([[0.0, 0.8123, 0.0]]), 1, 0.94, ["meningioma", "glioma", "pituitary"], ["rei"],
        np.array([0.47]), "g1",
    )


def golden_bundle():
    """Three-feature glioma bundle behind the golden offline explanation."""
    from tumormorph.explain import SYSTEM_PROMPT, PromptBundle, Triplet, format_user_text

    trips = (Triplet("mean_local_entropy", 2.1, 0.9), Triplet("rei", 0.47, 0.81), Triplet("mls", 0.3, -0.2))
    return PromptBundle(SYSTEM_PROMPT, format_user_text("glioma", 0.94, trips), "glioma", 0.94, trips)


GOLDEN_REFERENCES = {"mean_local_entropy": 1.8, "rei": 0.1}
