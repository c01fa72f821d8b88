import os

import pytest

from vixexp.curve_kernel import ForwardVarianceCurve, VixWindow

# keep hypothesis runs short and reproducible
try:
    from hypothesis import settings

    settings.register_profile("ci", max_examples=40, deadline=None, derandomize=True)
    settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))
except ImportError:  # pragma: no cover
    pass

MONTH = 1.0 / 12.0


@pytest.fixture
def month_window():
    return VixWindow(MONTH, MONTH)


def flat(xi0, window):
    return ForwardVarianceCurve.flat(xi0, window.end + 1.0)


def pytest_terminal_summary(terminalreporter):
    # one line per acceptance criterion, recorded by test_acceptance.report
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
