import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ppdl.paillier import from_primes  # noqa: E402

_CRITERIA = {}
_NOTES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, title = mark.args
    prev = _CRITERIA.get(number, (True, title))
    _CRITERIA[number] = (prev[0] and rep.passed, title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, title = _CRITERIA[number]
        note = f"  [{'; '.join(_NOTES[number])}]" if number in _NOTES else ""
        terminalreporter.write_line(f"AC{number:<2} {'PASS' if ok else 'FAIL'}  {title}{note}")


@pytest.fixture
def measured(request):
    """Attach measured values to the criterion's summary line."""
    mark = request.node.get_closest_marker("criterion")

    def note(text):
        if mark is not None:
            _NOTES.setdefault(mark.args[0], []).append(text)

    return note


@pytest.fixture(scope="session")
def toy_keys():
    return from_primes(5, 7, 36)


@pytest.fixture(scope="session")
def key512():
    from ppdl.paillier import keygen
    from ppdl.rng import SplitMix64

    return keygen(512, SplitMix64(2024))
