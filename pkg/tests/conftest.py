import contextlib

import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def criterion(request):
    """Context manager recording PASS/FAIL for a numbered acceptance criterion."""
    results = request.config.stash[_RESULTS]

    @contextlib.contextmanager
    def record(number: int, title: str):
        notes = []
        try:
            yield notes
        except BaseException as exc:
            results[number] = f"CRITERION {number} FAIL  {title}: {type(exc).__name__} {str(exc).splitlines()[0] if str(exc) else ''}"
            raise
        results[number] = f"CRITERION {number} PASS  {title}" + (f" ({'; '.join(notes)})" if notes else "")

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
