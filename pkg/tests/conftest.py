import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# criterion number -> (title, passed, details)
_CRITERIA: dict[int, tuple[str, bool, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    n, title = marker.args
    _, ok, details = _CRITERIA.get(n, (title, True, []))
    details = details + [v for k, v in item.user_properties if k == "detail"]
    _CRITERIA[n] = (title, ok and rep.passed, details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, details = _CRITERIA[n]
        extra = f" ({'; '.join(details)})" if details else ""
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title}{extra}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def detail(record_property):
    """Attach a short measurement to the acceptance summary line."""
    def add(text: str):
        record_property("detail", text)
        print(text)
    return add
