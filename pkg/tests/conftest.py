import pytest

CRITERIA = {
    1: "worked security example (effective blinding, patched and unpatched rates)",
    2: "POVM spectra closed form and completeness",
    3: "state-independent detection probability",
    4: "Monte Carlo QBER floor",
    5: "after-gate photons exposed as noise",
    6: "two-photon merged QBER bound",
    7: "blindness monitor",
    8: "byte-identical outputs across runs and thread counts",
}

_outcomes: dict[int, bool] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if report.when == "call" or report.failed:
        _outcomes[n] = _outcomes.get(n, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, label in CRITERIA.items():
        if n not in _outcomes:
            status = "NOT RUN"
        else:
            status = "PASS" if _outcomes[n] else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status}  {label}")
