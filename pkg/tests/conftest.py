import pytest

from nmfpool.dataset import write_tu_dataset
from nmfpool.toy import synthetic_bundle

_ACCEPTANCE: list[tuple[str, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    label = f"criterion {number} ({title})"
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = ""
        if report.failed:
            detail = str(call.excinfo.value).strip().splitlines()[0][:160] if call.excinfo else ""
        _ACCEPTANCE.append((label, report.outcome.upper(), detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome, detail in _ACCEPTANCE:
        status = "PASS" if outcome == "PASSED" else "FAIL" if outcome == "FAILED" else outcome
        terminalreporter.write_line(f"{status:5} {label}" + (f" -- {detail}" if detail else ""))


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """A small synthetic benchmark written in TU format."""
    root = tmp_path_factory.mktemp("tu")
    bundle = synthetic_bundle(36, seed=3)
    write_tu_dataset(bundle.graphs, root, "SYNTH")
    return root

