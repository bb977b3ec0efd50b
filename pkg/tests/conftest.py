import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from fisvvc.rules import default_rulebase  # noqa: E402
from fisvvc.scenario import default_scenario_path, read_scenario, run_scenario  # noqa: E402

FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture(scope="session")
def rulebase():
    return default_rulebase()


@pytest.fixture(scope="session")
def reference_scenario():
    return read_scenario(default_scenario_path())


@pytest.fixture(scope="session")
def reference_runs(reference_scenario):
    """Closed-loop runs on the shipped reference day, computed once per session."""
    return {
        "fis": run_scenario(reference_scenario, "fis"),
        "deadband": run_scenario(reference_scenario, "deadband"),
        "opf_proxy": run_scenario(reference_scenario, "opf_proxy"),
        "fis_cvr": run_scenario(reference_scenario, "fis", ref_kv=20.475),
    }


@pytest.fixture
def fixtures_dir():
    return FIXTURES


_CRITERIA: dict[str, list[str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[1].split("[")[0]
        _CRITERIA.setdefault(name, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        outcomes = _CRITERIA[name]
        status = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        number, _, label = name.removeprefix("test_criterion_").partition("_")
        terminalreporter.write_line(f"criterion {number} ({label.replace('_', ' ')}): {status}")
