import shutil

import pytest

from crl.backends import BackendRegistry
from helpers import build_mock_farm

_criteria: dict[str, list[str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _criteria.setdefault(marker.args[0], []).append(status)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        statuses = _criteria[name]
        if "FAIL" in statuses:
            verdict = "FAIL"
        elif all(s == "SKIP" for s in statuses):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        detail = f"{statuses.count('PASS')}/{len(statuses)} checks passed"
        if "SKIP" in statuses:
            detail += f", {statuses.count('SKIP')} skipped"
        terminalreporter.write_line(f"{verdict}  {name}  ({detail})")


@pytest.fixture
def farm(tmp_path):
    return build_mock_farm(tmp_path / "farm")


@pytest.fixture
def mock_registry(farm):
    return BackendRegistry.mock(farm)


@pytest.fixture
def users_path(tmp_path, monkeypatch):
    path = tmp_path / "home" / ".crl" / "users"
    monkeypatch.setenv("CRL_USERS", str(path))
    return path


@pytest.fixture(autouse=True)
def _isolated_users(tmp_path, monkeypatch):
    # never touch the real $HOME/.crl/users
    monkeypatch.setenv("CRL_USERS", str(tmp_path / "default-users"))


needs_git = pytest.mark.skipif(shutil.which("git") is None, reason="git not installed")
