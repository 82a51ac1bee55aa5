import time

import pytest

from crl.auth import UsersFile
from crl.backends import BackendRegistry
from crl.engine import (
    Engine,
    Notice,
    PlanListed,
    RunConfig,
    RunFinished,
    TaskStarted,
    acquire_source,
    is_url,
)
from crl.errors import SourceUnavailable
from helpers import EINSTEIN, GIT_COMPONENTS, SVN_COMPONENTS, raw_tree_digest

LIST = "mock://lists/einstein.th"


def make_engine(root, registry, *sources, events=None, **config):
    config.setdefault("anonymous", True)
    cfg = RunConfig(list_sources=list(sources or [LIST]), root_override=str(root), **config)
    sink = events.append if events is not None else None
    return Engine(cfg, registry=registry, sink=sink)


class TestAcquire:
    def test_local_file(self):
        assert acquire_source(str(EINSTEIN)) == EINSTEIN.read_text()

    def test_mock_url(self, farm, mock_registry):
        engine = make_engine(farm, mock_registry)
        assert acquire_source(LIST, engine.fetchers).startswith("!CRL_VERSION = 1.0")

    def test_file_url_downloads(self):
        assert acquire_source(EINSTEIN.as_uri()) == EINSTEIN.read_text()

    def test_unreachable(self, tmp_path):
        with pytest.raises(SourceUnavailable):
            acquire_source((tmp_path / "missing.th").as_uri())
        with pytest.raises(SourceUnavailable):
            acquire_source(str(tmp_path / "missing.th"))

    def test_is_url(self):
        assert is_url("https://svn.einsteintoolkit.org/manifest/einsteintoolkit.th")
        assert not is_url("lists/einstein.th")
        assert not is_url("C:/lists/x.th")


class TestPlan:
    def test_fresh_tree_all_checkouts(self, tmp_path, mock_registry):
        plan = make_engine(tmp_path / "root", mock_registry).plan()
        assert len(plan.tasks) == 19 and plan.checkouts == 19

    def test_second_run_all_updates(self, tmp_path, mock_registry):
        make_engine(tmp_path / "root", mock_registry).run()
        plan = make_engine(tmp_path / "root", mock_registry, auto_update=True).plan()
        assert plan.updates == 19

    def test_updates_need_confirmation(self, tmp_path, mock_registry):
        make_engine(tmp_path / "root", mock_registry).run()
        events = []
        engine = make_engine(tmp_path / "root", mock_registry, events=events)
        asked = []
        engine.confirm = lambda q: asked.append(q) or False
        plan = engine.plan()
        assert len(asked) == 1 and plan.tasks == [] and plan.skipped_updates == 19
        assert any(isinstance(e, Notice) for e in events)

    def test_confirmed_updates_run(self, tmp_path, mock_registry):
        make_engine(tmp_path / "root", mock_registry).run()
        engine = make_engine(tmp_path / "root", mock_registry)
        engine.confirm = lambda q: True
        assert engine.plan().updates == 19

    def test_foreign_destination_fails_only_that_task(self, tmp_path, mock_registry):
        root = tmp_path / "root"
        foreign = root / "Cactus/arrangements/CactusBase/Time"
        foreign.mkdir(parents=True)
        (foreign / "notes.txt").write_text("mine")
        engine = make_engine(root, mock_registry)
        plan = engine.plan()
        assert plan.foreign == {foreign}
        report = engine.execute(plan)
        assert [f.component_path for f in report.failures] == ["CactusBase/Time"]
        assert (foreign / "notes.txt").read_text() == "mine"
        assert report.succeeded == 18

    def test_debug_only_touches_nothing(self, tmp_path, mock_registry):
        events = []
        root = tmp_path / "root"
        engine = make_engine(root, mock_registry, events=events, debug_only=True)
        assert engine.run() == 0
        assert not root.exists()
        assert engine.traces == []
        (listed,) = [e for e in events if isinstance(e, PlanListed)]
        assert len(listed.tasks) == 19

    def test_multiple_lists_are_concatenated(self, tmp_path, farm, mock_registry):
        extra = tmp_path / "extra.th"
        extra.write_text("!CRL_VERSION = 1.0\n!TARGET = Cactus/arrangements\n!TYPE = svn\n"
                         "!URL = mock://svn/arrangements/$1/$2/trunk\n"
                         "!CHECKOUT =\nCactusBase/Time\n")
        extra2 = tmp_path / "extra2.th"
        extra2.write_text(extra.read_text().replace("CactusBase/Time", "CactusBase/Boundary"))
        plan = make_engine(tmp_path / "r", mock_registry, LIST, str(extra), str(extra2)).plan()
        assert len(plan.tasks) == 19


class TestExecute:
    def test_all_healthy(self, tmp_path, mock_registry):
        events = []
        engine = make_engine(tmp_path / "root", mock_registry, events=events)
        report = engine.execute(engine.plan())
        assert (report.attempted, report.succeeded, report.failures) == (19, 19, [])
        assert report.elapsed_seconds > 0
        assert isinstance(events[-1], RunFinished)
        started = [e.component_path for e in events if isinstance(e, TaskStarted)]
        assert started == SVN_COMPONENTS + GIT_COMPONENTS

    def test_one_failure(self, tmp_path, farm):
        bad = "mock://svn/arrangements/CactusBase/IOUtil/trunk"
        registry = BackendRegistry.mock(farm, failures={bad})
        engine = make_engine(tmp_path / "root", registry)
        report = engine.execute(engine.plan())
        assert (report.attempted, report.succeeded) == (19, 18)
        (failure,) = report.failures
        assert failure.component_path == "CactusBase/IOUtil"
        assert failure.argv[:3] == ("mock-svn", "checkout", bad)
        assert "injected failure" in failure.tool_message
        assert report.exit_code == 1

    def test_empty_plan_warns(self, tmp_path, mock_registry):
        events = []
        engine = make_engine(tmp_path / "root", mock_registry, events=events)
        plan = engine.plan()
        plan.tasks = []
        report = engine.execute(plan)
        assert (report.attempted, report.succeeded, report.failures) == (0, 0, [])
        assert report.elapsed_seconds < 1
        assert any(isinstance(e, Notice) and "no components" in e.text for e in events)

    def test_order_follows_plan(self, tmp_path, mock_registry):
        engine = make_engine(tmp_path / "root", mock_registry)
        plan = engine.plan()
        engine.execute(plan)
        svn_urls = [t.argv[2] for t in engine.traces if t.argv[0] == "mock-svn"]
        assert svn_urls == [f"mock://svn/arrangements/{c}/trunk" for c in SVN_COMPONENTS]

    def test_log_file_records_commands(self, tmp_path, farm):
        registry = BackendRegistry.mock(farm, failures={"mock://git/McLachlan"})
        engine = make_engine(tmp_path / "root", registry)
        engine.run()
        log = (tmp_path / "root" / ".crl" / "log").read_text()
        assert "$ mock-svn checkout mock://svn/arrangements/CactusBase/Time/trunk" in log
        assert "FAILED McLachlan/ML_BSSN" in log

    def test_missing_tool_fails_fast(self, tmp_path, farm, monkeypatch):
        registry = BackendRegistry.mock(farm)
        monkeypatch.setattr(registry["git"], "available", lambda: False)
        registry["git"].tool = "git"
        engine = make_engine(tmp_path / "root", registry)
        report = engine.execute(engine.plan())
        assert len(report.failures) == 6
        assert all("not found" in f.tool_message for f in report.failures)
        assert not any(t.argv[0] == "mock-git" for t in engine.traces)

    def test_second_run_is_bit_identical(self, tmp_path, mock_registry):
        root = tmp_path / "root"
        make_engine(root, mock_registry).run()
        (root / ".crl" / "log").unlink()
        before = raw_tree_digest(root)
        report = make_engine(root, mock_registry, auto_update=True)
        assert report.run() == 0
        (root / ".crl" / "log").unlink()
        assert raw_tree_digest(root) == before


class TestCredentials:
    def test_batch_mode_falls_back_to_anonymous(self, tmp_path, mock_registry, users_path):
        events = []
        engine = make_engine(tmp_path / "r", mock_registry, events=events, anonymous=False)
        creds = engine.decide_credentials(engine.load())
        assert all(c.kind == "anonymous" for c in creds)
        assert sum(isinstance(e, Notice) for e in events) == 2
        assert not users_path.exists()

    def test_reset_first(self, tmp_path, mock_registry, users_path):
        users_path.parent.mkdir(parents=True)
        users_path.write_text("mock://auth/git/McLachlan jdoe\n")
        engine = make_engine(tmp_path / "r", mock_registry, anonymous=False, reset_auth_first=True)
        engine.users = UsersFile.load()
        engine.prompt = lambda url: "-"
        engine.plan()
        assert UsersFile.load().records == {
            "mock://auth/svn/arrangements/$1/$2/trunk": "-", "mock://auth/git/McLachlan": "-"}


def test_elapsed_is_monotonic_wallclock(tmp_path, farm, monkeypatch):
    registry = BackendRegistry.mock(farm)
    original = registry["svn"].checkout

    def slow(task, ctx=None):
        time.sleep(0.01)
        return original(task, ctx)

    monkeypatch.setattr(registry["svn"], "checkout", slow)
    engine = make_engine(tmp_path / "root", registry)
    assert engine.execute(engine.plan()).elapsed_seconds >= 0.13


def test_login_failure_fails_the_block(tmp_path, farm):
    from crl.backends import CommandTrace, MockBackend

    class CvsWithLogin(MockBackend):
        def __init__(self):
            super().__init__(farm, "cvs")
            self.logins = 0

        def login(self, block, credential, ctx=None):
            self.logins += 1
            return CommandTrace(["cvs", "-d", block.url.raw, "login"], ".", 1, "auth failed\n")

    cvs = CvsWithLogin()
    registry = BackendRegistry.mock(farm)
    registry.register("cvs", cvs)
    listing = tmp_path / "cvs.th"
    listing.write_text("!CRL_VERSION = 1.0\n!TARGET = x\n!TYPE = cvs\n"
                       "!URL = :pserver:cvs.example.org:/cvs\n!ANON_USER = anon\n"
                       "!ANON_PASS = anon\n!CHECKOUT =\nA/B\nA/C\n"
                       "!TYPE = svn\n!URL = mock://svn/arrangements/$1/$2/trunk\n"
                       "!CHECKOUT = CactusBase/Time\n")
    engine = make_engine(tmp_path / "root", registry, str(listing))
    report = engine.execute(engine.plan())
    assert cvs.logins == 1
    assert [f.component_path for f in report.failures] == ["A/B", "A/C"]
    assert "auth failed" in report.failures[0].tool_message
    assert report.succeeded == 1
