"""Retrieval backends.

Each repository type is handled by one :class:`Backend` subclass and
looked up through a :class:`BackendRegistry` keyed by the ``!TYPE`` value.
Adding a tool means writing a subclass and registering it; the engine
never needs to change.

Real backends shell out to ``cvs``, ``svn``, ``git``, ``darcs``, ``hg`` and
``curl``.  :class:`MockBackend` copies directories from a local fixture
tree addressed by ``mock://`` URLs and records the same command traces,
for tests that must not touch the network or external tools.
"""

from __future__ import annotations

import hashlib
import logging
import os
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol
from urllib.parse import urlsplit

from .errors import (
    ExtractMissing,
    FetchFailed,
    NotAWorkingCopy,
    ToolMissing,
    WouldOverwrite,
)
from .resolver import VCS_TYPES, ComponentBlock, Credential, FetchTask

log = logging.getLogger(__name__)

#: written into components that are copied out of a shared clone, and by the mock
MARKER = ".crl-component"

METADATA_DIRS = (
    (".git", "git"),
    (".svn", "svn"),
    ("CVS", "cvs"),
    (".hg", "hg"),
    ("_darcs", "darcs"),
)
DOWNLOAD_TYPES = frozenset({"http", "ftp"})


@dataclass
class CommandTrace:
    argv: list[str]
    working_dir: str
    outcome: int
    captured_output: str = ""

    @property
    def command(self) -> str:
        return subprocess.list2cmdline(self.argv)


class CommandListener(Protocol):
    def command_started(self, argv: list[str], cwd: str) -> None: ...

    def command_finished(self, trace: CommandTrace) -> None: ...


class CommandRunner:
    """Runs child processes and keeps every trace.

    ``interactive`` leaves stdin attached so tools can ask for passwords
    themselves; otherwise stdin is closed and git is told not to prompt.
    """

    def __init__(self, listener: CommandListener | None = None, interactive: bool = False):
        self.listener = listener
        self.interactive = interactive
        self.traces: list[CommandTrace] = []

    def _started(self, argv: list[str], cwd: str) -> None:
        log.debug("running %s in %s", argv, cwd)
        if self.listener is not None:
            self.listener.command_started(argv, cwd)

    def _finished(self, trace: CommandTrace) -> CommandTrace:
        self.traces.append(trace)
        if self.listener is not None:
            self.listener.command_finished(trace)
        return trace

    def run(self, argv: list[str], cwd: str | Path | None = None, vcs_type: str = "") -> CommandTrace:
        argv = [str(a) for a in argv]
        cwd = str(cwd or os.getcwd())
        self._started(argv, cwd)
        env = dict(os.environ)
        if not self.interactive:
            env.setdefault("GIT_TERMINAL_PROMPT", "0")
        try:
            proc = subprocess.run(
                argv, cwd=cwd, env=env, text=True, errors="replace",
                stdin=None if self.interactive else subprocess.DEVNULL,
                stdout=subprocess.PIPE, stderr=subprocess.STDOUT)
        except FileNotFoundError:
            self._finished(CommandTrace(argv, cwd, 127, f"{argv[0]}: command not found\n"))
            raise ToolMissing(vcs_type or argv[0], argv[0]) from None
        return self._finished(CommandTrace(argv, cwd, proc.returncode, proc.stdout))

    def simulate(self, argv: list[str], cwd: str | Path | None, action: Callable[[], str]) -> CommandTrace:
        """Record a command whose effect is ``action``; used by the mock backend."""
        argv = [str(a) for a in argv]
        cwd = str(cwd or os.getcwd())
        self._started(argv, cwd)
        try:
            output, status = action(), 0
        except Exception as exc:
            output, status = f"{exc}\n", 1
        return self._finished(CommandTrace(argv, cwd, status, output))


@dataclass
class FetchContext:
    """Per-run state shared by all backends."""

    runner: CommandRunner = field(default_factory=CommandRunner)
    store_dir: Path = Path(".crl/repos")
    refreshed: set[str] = field(default_factory=set)

    def repo_dir(self, url: str) -> Path:
        return Path(self.store_dir) / hashlib.sha1(url.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class DestinationState:
    kind: str  # "absent" | "working_copy" | "foreign"
    vcs_type: str | None = None

    def __str__(self) -> str:
        return f"working_copy({self.vcs_type})" if self.vcs_type else self.kind


ABSENT = DestinationState("absent")
FOREIGN = DestinationState("foreign")


def _read_marker(path: Path) -> dict[str, str]:
    info = {}
    for line in path.read_text().splitlines():
        key, _, value = line.partition("=")
        info[key] = value
    return info


def _write_marker(destination: Path, **info: str) -> None:
    text = "".join(f"{k}={v}\n" for k, v in info.items())
    (destination / MARKER).write_text(text)


def detect_state(destination: str | Path) -> DestinationState:
    """Classify a destination by the tool metadata it contains."""
    dest = Path(destination)
    if not dest.exists():
        return ABSENT
    if not dest.is_dir():
        return FOREIGN
    if not any(dest.iterdir()):
        return ABSENT
    marker = dest / MARKER
    if marker.is_file():
        vcs_type = _read_marker(marker).get("type")
        if vcs_type:
            return DestinationState("working_copy", vcs_type)
    for name, vcs_type in METADATA_DIRS:
        if (dest / name).is_dir():
            return DestinationState("working_copy", vcs_type)
    return FOREIGN


def _clear_directory(path: Path, keep: Iterable[str] = ()) -> None:
    keep = set(keep)
    for child in path.iterdir():
        if child.name in keep:
            continue
        if child.is_dir() and not child.is_symlink():
            shutil.rmtree(child)
        else:
            child.unlink()


_REPO_METADATA = shutil.ignore_patterns(*(name for name, _ in METADATA_DIRS))


def materialize_component(repo_dir: str | Path, repo_extract: str, destination: str | Path) -> None:
    """Make ``destination`` hold exactly the ``repo_extract`` subtree of a clone.

    Files are copied, not linked.  Anything already in ``destination``
    apart from the component marker is replaced.
    """
    repo_dir, destination = Path(repo_dir), Path(destination)
    source = repo_dir / repo_extract if repo_extract not in ("", ".") else repo_dir
    if not source.is_dir():
        raise ExtractMissing(repo_extract, repo_dir)
    if destination.exists():
        _clear_directory(destination, keep=(MARKER,))
    shutil.copytree(source, destination, ignore=_REPO_METADATA, dirs_exist_ok=True)


class Backend:
    """Checkout/update contract shared by every repository type.

    Subclasses implement :meth:`fetch` and :meth:`refresh` for plain
    working copies.  Types that clone whole repositories also implement
    :meth:`clone` and :meth:`pull`, which serve tasks with a
    ``repo_extract``.
    """

    vcs_type = ""
    tool: str | None = None

    def available(self) -> bool:
        return self.tool is None or shutil.which(self.tool) is not None

    def require_tool(self) -> None:
        if not self.available():
            raise ToolMissing(self.vcs_type, self.tool)

    def _run(self, ctx: FetchContext, task: FetchTask | None, argv: list[str],
             cwd: str | Path | None = None) -> CommandTrace:
        trace = ctx.runner.run(argv, cwd, self.vcs_type)
        if trace.outcome != 0:
            raise FetchFailed(task, trace)
        return trace

    def checkout(self, task: FetchTask, ctx: FetchContext | None = None) -> list[CommandTrace]:
        ctx = ctx or FetchContext()
        self.require_tool()
        dest = Path(task.destination)
        if detect_state(dest) is not ABSENT:
            raise WouldOverwrite(dest)
        if task.repo_extract is not None:
            return self._extract(task, ctx)
        dest.parent.mkdir(parents=True, exist_ok=True)
        return self.fetch(task, ctx)

    def update(self, task: FetchTask, ctx: FetchContext | None = None) -> list[CommandTrace]:
        ctx = ctx or FetchContext()
        self.require_tool()
        dest = Path(task.destination)
        state = detect_state(dest)
        if state.kind != "working_copy" or state.vcs_type != task.vcs_type:
            raise NotAWorkingCopy(dest, task.vcs_type)
        if task.repo_extract is not None:
            return self._extract(task, ctx)
        return self.refresh(task, ctx)

    def _extract(self, task: FetchTask, ctx: FetchContext) -> list[CommandTrace]:
        url = task.resolved_url
        repo_dir = ctx.repo_dir(url)
        traces: list[CommandTrace] = []
        if url not in ctx.refreshed:
            if detect_state(repo_dir).kind == "working_copy":
                traces += self.pull(task, repo_dir, ctx)
            else:
                repo_dir.parent.mkdir(parents=True, exist_ok=True)
                traces += self.clone(task, repo_dir, ctx)
            ctx.refreshed.add(url)
        materialize_component(repo_dir, task.repo_extract, task.destination)
        _write_marker(Path(task.destination), type=task.vcs_type, repository=url,
                      extract=task.repo_extract)
        return traces

    def fetch(self, task: FetchTask, ctx: FetchContext) -> list[CommandTrace]:
        raise NotImplementedError

    def refresh(self, task: FetchTask, ctx: FetchContext) -> list[CommandTrace]:
        raise NotImplementedError

    def clone(self, task: FetchTask, repo_dir: Path, ctx: FetchContext) -> list[CommandTrace]:
        raise NotImplementedError(f"{self.vcs_type} does not support !REPO_PATH")

    def pull(self, task: FetchTask, repo_dir: Path, ctx: FetchContext) -> list[CommandTrace]:
        raise NotImplementedError(f"{self.vcs_type} does not support !REPO_PATH")


def cvs_root(url: str, credential: Credential) -> str:
    """Put the user (and anonymous password) into a ``:pserver:`` CVSROOT."""
    prefix = ":pserver:"
    if not url.startswith(prefix) or credential.kind == "anonymous":
        return url
    rest = url[len(prefix):]
    if "@" in rest:
        rest = rest.split("@", 1)[1]
    user = credential.username
    if credential.kind == "cvs_anon":
        user = f"{user}:{credential.password}"
    return f"{prefix}{user}@{rest}"


class CvsBackend(Backend):
    vcs_type = "cvs"
    tool = "cvs"

    def login(self, block: ComponentBlock, credential: Credential,
              ctx: FetchContext | None = None) -> CommandTrace:
        ctx = ctx or FetchContext()
        location = block.auth_url if credential.is_authenticated and block.auth_url else block.url
        root = cvs_root(location.raw, credential)
        return ctx.runner.run(["cvs", "-d", root, "login"], None, self.vcs_type)

    def fetch(self, task, ctx):
        dest = Path(task.destination)
        root = cvs_root(task.resolved_url, task.credentials)
        argv = ["cvs", "-q", "-d", root, "checkout", "-d", dest.name, task.component_path]
        return [self._run(ctx, task, argv, dest.parent)]

    def refresh(self, task, ctx):
        return [self._run(ctx, task, ["cvs", "-q", "update", "-d", "-P"], task.destination)]


class SvnBackend(Backend):
    vcs_type = "svn"
    tool = "svn"

    @staticmethod
    def _auth(task: FetchTask) -> list[str]:
        if task.credentials.is_authenticated:
            return ["--username", task.credentials.username]
        return []

    def fetch(self, task, ctx):
        argv = ["svn", "checkout", *self._auth(task), task.resolved_url, str(task.destination)]
        return [self._run(ctx, task, argv)]

    def refresh(self, task, ctx):
        return [self._run(ctx, task, ["svn", "update", *self._auth(task), str(task.destination)])]


class GitBackend(Backend):
    """Anonymous clones are shallow; authenticated ones keep full history."""

    vcs_type = "git"
    tool = "git"

    def _clone_argv(self, task: FetchTask, target: Path) -> list[str]:
        argv = ["git", "clone"]
        if not task.credentials.is_authenticated:
            argv += ["--depth", "1"]
        return argv + [task.resolved_url, str(target)]

    def _pull_argv(self, target: Path) -> list[str]:
        return ["git", "-C", str(target), "pull", "--no-rebase"]

    def fetch(self, task, ctx):
        return [self._run(ctx, task, self._clone_argv(task, Path(task.destination)))]

    def refresh(self, task, ctx):
        return [self._run(ctx, task, self._pull_argv(Path(task.destination)))]

    def clone(self, task, repo_dir, ctx):
        return [self._run(ctx, task, self._clone_argv(task, repo_dir))]

    def pull(self, task, repo_dir, ctx):
        return [self._run(ctx, task, self._pull_argv(repo_dir))]


class HgBackend(Backend):
    vcs_type = "hg"
    tool = "hg"

    def fetch(self, task, ctx):
        return self.clone(task, Path(task.destination), ctx)

    def refresh(self, task, ctx):
        return self.pull(task, Path(task.destination), ctx)

    def clone(self, task, repo_dir, ctx):
        return [self._run(ctx, task, ["hg", "clone", task.resolved_url, str(repo_dir)])]

    def pull(self, task, repo_dir, ctx):
        return [self._run(ctx, task, ["hg", "pull", "-u", "-R", str(repo_dir)])]


class DarcsBackend(Backend):
    vcs_type = "darcs"
    tool = "darcs"

    def fetch(self, task, ctx):
        argv = ["darcs", "get", task.resolved_url, str(task.destination)]
        return [self._run(ctx, task, argv)]

    def refresh(self, task, ctx):
        argv = ["darcs", "pull", "--all", "--repodir", str(task.destination)]
        return [self._run(ctx, task, argv)]


def download_name(url: str) -> str:
    name = Path(urlsplit(url).path).name
    return name or "index.html"


class DownloadBackend(Backend):
    """Single-file http/ftp downloads.  Archives are not unpacked.

    Downloads have no working-copy metadata, so updating simply fetches
    the file again.
    """

    tool = "curl"

    def __init__(self, vcs_type: str = "http"):
        self.vcs_type = vcs_type

    def _download(self, task, ctx):
        dest = Path(task.destination)
        dest.mkdir(parents=True, exist_ok=True)
        argv = ["curl", "-fsSL", "-o", str(dest / download_name(task.resolved_url)),
                task.resolved_url]
        return [self._run(ctx, task, argv)]

    def update(self, task, ctx=None):
        ctx = ctx or FetchContext()
        self.require_tool()
        return self._download(task, ctx)

    fetch = refresh = _download


class MockBackend(Backend):
    """Fixture-backed stand-in for any repository type.

    ``mock://some/dir`` resolves to ``fixture_root/some/dir``.  Checkout
    copies that directory; update copies it again.  URLs in ``failures``
    (or matching ``fail_if``) produce a failing command instead.
    """

    tool = None

    def __init__(self, fixture_root: str | Path, vcs_type: str = "git",
                 failures: set[str] | None = None,
                 fail_if: Callable[[str], bool] | None = None):
        self.fixture_root = Path(fixture_root)
        self.vcs_type = vcs_type
        self.failures = failures if failures is not None else set()
        self.fail_if = fail_if

    def fixture_path(self, url: str) -> Path:
        if not url.startswith("mock://"):
            raise ValueError(f"not a mock:// URL: {url}")
        return self.fixture_root / url[len("mock://"):]

    def fetch_text(self, url: str) -> str:
        return self.fixture_path(url).read_text(encoding="utf-8")

    def _copy(self, url: str, target: Path) -> Callable[[], str]:
        def action() -> str:
            if url in self.failures or (self.fail_if is not None and self.fail_if(url)):
                raise RuntimeError(f"mock: injected failure for {url}")
            source = self.fixture_path(url)
            if not source.exists():
                raise RuntimeError(f"mock: no fixture at {source}")
            target.mkdir(parents=True, exist_ok=True)
            _clear_directory(target, keep=(MARKER,))
            if source.is_dir():
                shutil.copytree(source, target, dirs_exist_ok=True)
            else:
                shutil.copy2(source, target / source.name)
            _write_marker(target, type=self.vcs_type, repository=url)
            return f"mock: copied {source} -> {target}\n"
        return action

    def _sim(self, ctx, task, verb, url, target):
        argv = [f"mock-{self.vcs_type}", verb, url, str(target)]
        trace = ctx.runner.simulate(argv, None, self._copy(url, Path(target)))
        if trace.outcome != 0:
            raise FetchFailed(task, trace)
        return [trace]

    def fetch(self, task, ctx):
        return self._sim(ctx, task, "checkout", task.resolved_url, task.destination)

    def refresh(self, task, ctx):
        return self._sim(ctx, task, "update", task.resolved_url, task.destination)

    def clone(self, task, repo_dir, ctx):
        return self._sim(ctx, task, "clone", task.resolved_url, repo_dir)

    def pull(self, task, repo_dir, ctx):
        return self._sim(ctx, task, "pull", task.resolved_url, repo_dir)


class BackendRegistry:
    """Maps ``!TYPE`` values to backend instances."""

    def __init__(self, backends: dict[str, Backend] | None = None):
        self._backends: dict[str, Backend] = dict(backends or {})

    def register(self, vcs_type: str, backend: Backend) -> None:
        self._backends[vcs_type] = backend

    def __getitem__(self, vcs_type: str) -> Backend:
        return self._backends[vcs_type]

    def __contains__(self, vcs_type: str) -> bool:
        return vcs_type in self._backends

    def types(self) -> list[str]:
        return list(self._backends)

    @classmethod
    def default(cls) -> BackendRegistry:
        return cls({
            "cvs": CvsBackend(),
            "svn": SvnBackend(),
            "git": GitBackend(),
            "darcs": DarcsBackend(),
            "hg": HgBackend(),
            "http": DownloadBackend("http"),
            "ftp": DownloadBackend("ftp"),
        })

    @classmethod
    def mock(cls, fixture_root: str | Path, failures: set[str] | None = None,
             fail_if: Callable[[str], bool] | None = None) -> BackendRegistry:
        """A registry that serves every type from ``fixture_root``."""
        failures = failures if failures is not None else set()
        return cls({t: MockBackend(fixture_root, t, failures, fail_if) for t in VCS_TYPES})


def fetch_url_text(url: str) -> str:
    """Download a text document to a temporary file and read it back."""
    from urllib.request import urlopen

    with tempfile.NamedTemporaryFile(prefix="crl-", suffix=".th") as tmp:
        with urlopen(url, timeout=60) as response:
            shutil.copyfileobj(response, tmp)
        tmp.flush()
        return Path(tmp.name).read_text(encoding="utf-8")
