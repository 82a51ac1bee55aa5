"""End-to-end run: read lists, plan tasks, fetch them one after another."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable
from urllib.parse import urlsplit

from . import auth
from .backends import (
    DOWNLOAD_TYPES,
    BackendRegistry,
    CommandRunner,
    CommandTrace,
    FetchContext,
    MockBackend,
    detect_state,
    fetch_url_text,
)
from .errors import (
    AuthError,
    FetchError,
    ForeignDestination,
    PromptUnavailable,
    SourceUnavailable,
    ToolMissing,
)
from .resolver import Credential, Document, FetchTask, load_document, merge_documents, resolve_tasks

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FETCH_FAILED = 1
EXIT_LIST_ERROR = 2

Fetcher = Callable[[str], str]


@dataclass
class RunConfig:
    list_sources: list[str]
    anonymous: bool = False
    auto_update: bool = False
    root_override: str | None = None
    verbosity: int = 0
    debug_only: bool = False
    reset_auth_first: bool = False

    def __post_init__(self):
        if not self.list_sources:
            raise ValueError("at least one component list is required")
        self.verbosity = max(0, min(int(self.verbosity), 2))


# -- events ----------------------------------------------------------------


@dataclass(frozen=True)
class TaskStarted:
    mode: str
    component_path: str
    destination: str


@dataclass(frozen=True)
class CommandStarted:
    argv: tuple[str, ...]


@dataclass(frozen=True)
class CommandOutput:
    text: str


@dataclass(frozen=True)
class Notice:
    text: str


@dataclass(frozen=True)
class TaskFailed:
    component_path: str
    message: str


@dataclass(frozen=True)
class PlanListed:
    tasks: tuple[FetchTask, ...]


@dataclass(frozen=True)
class RunFinished:
    report: FetchReport


Sink = Callable[[object], None]


class _EventListener:
    def __init__(self, sink: Sink):
        self.sink = sink

    def command_started(self, argv, cwd):
        self.sink(CommandStarted(tuple(argv)))

    def command_finished(self, trace):
        if trace.captured_output:
            self.sink(CommandOutput(trace.captured_output))


# -- results ---------------------------------------------------------------


@dataclass(frozen=True)
class Failure:
    component_path: str
    argv: tuple[str, ...]
    tool_message: str
    destination: str = ""


@dataclass
class FetchReport:
    attempted: int = 0
    succeeded: int = 0
    failures: list[Failure] = field(default_factory=list)
    elapsed_seconds: float = 0.0

    @property
    def exit_code(self) -> int:
        return EXIT_FETCH_FAILED if self.failures else EXIT_OK


@dataclass
class Plan:
    document: Document
    credentials: list[Credential]
    tasks: list[FetchTask]
    foreign: set[Path] = field(default_factory=set)
    skipped_updates: int = 0

    @property
    def checkouts(self) -> int:
        return sum(t.mode == "checkout" for t in self.tasks)

    @property
    def updates(self) -> int:
        return sum(t.mode == "update" for t in self.tasks)


# -- sources ---------------------------------------------------------------


def is_url(source: str) -> bool:
    scheme = urlsplit(source).scheme
    return len(scheme) > 1 and "://" in source


def acquire_source(source: str, fetchers: dict[str, Fetcher] | None = None) -> str:
    """Return the text of a component list given as a path or a URL."""
    try:
        if is_url(source):
            scheme = urlsplit(source).scheme
            fetch = (fetchers or {}).get(scheme, fetch_url_text)
            return fetch(source)
        return Path(source).read_text(encoding="utf-8")
    except (OSError, ValueError, UnicodeDecodeError) as exc:
        raise SourceUnavailable(source, exc) from exc


# -- the run ----------------------------------------------------------------


class Engine:
    """One invocation of the tool.

    ``prompt`` asks for a username given an AUTH_URL and ``confirm`` asks
    a yes/no question; leave either as None when nobody can answer.
    """

    def __init__(
        self,
        config: RunConfig,
        registry: BackendRegistry | None = None,
        users: auth.UsersFile | None = None,
        prompt: auth.Prompt | None = None,
        confirm: Callable[[str], bool] | None = None,
        sink: Sink | None = None,
        fetchers: dict[str, Fetcher] | None = None,
        cwd: str | Path | None = None,
        interactive: bool = False,
    ):
        self.config = config
        self.registry = registry or BackendRegistry.default()
        self.users = users
        self.prompt = prompt
        self.confirm = confirm
        self.sink = sink or (lambda event: None)
        self.fetchers = dict(fetchers or {})
        self.interactive = interactive
        if "mock" not in self.fetchers:
            mocks = [b for t in self.registry.types() if isinstance(b := self.registry[t], MockBackend)]
            if mocks:
                self.fetchers["mock"] = mocks[0].fetch_text
        base = Path(cwd) if cwd is not None else Path.cwd()
        root = Path(config.root_override) if config.root_override else base
        self.root = root if root.is_absolute() else base / root
        self.traces: list[CommandTrace] = []

    def _users(self) -> auth.UsersFile:
        if self.users is None:
            self.users = auth.UsersFile.load()
        return self.users

    def load(self) -> Document:
        documents = []
        for source in self.config.list_sources:
            text = acquire_source(source, self.fetchers)
            documents.append(load_document(text, source))
        return merge_documents(documents)

    def decide_credentials(self, document: Document) -> list[Credential]:
        credentials = []
        store = None
        for block in document.blocks:
            if self.config.anonymous or block.auth_url is None:
                credentials.append(Credential.anonymous())
                continue
            store = store or self._users()
            try:
                credentials.append(auth.decide(block, store, False, self.prompt))
            except PromptUnavailable:
                self.sink(Notice(f"Warning: no username for {block.auth_url.raw}; "
                                 "using anonymous access"))
                credentials.append(Credential.anonymous())
        return credentials

    def plan(self) -> Plan:
        if self.config.reset_auth_first:
            auth.reset(self._users())
        document = self.load()
        credentials = self.decide_credentials(document)
        tasks = resolve_tasks(document, self.root, self.config.anonymous, credentials)
        planned, foreign = [], set()
        for task in tasks:
            state = detect_state(task.destination)
            if task.vcs_type in DOWNLOAD_TYPES:
                mode = "checkout" if state.kind == "absent" else "update"
            elif state.kind == "absent":
                mode = "checkout"
            elif state.kind == "working_copy" and state.vcs_type == task.vcs_type:
                mode = "update"
            else:
                mode = "checkout"
                foreign.add(Path(task.destination))
            planned.append(replace(task, mode=mode))
        plan = Plan(document, credentials, planned, foreign)

        if plan.updates and not self.config.auto_update and not self.config.debug_only:
            question = f"{plan.updates} components are already checked out. Update them?"
            if self.confirm is None or not self.confirm(question):
                plan.skipped_updates = plan.updates
                plan.tasks = [t for t in planned if t.mode != "update"]
                self.sink(Notice(f"Skipping {plan.skipped_updates} updates "
                                 "(use --update to process them)"))
        return plan

    def execute(self, plan: Plan) -> FetchReport:
        report = FetchReport()
        if not plan.tasks:
            self.sink(Notice("Warning: no components to check out or update"))
        runner = CommandRunner(_EventListener(self.sink), interactive=self.interactive)
        ctx = FetchContext(runner, self.root / ".crl" / "repos")
        missing = {t: self.registry[t] for t in {task.vcs_type for task in plan.tasks}
                   if not self.registry[t].available()}
        logged_in: dict[int, str | None] = {}

        start = time.monotonic()
        for task in plan.tasks:
            report.attempted += 1
            self.sink(TaskStarted(task.mode, task.component_path, str(task.destination)))
            backend = self.registry[task.vcs_type]
            try:
                if task.vcs_type in missing:
                    raise ToolMissing(task.vcs_type, backend.tool)
                if Path(task.destination) in plan.foreign:
                    raise ForeignDestination(task.destination)
                if task.block_index not in logged_in:
                    logged_in[task.block_index] = self._login(plan, task, backend, ctx)
                if logged_in[task.block_index] is not None:
                    raise FetchError(logged_in[task.block_index])
                if task.mode == "update":
                    backend.update(task, ctx)
                else:
                    backend.checkout(task, ctx)
            except (FetchError, OSError, NotImplementedError) as exc:
                argv = tuple(getattr(exc, "argv", ()) or ())
                message = str(exc)
                output = getattr(exc, "output", "")
                if output:
                    message = f"{message}\n{output.rstrip()}"
                report.failures.append(
                    Failure(task.component_path, argv, message, str(task.destination)))
                self.sink(TaskFailed(task.component_path, message))
            else:
                report.succeeded += 1
        report.elapsed_seconds = time.monotonic() - start
        self.traces = runner.traces
        self._write_log(report)
        self.sink(RunFinished(report))
        return report

    def _login(self, plan, task, backend, ctx) -> str | None:
        """Log in once per block; returns an error message on failure."""
        block = plan.document.blocks[task.block_index]
        try:
            auth.login_if_needed(block, task.credentials, backend, ctx)
        except (AuthError, FetchError) as exc:
            return str(exc)
        return None

    def _write_log(self, report: FetchReport) -> None:
        if not self.traces and not report.failures:
            return
        path = self.root / ".crl" / "log"
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(f"=== run at {time.strftime('%Y-%m-%d %H:%M:%S')}\n")
                for trace in self.traces:
                    fh.write(f"$ {trace.command}  (in {trace.working_dir}) -> {trace.outcome}\n")
                    fh.write(trace.captured_output)
                for failure in report.failures:
                    fh.write(f"FAILED {failure.component_path}: {failure.tool_message}\n")
        except OSError as exc:
            log.warning("cannot write %s: %s", path, exc)

    def run(self) -> int:
        """Plan and execute; returns the process exit code.

        List errors propagate to the caller, which maps them to exit code 2.
        """
        plan = self.plan()
        if self.config.debug_only:
            self.sink(PlanListed(tuple(plan.tasks)))
            return EXIT_OK
        return self.execute(plan).exit_code


def run(config: RunConfig, **kwargs) -> int:
    return Engine(config, **kwargs).run()
