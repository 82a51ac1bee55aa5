"""``getcomponents`` command-line front end."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from importlib import resources
from typing import TextIO

from . import auth
from .backends import BackendRegistry
from .engine import (
    EXIT_LIST_ERROR,
    EXIT_OK,
    CommandOutput,
    CommandStarted,
    Engine,
    Notice,
    PlanListed,
    RunConfig,
    RunFinished,
    TaskFailed,
    TaskStarted,
)
from .errors import (
    AuthError,
    ListError,
    MissingValue,
    NoListGiven,
    PromptUnavailable,
    UnknownFlag,
    UsageError,
)

PROG = "GetComponents"

USAGE = f"""\
Usage: {PROG} [options] <component list> [<component list> ...]

Retrieve every component named in one or more CRL component lists.
Lists may be files or URLs.

Options:
  --help                  print this help and exit
  --man                   print the full manual and exit
  -v, --verbose           print commands as they run; twice also shows their output
  --debug                 list what would be checked out or updated, then stop
  --anonymous             use anonymous access for every component
  --update                update existing checkouts without asking
  --root DIR              place components under DIR instead of the current directory
  --reset-authentication  forget stored usernames before starting
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        if "expected one argument" in message:
            flag = message.split(":", 1)[0].replace("argument", "").strip()
            raise MissingValue(flag.split("/")[-1])
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog=PROG, add_help=False, allow_abbrev=False)
    p.add_argument("--help", action="store_true")
    p.add_argument("--man", action="store_true")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--debug", action="store_true")
    p.add_argument("--anonymous", action="store_true")
    p.add_argument("--update", action="store_true")
    p.add_argument("--root")
    p.add_argument("--reset-authentication", dest="reset", action="store_true")
    p.add_argument("sources", nargs="*")
    return p


@dataclass
class CliInvocation:
    sources: list[str] = field(default_factory=list)
    help: bool = False
    man: bool = False
    verbosity: int = 0
    debug_only: bool = False
    anonymous: bool = False
    auto_update: bool = False
    root_override: str | None = None
    reset_auth_first: bool = False

    def to_config(self) -> RunConfig:
        return RunConfig(
            list_sources=list(self.sources),
            anonymous=self.anonymous,
            auto_update=self.auto_update,
            root_override=self.root_override,
            verbosity=self.verbosity,
            debug_only=self.debug_only,
            reset_auth_first=self.reset_auth_first,
        )


def parse_args(argv: list[str]) -> CliInvocation:
    """Map command-line tokens onto a :class:`CliInvocation`."""
    ns, extra = _build_parser().parse_known_intermixed_args(list(argv))
    if extra:
        raise UnknownFlag(extra[0])
    if ns.root == "":
        raise MissingValue("--root")
    inv = CliInvocation(
        sources=ns.sources,
        help=ns.help,
        man=ns.man,
        verbosity=min(ns.verbose, 2),
        debug_only=ns.debug,
        anonymous=ns.anonymous,
        auto_update=ns.update,
        root_override=ns.root,
        reset_auth_first=ns.reset,
    )
    if not inv.sources and not (inv.help or inv.man):
        raise NoListGiven()
    return inv


# -- output ------------------------------------------------------------------


def _format_elapsed(seconds: float) -> str:
    return f"Time elapsed: {seconds:.1f} s"


def render_event(event: object, verbosity: int) -> list[str]:
    """Console lines for one run event at the given verbosity."""
    if isinstance(event, TaskStarted):
        return [f"{event.mode.upper()} {event.component_path}"]
    if isinstance(event, CommandStarted):
        if verbosity >= 1:
            return ["$ " + " ".join(event.argv)]
        return []
    if isinstance(event, CommandOutput):
        if verbosity >= 2:
            return event.text.rstrip("\n").split("\n")
        return []
    if isinstance(event, Notice):
        return [event.text]
    if isinstance(event, TaskFailed):
        return [f"ERROR {event.component_path}: {event.message.splitlines()[0]}"]
    if isinstance(event, PlanListed):
        lines = [f"{t.mode.upper()} {t.component_path} -> {t.destination}" for t in event.tasks]
        checkouts = sum(t.mode == "checkout" for t in event.tasks)
        lines.append(f"{len(event.tasks)} components in total "
                     f"({checkouts} to check out, {len(event.tasks) - checkouts} to update)")
        return lines
    if isinstance(event, RunFinished):
        report = event.report
        lines = [f"{report.succeeded} of {report.attempted} components processed successfully"]
        if report.failures:
            lines.append("The following components had errors:")
            for failure in report.failures:
                lines.append(f"  {failure.component_path}")
                if failure.argv:
                    lines.append("    command: " + " ".join(failure.argv))
        lines.append(_format_elapsed(report.elapsed_seconds))
        return lines
    return []


def render_output(events: list[object], verbosity: int) -> str:
    lines = [line for event in events for line in render_event(event, verbosity)]
    return "".join(line + "\n" for line in lines)


class ConsoleSink:
    """Prints events as they arrive and keeps them for later inspection."""

    def __init__(self, verbosity: int, out: TextIO, err: TextIO):
        self.verbosity = verbosity
        self.out = out
        self.err = err
        self.events: list[object] = []

    def __call__(self, event: object) -> None:
        self.events.append(event)
        stream = self.err if isinstance(event, (Notice, TaskFailed)) else self.out
        for line in render_event(event, self.verbosity):
            print(line, file=stream)
        stream.flush()


# -- prompts -----------------------------------------------------------------


def _ask(question: str, stdin: TextIO, stdout: TextIO) -> str:
    if not stdin.isatty():
        raise PromptUnavailable("no terminal available to ask: " + question)
    stdout.write(question)
    stdout.flush()
    line = stdin.readline()
    if not line:
        raise PromptUnavailable("end of input while asking: " + question)
    return line.strip()


def prompt_username(auth_url: str, stdin: TextIO | None = None, stdout: TextIO | None = None) -> str:
    """Ask for the username to use with ``auth_url``; ``-`` means anonymous."""
    return _ask(f"Username for {auth_url} (enter '-' for anonymous access): ",
                stdin or sys.stdin, stdout or sys.stdout)


def confirm(question: str, stdin: TextIO | None = None, stdout: TextIO | None = None) -> bool:
    try:
        answer = _ask(question + " [y/N] ", stdin or sys.stdin, stdout or sys.stdout)
    except PromptUnavailable:
        return False
    return answer.lower() in ("y", "yes")


def manual_text() -> str:
    return resources.files("crl").joinpath("data/manual.txt").read_text(encoding="utf-8")


def main(
    argv: list[str] | None = None,
    *,
    stdout: TextIO | None = None,
    stderr: TextIO | None = None,
    registry: BackendRegistry | None = None,
    users: auth.UsersFile | None = None,
    prompt=None,
    confirm_update=None,
    cwd=None,
) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    try:
        inv = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"{PROG}: {exc}", file=err)
        print(f"Try '{PROG} --help' for more information.", file=err)
        return EXIT_LIST_ERROR
    if inv.help:
        out.write(USAGE)
        return EXIT_OK
    if inv.man:
        out.write(manual_text())
        return EXIT_OK

    logging.basicConfig(level=logging.DEBUG if inv.verbosity >= 2 else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=err)
    interactive = sys.stdin.isatty()
    sink = ConsoleSink(inv.verbosity, out, err)
    engine = Engine(
        inv.to_config(),
        registry=registry,
        users=users,
        prompt=prompt if prompt is not None else (prompt_username if interactive else None),
        confirm=confirm_update if confirm_update is not None else (confirm if interactive else None),
        sink=sink,
        cwd=cwd,
        interactive=interactive,
    )
    try:
        return engine.run()
    except (ListError, AuthError) as exc:
        print(f"{PROG}: {exc}", file=err)
        return EXIT_LIST_ERROR


def console_main() -> None:
    sys.exit(main())
