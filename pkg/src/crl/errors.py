"""Exception hierarchy for the CRL toolchain.

Every error raised on purpose derives from :class:`CrlError`.  The engine
maps the three top-level families onto exit codes: :class:`ListError`
(parse, resolve and source problems) aborts a run before anything is
fetched, :class:`FetchError` is recorded per task and the run continues.
"""

from __future__ import annotations


class CrlError(Exception):
    """Base class for all CRL errors."""


# -- list errors (fatal, exit code 2) ---------------------------------------


class ListError(CrlError):
    """A component list could not be read, parsed or resolved."""


class CrlSyntaxError(ListError):
    """A parse error tied to a line of a component list."""

    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        self.message = message
        self.source = source
        self.line = line
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        return f"{self.source or '<string>'}:{self.line}: {self.message}"


class UnknownDirective(CrlSyntaxError):
    pass


class MissingVersionHeader(CrlSyntaxError):
    pass


class MalformedDirective(CrlSyntaxError):
    pass


class EmptyCheckout(CrlSyntaxError):
    pass


class MalformedLocation(CrlSyntaxError):
    def __init__(self, value: str, source: str | None = None, line: int | None = None):
        self.value = value
        super().__init__(f"malformed repository location {value!r}", source, line)


class ResolveError(CrlSyntaxError):
    """Semantic error found while turning directives into component blocks."""


class UndefinedVariable(ResolveError):
    def __init__(self, name: str, source: str | None = None, line: int | None = None):
        self.name = name
        super().__init__(f"undefined variable ${name}", source, line)


class DuplicateDefinition(ResolveError):
    def __init__(self, name: str, source: str | None = None, line: int | None = None):
        self.name = name
        super().__init__(f"variable {name} is defined more than once", source, line)


class UnsupportedVersion(ResolveError):
    pass


class MissingRequiredDirective(ResolveError):
    def __init__(self, which: str, source: str | None = None, line: int | None = None):
        self.which = which
        super().__init__(f"!CHECKOUT before !{which} was set", source, line)


class OrphanAnonPass(ResolveError):
    pass


class InvalidType(ResolveError):
    def __init__(self, value: str, source: str | None = None, line: int | None = None):
        self.value = value
        super().__init__(f"unsupported repository type {value!r}", source, line)


class RepoPathWithoutDvcs(ResolveError):
    pass


class AnonCredentialsWithoutCvs(ResolveError):
    pass


class AmbiguousName(ResolveError):
    pass


class PositionalOutOfRange(ResolveError):
    def __init__(self, index: int, component_path: str, source: str | None = None,
                 line: int | None = None):
        self.index = index
        self.component_path = component_path
        super().__init__(
            f"${index} out of range for component {component_path!r}", source, line)


class VersionMismatch(ListError):
    def __init__(self, a: str, b: str):
        self.versions = (a, b)
        super().__init__(f"cannot merge component lists of CRL versions {a} and {b}")


class SourceUnavailable(ListError):
    def __init__(self, source: str, cause: object):
        self.source = source
        self.cause = cause
        super().__init__(f"cannot read component list {source}: {cause}")


# -- authentication ---------------------------------------------------------


class AuthError(CrlError):
    pass


class PromptUnavailable(AuthError):
    """Interaction is required but there is no terminal to ask."""


class LoginFailed(AuthError):
    def __init__(self, url: str, tool_message: str, argv: list[str] | None = None):
        self.url = url
        self.tool_message = tool_message
        self.argv = argv or []
        super().__init__(f"login to {url} failed: {tool_message.strip()}")


class IoFailure(AuthError):
    def __init__(self, path: object, cause: object):
        self.path = path
        super().__init__(f"{path}: {cause}")


# -- per-task fetch errors (recorded, exit code 1) ---------------------------


class FetchError(CrlError):
    """A single component could not be retrieved."""

    argv: list[str] = []
    output: str = ""


class ToolMissing(FetchError):
    def __init__(self, vcs_type: str, tool: str):
        self.vcs_type = vcs_type
        self.tool = tool
        super().__init__(f"{tool} is required for {vcs_type} components but was not found")


class FetchFailed(FetchError):
    def __init__(self, task: object, trace: object):
        self.task = task
        self.trace = trace
        self.argv = list(trace.argv)
        self.output = trace.captured_output
        super().__init__(
            f"command failed with exit status {trace.outcome}: {' '.join(self.argv)}")


class WouldOverwrite(FetchError):
    def __init__(self, destination: object):
        self.destination = destination
        super().__init__(f"{destination} already exists and is not empty")


class NotAWorkingCopy(FetchError):
    def __init__(self, destination: object, expected: str):
        self.destination = destination
        super().__init__(f"{destination} is not a {expected} working copy")


class ExtractMissing(FetchError):
    def __init__(self, repo_extract: str, repo_dir: object):
        self.repo_extract = repo_extract
        super().__init__(f"{repo_extract!r} does not exist in repository clone {repo_dir}")


class ForeignDestination(FetchError):
    def __init__(self, destination: object):
        self.destination = destination
        super().__init__(
            f"{destination} contains files that are not under version control")


# -- command line -----------------------------------------------------------


class UsageError(CrlError):
    pass


class UnknownFlag(UsageError):
    def __init__(self, token: str):
        self.token = token
        super().__init__(f"unknown option {token}")


class MissingValue(UsageError):
    def __init__(self, flag: str):
        self.flag = flag
        super().__init__(f"option {flag} requires a value")


class NoListGiven(UsageError):
    def __init__(self):
        super().__init__("no component list given")
