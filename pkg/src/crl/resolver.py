"""Turn a directive stream into component blocks and fetch tasks."""

from __future__ import annotations

import posixpath
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .errors import (
    AmbiguousName,
    AnonCredentialsWithoutCvs,
    DuplicateDefinition,
    InvalidType,
    MalformedDirective,
    MissingRequiredDirective,
    OrphanAnonPass,
    PositionalOutOfRange,
    RepoPathWithoutDvcs,
    UndefinedVariable,
    UnsupportedVersion,
    VersionMismatch,
)
from .parser import Location, RawDirective, parse, parse_location

CRL_VERSION = "1.0"
VCS_TYPES = ("cvs", "svn", "git", "darcs", "hg", "http", "ftp")
DVCS_WITH_REPO_PATH = frozenset({"git", "hg"})

_VARIABLE_RE = re.compile(r"\$([A-Za-z_][A-Za-z0-9_]*)")
_POSITIONAL_RE = re.compile(r"\$([0-9]+)")

# directives forgotten when a later block sets a new !URL
_REPO_SCOPED = ("AUTH_URL", "ANON_USER", "ANON_PASS", "REPO_PATH", "NAME")


@dataclass(frozen=True)
class Definition:
    name: str
    value: str


@dataclass(frozen=True)
class ComponentBlock:
    target: str
    vcs_type: str
    url: Location
    checkouts: tuple[str, ...]
    auth_url: Location | None = None
    anon_user: str | None = None
    anon_pass: str | None = None
    repo_path: str | None = None
    name_override: str | None = None
    source: str | None = field(default=None, compare=False)
    line: int | None = field(default=None, compare=False)

    def relative_destination(self, component_path: str) -> str:
        parts = component_path.strip("/").split("/")
        if self.name_override:
            parts[-1] = self.name_override
        return posixpath.normpath(posixpath.join(self.target, *parts))


@dataclass(frozen=True)
class Document:
    crl_version: str
    definitions: tuple[Definition, ...] = ()
    blocks: tuple[ComponentBlock, ...] = ()
    source_names: tuple[str, ...] = ()


@dataclass(frozen=True)
class Credential:
    """How a block is accessed: ``anonymous``, ``username`` or ``cvs_anon``."""

    kind: str = "anonymous"
    username: str | None = None
    password: str | None = None

    @classmethod
    def anonymous(cls) -> Credential:
        return cls()

    @classmethod
    def user(cls, name: str) -> Credential:
        return cls("username", name)

    @classmethod
    def cvs_anon(cls, user: str, password: str) -> Credential:
        return cls("cvs_anon", user, password)

    @property
    def is_authenticated(self) -> bool:
        return self.kind == "username"


@dataclass(frozen=True)
class FetchTask:
    component_path: str
    resolved_url: str
    destination: Path
    vcs_type: str
    mode: str = "checkout"
    credentials: Credential = Credential()
    repo_extract: str | None = None
    block_index: int = 0


def _substitute_variables(text: str, env: dict[str, str], d: RawDirective) -> str:
    def lookup(m: re.Match) -> str:
        name = m.group(1)
        if name not in env:
            raise UndefinedVariable(name, d.source, d.line)
        return env[name]

    return _VARIABLE_RE.sub(lookup, text)


def expand_defines(
    directives: Sequence[RawDirective],
) -> tuple[list[Definition], list[RawDirective]]:
    """Evaluate DEFINEs in order and substitute ``$NAME`` everywhere after them.

    Positional ``$1``, ``$2``... are left alone.
    """
    env: dict[str, str] = {}
    definitions = []
    out = []
    for d in directives:
        if d.keyword == "DEFINE":
            name, raw = d.value
            if name in env:
                raise DuplicateDefinition(name, d.source, d.line)
            value = _substitute_variables(raw, env, d)
            env[name] = value
            definitions.append(Definition(name, value))
            out.append(replace(d, value=(name, value)))
        elif d.keyword == "CHECKOUT":
            out.append(replace(d, value=tuple(_substitute_variables(p, env, d) for p in d.value)))
        else:
            out.append(replace(d, value=_substitute_variables(d.value, env, d)))
    return definitions, out


def assemble_blocks(directives: Sequence[RawDirective], source_name: str | None = None) -> Document:
    """Group expanded directives into component blocks.

    TARGET, TYPE and URL stay in force until reassigned.  AUTH_URL,
    ANON_USER, ANON_PASS, REPO_PATH and NAME set for an earlier block are
    dropped as soon as a later block assigns a new URL; NAME additionally
    applies to the next CHECKOUT only.
    """
    if not directives or directives[0].keyword != "CRL_VERSION":
        raise MalformedDirective("component list must start with !CRL_VERSION", source_name, 1)
    version = directives[0].value
    if version != CRL_VERSION:
        raise UnsupportedVersion(
            f"CRL version {version} is not supported (expected {CRL_VERSION})",
            directives[0].source, directives[0].line)

    state: dict[str, object] = {}
    # number of CHECKOUTs seen when each repository-scoped directive was set
    set_in: dict[str, int] = {}
    generation = 0
    definitions = []
    blocks = []
    for d in directives[1:]:
        kw = d.keyword
        if kw == "CRL_VERSION":
            raise MalformedDirective("!CRL_VERSION may only appear once", d.source, d.line)
        if kw == "DEFINE":
            definitions.append(Definition(*d.value))
            continue
        if kw == "TYPE" and d.value not in VCS_TYPES:
            raise InvalidType(d.value, d.source, d.line)
        if kw == "URL":
            for key in _REPO_SCOPED:
                if key in state and set_in[key] < generation:
                    del state[key]
        if kw in ("URL", "AUTH_URL"):
            state[kw] = parse_location(d.value, d.origin)
        elif kw != "CHECKOUT":
            state[kw] = d.value
        if kw in _REPO_SCOPED:
            set_in[kw] = generation
        if kw != "CHECKOUT":
            continue

        for required in ("TARGET", "TYPE", "URL"):
            if required not in state:
                raise MissingRequiredDirective(required, d.source, d.line)
        vcs_type = state["TYPE"]
        anon_user, anon_pass = state.get("ANON_USER"), state.get("ANON_PASS")
        if (anon_user is None) != (anon_pass is None):
            raise OrphanAnonPass(
                "!ANON_USER and !ANON_PASS must be set together", d.source, d.line)
        if anon_user is not None and vcs_type != "cvs":
            raise AnonCredentialsWithoutCvs(
                f"!ANON_USER is only meaningful for cvs, not {vcs_type}", d.source, d.line)
        if "REPO_PATH" in state and vcs_type not in DVCS_WITH_REPO_PATH:
            raise RepoPathWithoutDvcs(
                f"!REPO_PATH requires a git or hg repository, not {vcs_type}",
                d.source, d.line)
        if "NAME" in state and len(d.value) > 1:
            raise AmbiguousName(
                "!NAME cannot rename a !CHECKOUT of several components", d.source, d.line)
        blocks.append(ComponentBlock(
            target=state["TARGET"],
            vcs_type=vcs_type,
            url=state["URL"],
            checkouts=tuple(d.value),
            auth_url=state.get("AUTH_URL"),
            anon_user=anon_user,
            anon_pass=anon_pass,
            repo_path=state.get("REPO_PATH"),
            name_override=state.pop("NAME", None),
            source=d.source,
            line=d.line,
        ))
        generation += 1
    sources = (source_name,) if source_name else ()
    return Document(version, tuple(definitions), tuple(blocks), sources)


def load_document(text: str, source_name: str = "<string>") -> Document:
    """Parse, expand and assemble one component list."""
    _, directives = expand_defines(parse(text, source_name))
    return assemble_blocks(directives, source_name)


def substitute_positional(template: str, component_path: str) -> str:
    """Replace ``$k`` with the k-th slash separated segment of ``component_path``."""
    segments = component_path.split("/")

    def segment(m: re.Match) -> str:
        k = int(m.group(1))
        if not 1 <= k <= len(segments):
            raise PositionalOutOfRange(k, component_path)
        return segments[k - 1]

    return _POSITIONAL_RE.sub(segment, template)


def effective_credential(block: ComponentBlock, credential: Credential) -> Credential:
    """Anonymous CVS access uses the block's anonymous user and password."""
    if credential.kind == "anonymous" and block.vcs_type == "cvs" and block.anon_user:
        return Credential.cvs_anon(block.anon_user, block.anon_pass)
    return credential


def resolve_tasks(
    document: Document,
    root_override: str | Path | None = None,
    anonymous: bool = False,
    auth_decisions: Sequence[Credential] | None = None,
) -> list[FetchTask]:
    """Expand every checkout path of every block into a :class:`FetchTask`.

    ``auth_decisions`` holds one credential per block; it may be omitted
    when ``anonymous`` is set.
    """
    root = Path(root_override) if root_override is not None else Path()
    tasks = []
    for index, block in enumerate(document.blocks):
        if anonymous or auth_decisions is None:
            credential = Credential.anonymous()
        else:
            credential = auth_decisions[index]
        credential = effective_credential(block, credential)
        location = block.url
        if credential.is_authenticated and block.auth_url is not None:
            location = block.auth_url
        for path in block.checkouts:
            try:
                url = substitute_positional(location.raw, path)
                extract = None
                if block.repo_path and block.vcs_type in DVCS_WITH_REPO_PATH:
                    extract = substitute_positional(block.repo_path, path)
            except PositionalOutOfRange as exc:
                raise PositionalOutOfRange(exc.index, path, block.source, block.line) from None
            tasks.append(FetchTask(
                component_path=path,
                resolved_url=url,
                destination=root / block.relative_destination(path),
                vcs_type=block.vcs_type,
                credentials=credential,
                repo_extract=extract,
                block_index=index,
            ))
    return tasks


def merge_documents(documents: Sequence[Document]) -> Document:
    """Concatenate documents, keeping the first component for each destination."""
    if not documents:
        return Document(CRL_VERSION)
    version = documents[0].crl_version
    seen: set[str] = set()
    definitions: list[Definition] = []
    blocks: list[ComponentBlock] = []
    sources: list[str] = []
    for doc in documents:
        if doc.crl_version != version:
            raise VersionMismatch(version, doc.crl_version)
        definitions.extend(doc.definitions)
        sources.extend(doc.source_names)
        for block in doc.blocks:
            keep = []
            for path in block.checkouts:
                key = block.relative_destination(path)
                if key not in seen:
                    seen.add(key)
                    keep.append(path)
            if keep:
                blocks.append(block if len(keep) == len(block.checkouts)
                              else replace(block, checkouts=tuple(keep)))
    return Document(version, tuple(definitions), tuple(blocks), tuple(sources))
