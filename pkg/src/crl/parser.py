"""Scanner and parser for CRL component lists.

A list is line oriented.  Every directive line starts with ``!``::

    !CRL_VERSION = 1.0
    !DEFINE ROOT = Cactus
    !TARGET   = $ROOT/arrangements
    !CHECKOUT =
    CactusBase/Boundary
    CactusBase/Time

The parser only checks syntax; ``$`` variables are kept verbatim and are
expanded by :mod:`crl.resolver`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Union

from .errors import (
    EmptyCheckout,
    MalformedDirective,
    MalformedLocation,
    MissingVersionHeader,
    UnknownDirective,
)

KEYWORDS = (
    "CRL_VERSION",
    "DEFINE",
    "TARGET",
    "TYPE",
    "URL",
    "AUTH_URL",
    "ANON_USER",
    "ANON_PASS",
    "REPO_PATH",
    "CHECKOUT",
    "NAME",
)

# value classes by grammar production
NAME_DIRECTIVES = frozenset({"CRL_VERSION", "ANON_USER", "TYPE"})
LOC_DIRECTIVES = frozenset({"URL", "AUTH_URL"})
PATH_DIRECTIVES = frozenset({"TARGET", "REPO_PATH", "ANON_PASS", "NAME"})

_PATH_EXTRA = frozenset("_-$")
_DIRECTIVE_RE = re.compile(r"!([^\s=]*)\s*(.*)\Z")
_DEFINE_RE = re.compile(r"([^\s=]+)\s*=\s*(.*)\Z")

_PSERVER_RE = re.compile(r":pserver:(\S+)\Z")
_SCHEME_RE = re.compile(r"([A-Za-z0-9.+-]+)://(\S+)\Z")
_USER_HOST_RE = re.compile(r"([A-Za-z0-9._-]+)@([A-Za-z0-9._$-]+):(\S+)\Z")


@dataclass(frozen=True)
class RawLine:
    source_name: str
    line_number: int
    content: str


Value = Union[str, "tuple[str, str]", "tuple[str, ...]"]


@dataclass(frozen=True)
class RawDirective:
    """One ``!KEYWORD = value`` statement.

    ``value`` is a ``(name, value)`` pair for DEFINE and a tuple of component
    paths for CHECKOUT; a plain string otherwise.  ``origin`` does not take
    part in comparisons, so re-parsed lists compare equal to the original.
    """

    keyword: str
    value: Value
    origin: RawLine | None = field(default=None, compare=False)

    @property
    def line(self) -> int | None:
        return self.origin.line_number if self.origin else None

    @property
    def source(self) -> str | None:
        return self.origin.source_name if self.origin else None


@dataclass(frozen=True)
class Location:
    """A decomposed repository location.

    ``form`` is ``"pserver"``, ``"scheme_url"`` or ``"user_host_path"``;
    only the fields of that form are set.
    """

    form: str
    raw: str
    path: str
    scheme: str | None = None
    user: str | None = None
    host: str | None = None

    def __str__(self) -> str:
        return self.raw


def scan(text: str, source_name: str = "<string>") -> list[RawLine]:
    """Strip comments and blank lines, keeping original line numbers."""
    lines = []
    for number, line in enumerate(text.split("\n"), start=1):
        content = line.split("#", 1)[0].strip()
        if content:
            lines.append(RawLine(source_name, number, content))
    return lines


def validate_name(value: str) -> bool:
    """True for a non-empty run of ASCII letters, digits, ``.`` and ``_``."""
    return bool(value) and all(
        (c.isascii() and c.isalnum()) or c in "._" for c in value)


def _is_segment(value: str) -> bool:
    return validate_name(value.replace("-", ".").replace("$", "."))


def is_path(value: str) -> bool:
    """True if ``value`` is a slash separated PATH (optionally absolute)."""
    if value.startswith("/"):
        value = value[1:]
    return bool(value) and all(_is_segment(s) for s in value.split("/"))


def parse_location(value: str, origin: RawLine | None = None) -> Location:
    """Decompose a repository location by the first matching form."""
    source = origin.source_name if origin else None
    line = origin.line_number if origin else None
    m = _PSERVER_RE.match(value)
    if m:
        return Location("pserver", value, path=m.group(1))
    m = _SCHEME_RE.match(value)
    if m:
        return Location("scheme_url", value, path=m.group(2), scheme=m.group(1))
    m = _USER_HOST_RE.match(value)
    if m:
        return Location("user_host_path", value, path=m.group(3),
                        user=m.group(1), host=m.group(2))
    raise MalformedLocation(value, source, line)


def _is_directive(line: RawLine) -> bool:
    return line.content.startswith("!")


def _check_value(keyword: str, value: str, origin: RawLine) -> None:
    if keyword in NAME_DIRECTIVES:
        ok = validate_name(value)
    elif keyword in LOC_DIRECTIVES:
        parse_location(value, origin)
        return
    else:
        ok = is_path(value)
    if not ok:
        raise MalformedDirective(
            f"invalid value {value!r} for !{keyword}", origin.source_name, origin.line_number)


def parse_document(lines: list[RawLine]) -> list[RawDirective]:
    """Turn scanned lines into directives.

    A CHECKOUT swallows every following non-directive line.  Any other
    directive whose value is empty takes its value from the next line when
    that line is not itself a directive, as in lists wrapped for width.
    """
    directives: list[RawDirective] = []
    i = 0
    while i < len(lines):
        origin = lines[i]
        i += 1
        src, num = origin.source_name, origin.line_number
        if not _is_directive(origin):
            if not directives:
                raise MissingVersionHeader(
                    "component list must start with !CRL_VERSION", src, num)
            raise MalformedDirective(f"unexpected text {origin.content!r}", src, num)

        m = _DIRECTIVE_RE.match(origin.content)
        keyword, rest = m.group(1), m.group(2)
        if keyword not in KEYWORDS:
            raise UnknownDirective(f"unknown directive !{keyword}", src, num)
        if not directives and keyword != "CRL_VERSION":
            raise MissingVersionHeader(
                f"first directive is !{keyword}, expected !CRL_VERSION", src, num)

        name = None
        if keyword == "DEFINE":
            dm = _DEFINE_RE.match(rest)
            if dm is None:
                raise MalformedDirective("expected !DEFINE NAME = value", src, num)
            name, value = dm.group(1), dm.group(2)
            if not validate_name(name):
                raise MalformedDirective(f"invalid variable name {name!r}", src, num)
        elif rest.startswith("="):
            value = rest[1:].strip()
        else:
            raise MalformedDirective(f"expected '=' after !{keyword}", src, num)

        if keyword == "CHECKOUT":
            paths = [value] if value else []
            while i < len(lines) and not _is_directive(lines[i]):
                paths.append(lines[i].content)
                i += 1
            if not paths:
                raise EmptyCheckout("!CHECKOUT lists no components", src, num)
            for path in paths:
                if not is_path(path):
                    raise MalformedDirective(f"invalid component path {path!r}", src, num)
            directives.append(RawDirective(keyword, tuple(paths), origin))
            continue

        if not value and i < len(lines) and not _is_directive(lines[i]):
            value = lines[i].content
            i += 1
        if not value:
            raise MalformedDirective(f"!{keyword} requires a value", src, num)
        _check_value("DEFINE" if name else keyword, value, origin)
        directives.append(RawDirective(keyword, (name, value) if name else value, origin))
    return directives


def parse(text: str, source_name: str = "<string>") -> list[RawDirective]:
    """Scan and parse a whole component list."""
    return parse_document(scan(text, source_name))


def format_directives(directives: Iterable[RawDirective]) -> str:
    """Serialize directives back to CRL text."""
    out = []
    for d in directives:
        if d.keyword == "DEFINE":
            name, value = d.value
            out.append(f"!DEFINE {name} = {value}")
        elif d.keyword == "CHECKOUT":
            out.append("!CHECKOUT =")
            out.extend(d.value)
        else:
            out.append(f"!{d.keyword} = {d.value}")
    return "\n".join(out) + "\n"
