"""Per-block credential selection and the persistent users file.

The users file maps an AUTH_URL to the username used for it, one record
per line::

    https://svn.cactuscode.org/arrangements/$1/$2/trunk jdoe
    carpetgit@carpetcode.dyndns.org:McLachlan -

``-`` records a deliberate choice of anonymous access.  Passwords are
never read or stored here; they stay with the retrieval tools.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Callable

from .errors import IoFailure, LoginFailed, PromptUnavailable
from .resolver import ComponentBlock, Credential

log = logging.getLogger(__name__)

ANONYMOUS = "-"
USERS_ENV = "CRL_USERS"

Prompt = Callable[[str], str]


def default_users_path() -> Path:
    override = os.environ.get(USERS_ENV)
    if override:
        return Path(override)
    return Path.home() / ".crl" / "users"


class UsersFile:
    """In-memory view of the users file; every change is saved immediately."""

    def __init__(self, path: str | Path | None = None, records: dict[str, str] | None = None):
        self.path = Path(path) if path is not None else default_users_path()
        self.records: dict[str, str] = dict(records or {})

    @classmethod
    def load(cls, path: str | Path | None = None) -> UsersFile:
        store = cls(path)
        try:
            text = store.path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return store
        except OSError as exc:
            raise IoFailure(store.path, exc) from exc
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            key, _, identity = line.rpartition(" ")
            if key:
                store.records.setdefault(key.strip(), identity)
        return store

    def save(self) -> None:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", encoding="utf-8", newline="\n") as fh:
                for key, identity in self.records.items():
                    fh.write(f"{key} {identity}\n")
        except OSError as exc:
            raise IoFailure(self.path, exc) from exc

    def lookup(self, url_key: str) -> str | None:
        return self.records.get(url_key)

    def remember(self, url_key: str, identity: str) -> None:
        if url_key in self.records:
            return
        self.records[url_key] = identity
        self.save()

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, url_key: str) -> bool:
        return url_key in self.records


def _identity_to_credential(identity: str) -> Credential:
    if identity == ANONYMOUS:
        return Credential.anonymous()
    return Credential.user(identity)


def decide(
    block: ComponentBlock,
    store: UsersFile,
    anonymous_flag: bool = False,
    prompt: Prompt | None = None,
) -> Credential:
    """Choose anonymous or authenticated access for one component block.

    Prompts only when the block has an AUTH_URL that the users file does
    not know yet; the answer is stored so the next run is silent.
    """
    if anonymous_flag or block.auth_url is None:
        return Credential.anonymous()
    key = block.auth_url.raw
    identity = store.lookup(key)
    if identity is not None:
        return _identity_to_credential(identity)
    if prompt is None:
        raise PromptUnavailable(f"a username is needed for {key}")
    answer = ""
    for _ in range(3):
        answer = prompt(key).strip()
        if answer:
            break
    else:
        raise PromptUnavailable(f"no username given for {key}")
    store.remember(key, answer)
    return _identity_to_credential(answer)


def login_if_needed(block: ComponentBlock, credential: Credential, backend, ctx=None) -> object | None:
    """Run the backend's explicit login step, if it has one.

    Returns the login trace, or None when nothing had to be done.
    """
    login = getattr(backend, "login", None)
    if login is None or credential.kind == "anonymous":
        return None
    trace = login(block, credential, ctx)
    if trace is not None and trace.outcome != 0:
        raise LoginFailed(block.url.raw, trace.captured_output, trace.argv)
    return trace


def reset(store: UsersFile | str | Path | None = None) -> None:
    """Delete the users file so that every AUTH_URL is asked for again."""
    if isinstance(store, UsersFile):
        path = store.path
        store.records.clear()
    else:
        path = Path(store) if store is not None else default_users_path()
    try:
        path.unlink()
    except FileNotFoundError:
        pass
    except OSError as exc:
        raise IoFailure(path, exc) from exc
    log.debug("removed %s", path)
