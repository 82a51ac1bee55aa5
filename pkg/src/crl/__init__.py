"""Component Retrieval Language (CRL) parser and the GetComponents tool."""

from .parser import Location, RawDirective, RawLine, parse, parse_document, parse_location, scan
from .resolver import (
    ComponentBlock,
    Credential,
    Document,
    FetchTask,
    load_document,
    merge_documents,
    resolve_tasks,
    substitute_positional,
)

__version__ = "0.1.0"

__all__ = [
    "ComponentBlock",
    "Credential",
    "Document",
    "FetchTask",
    "Location",
    "RawDirective",
    "RawLine",
    "load_document",
    "merge_documents",
    "parse",
    "parse_document",
    "parse_location",
    "resolve_tasks",
    "scan",
    "substitute_positional",
]
