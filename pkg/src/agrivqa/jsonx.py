"""Extraction of JSON objects embedded in free-form model replies."""

from __future__ import annotations

import json
from typing import Any

from .errors import ReplyParseError


def balanced_objects(text: str) -> list[str]:
    """All top-level balanced {...} slices of the text, in order.

    Brace counting is string-aware so braces inside JSON strings do not
    confuse the scan.
    """
    slices: list[str] = []
    depth = 0
    start = -1
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            if depth > 0:
                in_string = True
            continue
        if ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0:
                    slices.append(text[start : i + 1])
    return slices


def extract_object(text: str, required_key: str | None = None) -> dict[str, Any]:
    """First parseable JSON object in the reply (holding required_key if given).

    Model replies often wrap the object in prose or markdown fences; the
    first balanced block that parses (and carries the key) wins.
    """
    for candidate in balanced_objects(text):
        try:
            obj = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if not isinstance(obj, dict):
            continue
        if required_key is None or required_key in obj:
            return obj
    wanted = f" with key {required_key!r}" if required_key else ""
    raise ReplyParseError(f"no JSON object{wanted} found in reply: {text[:120]!r}")
