"""Tolerant JSON extraction from model output.

Models wrap JSON in prose and code fences, and sometimes emit single-quoted
pseudo-JSON. ``extract_json`` strips the wrapping, finds the first parseable
balanced object, and only attempts quote repair after a strict parse fails, so
already-valid output is never touched.
"""
from __future__ import annotations

import json
import re

_FENCE_RE = re.compile(r"^\s*```[\w-]*\s*$")


class ExtractError(ValueError):
    pass


class NoJsonFound(ExtractError):
    pass


class UnbalancedBraces(ExtractError):
    pass


def _strip_fences(text: str) -> str:
    return "\n".join(line for line in text.splitlines() if not _FENCE_RE.match(line))


def _balanced_end(text: str, start: int) -> int | None:
    """Index one past the brace that closes text[start] == '{', or None."""
    depth = 0
    quote: str | None = None
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if quote:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == quote:
                quote = None
            continue
        if ch in "'\"":
            quote = ch
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i + 1
    return None


def _repair_quotes(text: str) -> str:
    """Rewrite single-quoted strings as double-quoted JSON strings."""
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == '"':  # pass a double-quoted string through untouched
            j = i + 1
            while j < n:
                if text[j] == "\\":
                    j += 2
                    continue
                if text[j] == '"':
                    break
                j += 1
            out.append(text[i : min(j + 1, n)])
            i = j + 1
        elif ch == "'":
            j = i + 1
            buf: list[str] = []
            while j < n:
                if text[j] == "\\" and j + 1 < n and text[j + 1] == "'":
                    buf.append("'")
                    j += 2
                    continue
                if text[j] == "'":
                    break
                buf.append(text[j])
                j += 1
            out.append(json.dumps("".join(buf)))
            i = j + 1
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def extract_json(raw: str) -> dict:
    """Parse the first balanced JSON object found in `raw`.

    Raises :class:`NoJsonFound` when no parseable object exists (including the
    balanced-but-garbage case) and :class:`UnbalancedBraces` when an object
    opens but never closes.
    """
    text = _strip_fences(raw)
    saw_open = False
    saw_balanced = False
    pos = text.find("{")
    while pos != -1:
        saw_open = True
        end = _balanced_end(text, pos)
        if end is not None:
            saw_balanced = True
            candidate = text[pos:end]
            try:
                obj = json.loads(candidate)
            except json.JSONDecodeError:
                try:
                    obj = json.loads(_repair_quotes(candidate))
                except json.JSONDecodeError:
                    obj = None
            if isinstance(obj, dict):
                return obj
        pos = text.find("{", pos + 1)
    if saw_balanced:
        raise NoJsonFound("balanced braces found but no parseable object")
    if saw_open:
        raise UnbalancedBraces("object opened but never closed")
    raise NoJsonFound("no object in text")
