"""Stable JSON helpers: canonical dumps, atomic JSONL emission, tolerant object extraction.

Every file this package emits must be byte-reproducible, so all serialization
goes through :func:`canonical_dumps` (sorted keys, no insignificant whitespace).
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Iterable

from .errors import SchemaError


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_jsonl_atomic(path: str | Path, records: Iterable[dict]) -> int:
    """Write one canonical JSON object per line via a temp file + rename.

    On failure the partial temp file is removed; the destination is either the
    previous content or the complete new content, never a truncated mix.
    Returns the number of records written.
    """
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    count = 0
    try:
        with tmp.open("w", encoding="utf-8", newline="\n") as fh:
            for record in records:
                fh.write(canonical_dumps(record))
                fh.write("\n")
                count += 1
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    return count


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}: invalid JSON on line {lineno}: {exc}") from exc
    return out


def extract_first_json_object(text: str) -> dict:
    """Pull the first balanced, parseable JSON object out of surrounding prose.

    Scans brace depth while honoring string literals and escapes; candidate
    spans that fail to parse are skipped so a stray '{' in prose cannot mask a
    later well-formed object.
    """
    if not isinstance(text, str):
        raise SchemaError("expected text when searching for a JSON object")
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for idx in range(start, len(text)):
            ch = text[idx]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    candidate = text[start : idx + 1]
                    try:
                        obj = json.loads(candidate)
                    except json.JSONDecodeError:
                        break
                    if isinstance(obj, dict):
                        return obj
                    break
        start = text.find("{", start + 1)
    raise SchemaError("no JSON object found in reply", raw_text=text)
