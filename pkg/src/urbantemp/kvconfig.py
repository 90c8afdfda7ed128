"""Flat `key = value` text files used for scenarios and CLI config."""

from __future__ import annotations

from pathlib import Path


class KvError(ValueError):
    """Raised for unparseable key-value text."""


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines; blank lines and #-comments are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise KvError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise KvError(f"line {lineno}: empty key")
        if key in out:
            raise KvError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def parse_kv_file(path: str | Path) -> dict[str, str]:
    return parse_kv_text(Path(path).read_text(encoding="utf-8"))


def format_kv(pairs: dict[str, str]) -> str:
    return "".join(f"{key} = {value}\n" for key, value in pairs.items())
