"""Flat ``key = value`` text configs."""
from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines. ``#`` starts a comment; later keys override earlier ones."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}: line {lineno}: expected key = value, got {raw.strip()!r}")
        out[key.strip()] = value.strip()
    return out


def read_kv(path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_kv(path.read_text(encoding="utf-8"), str(path))


def format_kv(kv: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in kv.items())


def split_list(value: str) -> list[str]:
    return [v.strip() for v in str(value).split(",") if v.strip()]
