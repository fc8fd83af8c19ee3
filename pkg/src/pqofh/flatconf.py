"""Flat ``key = value`` configuration files.

One format is shared by mock-KEM profiles, experiment matrices, traffic
profiles and CLI config files. ``#`` starts a comment; blank lines are
ignored; a key may appear only once.
"""
from __future__ import annotations

import os
from typing import Dict, Iterable, Union


class ConfigError(ValueError):
    pass


def parse_flat(text: str, source: str = "<string>") -> Dict[str, str]:
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_flat(path: Union[str, os.PathLike]) -> Dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_flat(fh.read(), source=str(path))


def reject_unknown(values: Dict[str, str], allowed: Iterable[str], source: str = "config") -> None:
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        raise ConfigError(f"{source}: unknown key(s): {', '.join(unknown)}")


def split_list(value: str) -> list:
    return [item.strip() for item in value.split(",") if item.strip()]
