"""Flat ``key=value`` configuration files.

One setting per line, ``#`` starts a comment, blank lines are ignored.
Values are converted to the type annotated on the target dataclass field.
"""

from __future__ import annotations

import dataclasses
import typing
from pathlib import Path
from typing import Any, Mapping, TypeVar


class ConfigError(ValueError):
    """Raised for malformed or invalid configuration."""


T = TypeVar("T")


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv(path: str | Path) -> dict[str, str]:
    return parse_kv(Path(path).read_text(encoding="utf-8"))


def _convert(value: str, kind: Any, key: str) -> Any:
    try:
        if kind is bool:
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind is int:
            return int(float(value)) if "e" in value.lower() else int(value)
        if kind is float:
            return float(value)
        if kind is str:
            # allow escapes such as \n in seed strings
            return value.encode("utf-8").decode("unicode_escape")
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind.__name__}") from exc
    raise ConfigError(f"{key}: unsupported field type {kind!r}")


def from_mapping(cls: type[T], mapping: Mapping[str, str], *, ignore: tuple[str, ...] = ()) -> T:
    """Build dataclass ``cls`` from string values, rejecting unknown keys."""
    hints = typing.get_type_hints(cls)
    fields = {f.name for f in dataclasses.fields(cls)}  # type: ignore[arg-type]
    kwargs = {}
    for key, value in mapping.items():
        if key in ignore:
            continue
        if key not in fields:
            raise ConfigError(f"unknown configuration key {key!r}")
        kwargs[key] = _convert(value, hints[key], key)
    return cls(**kwargs)


def to_kv(obj: Any) -> str:
    lines = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, str):
            value = value.encode("unicode_escape").decode("ascii")
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"
