"""Plain ``key = value`` configuration files shared by every subcommand.

Blank lines and ``#`` comments are ignored. Values are kept as strings by
:func:`parse_config`; :func:`fill_dataclass` converts them to the field
types of a dataclass (int, float, bool, str, or tuples of those).
"""
from __future__ import annotations

import dataclasses
import typing
from pathlib import Path
from typing import Any, Dict, Mapping

from .errors import DataError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_config(text: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise DataError(f"config line {lineno}: empty key")
        if key in out:
            raise DataError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path) -> Dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text)


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(format_value(v) for v in value)
    return str(value)


def format_config(values: Mapping[str, Any]) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in values.items())


def _convert(text: str, kind, key: str):
    origin = typing.get_origin(kind)
    if origin in (tuple, list):
        args = typing.get_args(kind)
        item = args[0] if args else str
        parts = [p.strip() for p in text.split(",") if p.strip()]
        return tuple(_convert(p, item, key) for p in parts)
    if origin is typing.Union:
        inner = [a for a in typing.get_args(kind) if a is not type(None)]
        if text.lower() in ("none", ""):
            return None
        return _convert(text, inner[0], key)
    try:
        if kind is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise DataError(f"config key {key!r}: cannot read {text!r} as {kind.__name__}") from None
    return text


def fill_dataclass(cls, values: Mapping[str, str], strict: bool = True):
    """Build ``cls`` from string values; unknown keys raise unless ``strict`` is False."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(values) - names
    if strict and unknown:
        raise DataError(f"unknown config keys for {cls.__name__}: {', '.join(sorted(unknown))}")
    kwargs = {k: _convert(v, hints[k], k) for k, v in values.items() if k in names}
    return cls(**kwargs)


def dataclass_to_config(obj) -> str:
    return format_config({f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)})
