"""JSON emission with fixed field order and 17-significant-digit floats.

The stdlib encoder formats floats with ``repr`` (shortest round-trip), which
does not honor the model-file contract of 17 significant digits, so model
files are written by this small emitter instead. Field order follows dict
insertion order; reading back uses plain ``json.load``.
"""

from __future__ import annotations

import json
import math
from typing import Any


def format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(float(x), ".17g")


def _emit(obj: Any, parts: list[str], indent: int, level: int) -> None:
    pad = " " * (indent * level)
    pad_in = " " * (indent * (level + 1))
    if obj is None:
        parts.append("null")
    elif isinstance(obj, bool):
        parts.append("true" if obj else "false")
    elif isinstance(obj, int):
        parts.append(str(obj))
    elif isinstance(obj, float):
        parts.append(format_float(obj))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            parts.append("{}")
            return
        parts.append("{\n")
        for i, (key, val) in enumerate(obj.items()):
            parts.append(f"{pad_in}{json.dumps(str(key))}: ")
            _emit(val, parts, indent, level + 1)
            parts.append(",\n" if i < len(obj) - 1 else "\n")
        parts.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        seq = list(obj)
        if not seq:
            parts.append("[]")
            return
        # Flat numeric rows stay on one line to keep matrices readable.
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in seq):
            inner = ", ".join(
                format_float(v) if isinstance(v, float) else str(v) for v in seq
            )
            parts.append(f"[{inner}]")
            return
        parts.append("[\n")
        for i, val in enumerate(seq):
            parts.append(pad_in)
            _emit(val, parts, indent, level + 1)
            parts.append(",\n" if i < len(seq) - 1 else "\n")
        parts.append(pad + "]")
    else:
        raise TypeError(f"cannot serialize object of type {type(obj)!r}")


def dumps(obj: Any, indent: int = 2) -> str:
    parts: list[str] = []
    _emit(obj, parts, indent, 0)
    parts.append("\n")
    return "".join(parts)


def dump(obj: Any, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))


def load(path) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
