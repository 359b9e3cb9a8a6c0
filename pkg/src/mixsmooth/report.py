"""Canonical JSON and plain-text summaries for reports.

Canonical JSON sorts keys, writes every float with 17 significant digits and
maps non-finite floats to ``null``, so equal reports are byte-identical.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np


def _canon(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _canon(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return _Float(v) if math.isfinite(v) else None
    return obj


class _Float(float):
    def __repr__(self):
        text = format(float(self), ".17g")
        # Keep floats recognizable as floats after a round trip.
        return text if any(c in text for c in ".e") else text + ".0"


def _iterencode(o):
    if o is None:
        yield "null"
    elif o is True:
        yield "true"
    elif o is False:
        yield "false"
    elif isinstance(o, _Float):
        yield repr(o)
    elif isinstance(o, int):
        yield str(o)
    elif isinstance(o, str):
        yield json.dumps(o)
    elif isinstance(o, list):
        yield "["
        for i, v in enumerate(o):
            if i:
                yield ","
            yield from _iterencode(v)
        yield "]"
    elif isinstance(o, dict):
        yield "{"
        for i, k in enumerate(sorted(o)):
            if i:
                yield ","
            yield json.dumps(k)
            yield ":"
            yield from _iterencode(o[k])
        yield "}"
    else:
        raise TypeError(f"cannot serialize {type(o).__name__}")


def canonical_json(obj: Any) -> str:
    """Deterministic JSON text (no whitespace, trailing newline)."""
    return "".join(_iterencode(_canon(obj))) + "\n"


def format_table(header: list[str], rows: list[list[Any]]) -> str:
    cells = [[str(h) for h in header]] + [
        [format(v, ".6g") if isinstance(v, float) else str(v) for v in row] for row in rows
    ]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
