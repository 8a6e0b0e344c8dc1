"""Canonical JSON emission.

Every JSON artifact the package writes (reports, prompts, manifests,
ground-truth files) goes through :func:`dumps_canonical` so that repeated
runs on the same inputs produce byte-identical files: keys keep insertion
order, floats are rendered at 9 significant digits via ``format(x, '.9g')``,
and the layout (2-space indent) is fixed.
"""

import json
import math

import numpy as np

from .errors import InvariantError

_INDENT = "  "


def format_float(x):
    """Render a finite float at 9 significant digits as a JSON number."""
    x = float(x)
    if not math.isfinite(x):
        raise InvariantError(f"non-finite value in JSON output: {x!r}")
    return format(x, ".9g")


def _emit(obj, depth, out):
    pad = _INDENT * depth
    inner = _INDENT * (depth + 1)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            if not isinstance(k, str):
                raise InvariantError(f"non-string JSON key: {k!r}")
            out.append(f"{inner}{json.dumps(k)}: ")
            _emit(v, depth + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        items = list(obj)
        if not items:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(items):
            out.append(inner)
            _emit(v, depth + 1, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(pad + "]")
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(obj))
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), depth, out)
    else:
        raise InvariantError(f"unsupported JSON value type: {type(obj).__name__}")


def dumps_canonical(obj):
    """Serialize ``obj`` to deterministic, human-readable JSON text."""
    out = []
    _emit(obj, 0, out)
    out.append("\n")
    return "".join(out)


def write_canonical(path, obj):
    """Write canonical JSON to ``path`` (UTF-8, trailing newline)."""
    text = dumps_canonical(obj)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    return text
