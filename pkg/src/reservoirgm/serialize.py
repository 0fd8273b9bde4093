"""Deterministic JSON emission with fixed-precision decimal floats.

All on-disk JSON in this package goes through :func:`dumps` so that floats
are written with 17 significant digits (exact float64 round trip) and
identical inputs always produce identical bytes.
"""

import json
import math

import numpy as np


def _emit(obj, parts):
    if obj is None:
        parts.append("null")
    elif obj is True:
        parts.append("true")
    elif obj is False:
        parts.append("false")
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError("non-finite float in JSON payload: %r" % x)
        parts.append(format(x, ".17g"))
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), parts)
    elif isinstance(obj, dict):
        parts.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if not isinstance(k, str):
                raise TypeError("JSON object keys must be strings: %r" % (k,))
            if i:
                parts.append(", ")
            parts.append(json.dumps(k))
            parts.append(": ")
            _emit(v, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, v in enumerate(obj):
            if i:
                parts.append(", ")
            _emit(v, parts)
        parts.append("]")
    else:
        raise TypeError("cannot serialize %r" % type(obj))


def dumps(obj):
    """Serialize to a JSON string with 17-significant-digit floats."""
    parts = []
    _emit(obj, parts)
    return "".join(parts)


def dump(obj, path):
    with open(path, "w") as fh:
        fh.write(dumps(obj))
        fh.write("\n")


def load(path):
    with open(path) as fh:
        return json.load(fh)
