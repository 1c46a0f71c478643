"""Line-oriented ``key = value`` reports and comma-separated tables.

Reports carry a schema line and no timestamps, so identical inputs give identical
bytes.  Floats are written with ``repr`` (shortest round-trip form).
"""

from __future__ import annotations

import io
import math
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigParseError

SCHEMA = "levyexit-report/1"


def fmt(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, str):
        if "\n" in v:
            raise ValueError("report values must be single-line")
        return v
    if isinstance(v, np.ndarray):
        v = v.ravel().tolist()
    if isinstance(v, (list, tuple)):
        return ", ".join(fmt(x) for x in v)
    raise TypeError(f"cannot format {type(v).__name__} in a report")


def dumps(kind: str, fields: Mapping[str, Any]) -> str:
    out = io.StringIO()
    out.write(f"schema = {SCHEMA}\n")
    out.write(f"kind = {kind}\n")
    for k, v in fields.items():
        if "=" in k or k.strip() != k or not k:
            raise ValueError(f"bad report key {k!r}")
        out.write(f"{k} = {fmt(v)}\n")
    return out.getvalue()


def loads(text: str) -> dict[str, str]:
    """Parse a report into raw string values; checks the schema line."""
    fields: dict[str, str] = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if " = " not in line and not line.rstrip().endswith(" ="):
            raise ConfigParseError(f"line {lineno}: expected 'key = value'", line=lineno)
        key, _, value = line.partition(" = ") if " = " in line else (line.rstrip()[:-2], "", "")
        key = key.strip()
        if key in fields:
            raise ConfigParseError(f"line {lineno}: duplicate key {key!r}", key=key, line=lineno)
        fields[key] = value.strip()
    if fields.get("schema") != SCHEMA:
        raise ConfigParseError(f"unsupported report schema {fields.get('schema')!r}", key="schema")
    return fields


def parse_value(s: str) -> Any:
    """Best-effort inverse of :func:`fmt` for scalars and lists of numbers."""
    s = s.strip()
    if s in ("none", ""):
        return None
    if s in ("true", "false"):
        return s == "true"
    if "," in s:
        return [parse_value(p) for p in s.split(",")]
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(fmt(v) for v in row) + "\n")
    return out.getvalue()


def write_text(path, text: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)
