"""Deterministic text serialization helpers shared by all output writers.

Numbers are rendered with 17 significant digits, which round-trips IEEE
doubles bit-exactly; all files are UTF-8 with LF line endings so reruns
of the same configuration produce byte-identical output.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Sequence

__all__ = ["fmt_float", "fmt_value", "jsonl_line", "write_csv", "write_text"]


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def fmt_value(v) -> str:
    """CSV cell: empty for None, 17-digit floats, plain ints/strings."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return fmt_float(v)
    return str(v)


def jsonl_line(record: dict) -> str:
    """One JSON object per line, floats at 17 significant digits."""
    parts = []
    for key, v in record.items():
        if v is None:
            rendered = "null"
        elif isinstance(v, bool):
            rendered = "true" if v else "false"
        elif isinstance(v, int):
            rendered = str(v)
        elif isinstance(v, float):
            rendered = fmt_float(v)
        else:
            rendered = json.dumps(str(v))
        parts.append(f"{json.dumps(key)}: {rendered}")
    return "{" + ", ".join(parts) + "}"


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_value(v) for v in row))
    write_text(path, "\n".join(lines) + "\n")
