"""CSV output shared by every subcommand.

Files start with one ``#`` comment line (tool version and master seed),
followed by a header row and data rows. Floats are written in scientific
notation with 16 significant digits; ``None`` is written as an empty field
and means "no data".
"""

from __future__ import annotations

import csv
import io
import math
import numbers
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from . import __version__


def comment_line(seed: int) -> str:
    return f"# tweezer_transfer {__version__} seed={seed}"


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, str)):
        return str(value)
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        v = float(value)
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {v!r} in table")
        return f"{v:.15e}"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_csv(path, header: Sequence[str], rows, seed: int) -> Path:
    """Write ``rows`` under ``header``; raises OSError naming the path on failure."""
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    buf.write(comment_line(seed) + "\r\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        writer.writerow([_format(v) for v in row])
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _parse(field: str):
    if field == "":
        return None
    for cast in (int, float):
        try:
            return cast(field)
        except ValueError:
            pass
    return field


def read_csv(path) -> Tuple[List[str], List[List[Optional[object]]]]:
    """Inverse of :func:`write_csv`: (header, rows) with empty fields as None."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [[_parse(f) for f in row] for row in reader]
