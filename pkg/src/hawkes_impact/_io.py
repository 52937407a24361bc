"""CSV files with a one-line JSON header.

Layout::

    # {"kind": "...", ...}
    col_a,col_b
    0.0,1.0
    ...
"""
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, default=_default, sort_keys=True)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_csv(header: dict, columns: dict) -> str:
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    lines = ["# " + dumps(header), ",".join(names)]
    for row in zip(*cols):
        lines.append(",".join(_fmt(x) for x in row))
    return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def write_csv(path, header: dict, columns: dict) -> None:
    atomic_write_text(path, format_csv(header, columns))


def read_csv(path):
    """Return ``(header, columns)``; numeric columns become float arrays."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing JSON header line")
        header = json.loads(first[1:].strip())
        names = fh.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    columns = {}
    for j, name in enumerate(names):
        raw = [r[j] for r in rows]
        try:
            columns[name] = np.array([float(x) for x in raw])
        except ValueError:
            columns[name] = np.array(raw, dtype=object)
    return header, columns
