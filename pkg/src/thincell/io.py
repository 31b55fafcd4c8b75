"""CSV and JSON output with run-metadata headers; spectrum CSV input.

Every CSV starts with a ``#`` comment block (tool version, subcommand, config
digest), then one comma-separated header row whose names carry the units, then
data rows. Floats are written with 17 significant digits, so reading a file
back reproduces the doubles exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .lineshape import Spectrum

__all__ = ["write_csv", "read_csv", "read_spectrum_csv", "write_json", "sha256_file", "json_safe"]


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, columns: Sequence[str], data: Sequence[Sequence], header: Mapping[str, str]) -> Path:
    """Write column arrays ``data`` under names ``columns``."""
    path = Path(path)
    cols = [np.asarray(c) if not isinstance(c, list) else c for c in data]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("all columns must have the same length")
    lines = [f"# {k}: {v}" for k, v in header.items()]
    lines.append(",".join(columns))
    for i in range(n):
        lines.append(",".join(_fmt(c[i]) for c in cols))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Return (header dict, column names, {name: list of strings})."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {str(path)!r}: {exc.strerror}") from exc
    header, names, rows = {}, None, []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                k, v = body.split(":", 1)
                header[k.strip()] = v.strip()
            continue
        fields = [f.strip() for f in line.split(",")]
        if names is None:
            names = fields
        else:
            if len(fields) != len(names):
                raise ConfigError(f"{str(path)!r}: row has {len(fields)} fields, expected {len(names)}")
            rows.append(fields)
    if names is None:
        raise ConfigError(f"{str(path)!r}: no header row")
    table = {name: [r[i] for r in rows] for i, name in enumerate(names)}
    return header, names, table


def read_spectrum_csv(path) -> Spectrum:
    """Load ``B_tesla`` with ``phi`` or ``phi_mean`` (+ optional ``phi_stderr``)."""
    header, names, table = read_csv(path)
    if "B_tesla" not in table:
        raise ConfigError(f"{str(path)!r}: missing column B_tesla")
    ycol = "phi" if "phi" in table else "phi_mean" if "phi_mean" in table else None
    if ycol is None:
        raise ConfigError(f"{str(path)!r}: need a phi or phi_mean column")
    try:
        B = np.array([float(x) for x in table["B_tesla"]])
        y = np.array([float(x) for x in table[ycol]])
        err = np.array([float(x) for x in table["phi_stderr"]]) if "phi_stderr" in table else None
    except ValueError as exc:
        raise ConfigError(f"{str(path)!r}: non-numeric entry: {exc}") from exc
    return Spectrum(B, y, err, {"source": str(path), **header})


def json_safe(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, Mapping):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [json_safe(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(json_safe(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
