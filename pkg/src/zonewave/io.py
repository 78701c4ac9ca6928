"""Grid specifications, deterministic JSON and CSV output."""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .mat2 import to_reals as mat2_row

__all__ = [
    "GridSpecError",
    "parse_grid",
    "parse_vector",
    "dumps",
    "write_json",
    "csv_text",
    "write_csv",
    "mat2_row",
    "MAT2_COLUMNS",
]

FLOAT_FORMAT = ".17g"


class GridSpecError(ValueError):
    pass


def parse_grid(spec: str, *, name: str = "grid") -> np.ndarray:
    """Parse ``log:a:b:n``, ``lin:a:b:n`` or a comma list into an increasing array.

    Raises
    ------
    GridSpecError
        If the spec is malformed, empty or not strictly increasing.
    """
    spec = spec.strip()
    try:
        if spec.startswith(("log:", "lin:")):
            kind, *rest = spec.split(":")
            if len(rest) != 3:
                raise GridSpecError(f"{name}: expected {kind}:start:stop:count, got {spec!r}")
            a, b, n = float(rest[0]), float(rest[1]), int(rest[2])
            if n < 1:
                raise GridSpecError(f"{name}: count must be positive in {spec!r}")
            if kind == "log":
                if a <= 0 or b <= 0:
                    raise GridSpecError(f"{name}: log grid needs positive endpoints, got {spec!r}")
                out = np.logspace(math.log10(a), math.log10(b), n)
                out[0], out[-1] = a, b
            else:
                out = np.linspace(a, b, n)
        else:
            out = np.array([float(x) for x in spec.split(",") if x.strip()], dtype=float)
    except ValueError as exc:
        if isinstance(exc, GridSpecError):
            raise
        raise GridSpecError(f"{name}: cannot parse {spec!r} (use log:a:b:n, lin:a:b:n or a comma list)") from None
    if out.size == 0:
        raise GridSpecError(f"{name}: empty grid {spec!r}")
    if not np.all(np.isfinite(out)):
        raise GridSpecError(f"{name}: non-finite value in {spec!r}")
    if np.any(np.diff(out) <= 0):
        raise GridSpecError(f"{name}: values must be strictly increasing in {spec!r}")
    return out


def parse_vector(spec: str, *, name: str = "vector") -> np.ndarray:
    """Comma list of (possibly complex, Python syntax) numbers."""
    try:
        return np.array([complex(x.strip().replace(" ", "")) for x in spec.split(",")], dtype=complex)
    except ValueError:
        raise GridSpecError(f"{name}: cannot parse {spec!r} as a comma list of numbers") from None


def _float_token(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, FLOAT_FORMAT)


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float_token(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return _encode([obj.real, obj.imag], indent, level)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, Path):
        return json.dumps(str(obj))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        parts = [_encode(v, indent, level + 1) for v in obj]
        if all(isinstance(v, (int, float, np.number, bool, str)) or v is None for v in obj):
            return "[" + ", ".join(parts) + "]"
        return "[\n" + ",\n".join(pad + p for p in parts) + "\n" + end + "]"
    if hasattr(obj, "to_dict"):
        return _encode(obj.to_dict(), indent, level)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON with every float written to 17 significant digits.

    Complex numbers become ``[re, im]`` pairs; non-finite floats become the
    strings ``"nan"``, ``"inf"``, ``"-inf"``. Key order is preserved.
    """
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


MAT2_COLUMNS = ["e11_re", "e11_im", "e12_re", "e12_im", "e21_re", "e21_im", "e22_re", "e22_im"]


def csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format(float(v), FLOAT_FORMAT) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows))
    return path
