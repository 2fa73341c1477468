"""Minimal deterministic TOML reading/writing.

Reading delegates to tomllib/tomli. Writing covers exactly the subset the
tool emits: string/bool/int/float scalars, flat and nested arrays (matrices
as row-major nested arrays of decimal literals), tables and arrays of
tables. Floats are printed with 17 significant digits so values round-trip
bit-exactly and output bytes are reproducible.
"""

from __future__ import annotations

try:
    import tomllib as _toml
except ModuleNotFoundError:  # Python < 3.11
    import tomli as _toml


def load(path) -> dict:
    with open(path, "rb") as fh:
        return _toml.load(fh)


def loads(text: str) -> dict:
    return _toml.loads(text)


def format_real(v: float) -> str:
    """17-significant-digit decimal literal, always a TOML float."""
    s = f"{float(v):.17g}"
    if "." not in s and "e" not in s and "n" not in s and "i" not in s:
        s += ".0"
    return s


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format_real(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _emit_table(lines: list[str], table: dict, prefix: str) -> None:
    scalars = {k: v for k, v in table.items() if not isinstance(v, (dict, list))
               or (isinstance(v, list) and not all(isinstance(x, dict) for x in v) or v == [])}
    subtables = {k: v for k, v in table.items() if isinstance(v, dict)}
    table_arrays = {k: v for k, v in table.items()
                    if isinstance(v, list) and v and all(isinstance(x, dict) for x in v)}
    for k, v in scalars.items():
        lines.append(f"{k} = {_fmt_value(v)}")
    for k, v in subtables.items():
        name = f"{prefix}.{k}" if prefix else k
        lines.append("")
        lines.append(f"[{name}]")
        _emit_table(lines, v, name)
    for k, entries in table_arrays.items():
        name = f"{prefix}.{k}" if prefix else k
        for entry in entries:
            lines.append("")
            lines.append(f"[[{name}]]")
            _emit_table(lines, entry, name)


def dumps(data: dict) -> str:
    lines: list[str] = []
    _emit_table(lines, data, "")
    return "\n".join(lines) + "\n"


def dump(data: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(data))


def matrix_to_rows(m) -> list[list[float]]:
    return [[float(x) for x in row] for row in m]
