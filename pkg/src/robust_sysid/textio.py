"""Plain-text columnar files for datasets, matrices and flat records.

Dataset file::

    # robust_sysid dataset n=3 m=2 p=2 T=5 N=10
    <m rows of inputs, T values each>      rollout 0
    <p rows of outputs, T values each>
    <m rows of inputs> ...                 rollout 1, and so on

Matrix file (one or more sections)::

    # robust_sysid matrix name=G rows=2 cols=10 m=2
    <rows lines of cols values>

Values are written with 17 significant digits so reading back is exact.
``n=0`` in a dataset header means the state dimension is unknown.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Mapping, Tuple

import numpy as np

from .errors import ConfigurationError
from .lti import Dataset

_MAGIC = "# robust_sysid"


def _fmt_row(values) -> str:
    return " ".join(format(float(v), ".17g") for v in values)


def _parse_header(line: str, kind: str) -> Dict[str, str]:
    tokens = line.split()
    if line[: len(_MAGIC)] != _MAGIC or len(tokens) < 3 or tokens[2] != kind:
        raise ConfigurationError(f"expected a '{_MAGIC} {kind}' header, got {line.strip()!r}")
    attrs = {}
    for tok in tokens[3:]:
        key, sep, value = tok.partition("=")
        if not sep:
            raise ConfigurationError(f"malformed header token {tok!r}")
        attrs[key] = value
    return attrs


def _int_attr(attrs, key):
    try:
        return int(attrs[key])
    except (KeyError, ValueError):
        raise ConfigurationError(f"header is missing integer field {key!r}") from None


def _read_rows(lines, count, width, where):
    if len(lines) < count:
        raise ConfigurationError(f"{where}: expected {count} rows, file ended early")
    rows = []
    for line in lines[:count]:
        try:
            vals = [float(x) for x in line.split()]
        except ValueError:
            raise ConfigurationError(f"{where}: non-numeric value in {line.strip()!r}") from None
        if len(vals) != width:
            raise ConfigurationError(f"{where}: expected {width} values, got {len(vals)}")
        rows.append(vals)
    return np.array(rows, dtype=float).reshape(count, width), lines[count:]


def dump_dataset(dataset: Dataset) -> str:
    n = dataset.n or 0
    out = [f"{_MAGIC} dataset n={n} m={dataset.m} p={dataset.p} T={dataset.T} N={dataset.N}"]
    for u, y in zip(dataset.inputs, dataset.outputs):
        out.extend(_fmt_row(row) for row in u)
        out.extend(_fmt_row(row) for row in y)
    return "\n".join(out) + "\n"


def load_dataset(text: str) -> Dataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigurationError("empty dataset file")
    attrs = _parse_header(lines[0], "dataset")
    n, m, p, T, N = (_int_attr(attrs, k) for k in ("n", "m", "p", "T", "N"))
    rest = lines[1:]
    u = np.empty((N, m, T))
    y = np.empty((N, p, T))
    for i in range(N):
        u[i], rest = _read_rows(rest, m, T, f"rollout {i} inputs")
        y[i], rest = _read_rows(rest, p, T, f"rollout {i} outputs")
    if rest:
        raise ConfigurationError(f"{len(rest)} unexpected trailing rows in dataset file")
    return Dataset(u, y, n=n or None)


def write_dataset(path, dataset: Dataset) -> None:
    Path(path).write_text(dump_dataset(dataset))


def read_dataset(path) -> Dataset:
    return load_dataset(Path(path).read_text())


def dump_matrices(sections: Mapping[str, np.ndarray], attrs: Mapping[str, Mapping] = None) -> str:
    attrs = attrs or {}
    out = []
    for name, mat in sections.items():
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        extra = "".join(f" {k}={v}" for k, v in attrs.get(name, {}).items())
        out.append(f"{_MAGIC} matrix name={name} rows={mat.shape[0]} cols={mat.shape[1]}{extra}")
        out.extend(_fmt_row(row) for row in mat)
    return "\n".join(out) + "\n"


def load_matrix_sections(text: str) -> Dict[str, Tuple[np.ndarray, Dict[str, str]]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    sections = {}
    while lines:
        attrs = _parse_header(lines[0], "matrix")
        name = attrs.pop("name", None)
        if not name:
            raise ConfigurationError("matrix section without a name")
        rows, cols = _int_attr(attrs, "rows"), _int_attr(attrs, "cols")
        del attrs["rows"], attrs["cols"]
        mat, lines = _read_rows(lines[1:], rows, cols, f"matrix {name}")
        sections[name] = (mat, attrs)
    return sections


def write_matrices(path, sections: Mapping[str, np.ndarray], attrs: Mapping[str, Mapping] = None) -> None:
    Path(path).write_text(dump_matrices(sections, attrs))


def read_matrix_sections(path):
    return load_matrix_sections(Path(path).read_text())


def read_matrices(path) -> Dict[str, np.ndarray]:
    return {k: v[0] for k, v in read_matrix_sections(path).items()}


def dump_record(record: Mapping) -> str:
    """Flat ``key = value`` lines, floats at full precision."""
    out = []
    for key, value in record.items():
        if isinstance(value, bool):
            text = str(value).lower()
        elif isinstance(value, float):
            text = format(value, ".17g")
        else:
            text = str(value)
        out.append(f"{key} = {text}")
    return "\n".join(out) + "\n"


def write_record(path, record: Mapping) -> None:
    Path(path).write_text(dump_record(record))


def read_record(path) -> Dict[str, str]:
    return parse_key_values(Path(path).read_text())


def parse_key_values(text: str) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        out[key.strip()] = value.strip()
    return out
