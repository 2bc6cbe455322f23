"""Readers and writers for matrices, move files, tables and cell-index files.

Matrices and move sets use the 4ti2 layout: a header line with the two
dimensions followed by the entries row by row.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .tables import Table, cell_count, validate_dims

__all__ = [
    "format_matrix",
    "parse_matrix",
    "read_matrix",
    "write_matrix",
    "format_table_csv",
    "parse_table_csv",
    "format_table_vector",
    "parse_table_vector",
    "read_table",
    "write_table",
    "parse_index_file",
    "read_index_file",
    "format_index_file",
]


def _strip_comments(text: str) -> list[str]:
    return [ln.split("#", 1)[0] for ln in text.splitlines()]


def format_matrix(M) -> str:
    """4ti2 text: ``"m n"`` then one row per line."""
    arr = np.asarray(getattr(M, "matrix", getattr(M, "moves", M)), dtype=np.int64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    lines = [f"{arr.shape[0]} {arr.shape[1]}"]
    lines += [" ".join(str(int(x)) for x in row) for row in arr]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    tokens = " ".join(_strip_comments(text)).split()
    if len(tokens) < 2:
        raise ValueError("matrix file needs a 'rows cols' header")
    try:
        m, n = int(tokens[0]), int(tokens[1])
        body = [int(t) for t in tokens[2:]]
    except ValueError as exc:
        raise ValueError(f"non-integer entry in matrix file: {exc}") from None
    if m < 0 or n < 0:
        raise ValueError("negative matrix dimensions")
    if len(body) != m * n:
        raise ValueError(f"header announces {m}x{n} = {m * n} entries, found {len(body)}")
    return np.array(body, dtype=np.int64).reshape(m, n)


def read_matrix(path) -> np.ndarray:
    return parse_matrix(Path(path).read_text())


def write_matrix(path, M) -> None:
    Path(path).write_text(format_matrix(M))


def format_table_csv(table: Table) -> str:
    """One line per row of the last dimension; a ``# dims`` comment keeps k-way shape."""
    buf = io.StringIO()
    buf.write("# dims " + " ".join(str(d) for d in table.dims) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for row in table.cells.reshape(-1, table.dims[-1]):
        w.writerow(int(x) for x in row)
    return buf.getvalue()


def parse_table_csv(text: str, dims=None) -> Table:
    header_dims = None
    rows = []
    for ln in text.splitlines():
        s = ln.strip()
        if not s:
            continue
        if s.startswith("#"):
            parts = s[1:].split()
            if parts and parts[0] == "dims":
                header_dims = tuple(int(x) for x in parts[1:])
            continue
        rows.append([int(x) for x in next(csv.reader([s]))])
    if not rows:
        raise ValueError("empty table file")
    if len({len(r) for r in rows}) != 1:
        raise ValueError("rows of the CSV table have different lengths")
    cells = np.array(rows, dtype=np.int64)
    shape = tuple(dims) if dims is not None else header_dims or cells.shape
    shape = validate_dims(shape)
    if cell_count(shape) != cells.size or shape[-1] != cells.shape[1]:
        raise ValueError(f"CSV shape {cells.shape} does not match dims {shape}")
    return Table(shape, cells.ravel())


def format_table_vector(table: Table) -> str:
    head = f"{len(table.dims)} " + " ".join(str(d) for d in table.dims)
    return head + "\n" + " ".join(str(int(x)) for x in table.cells) + "\n"


def parse_table_vector(text: str) -> Table:
    tokens = " ".join(_strip_comments(text)).split()
    if not tokens:
        raise ValueError("empty table file")
    k = int(tokens[0])
    dims = validate_dims(int(t) for t in tokens[1:1 + k])
    if len(dims) != k:
        raise ValueError("dims header is truncated")
    body = [int(t) for t in tokens[1 + k:]]
    if len(body) != cell_count(dims):
        raise ValueError(f"expected {cell_count(dims)} cells, found {len(body)}")
    return Table(dims, np.array(body, dtype=np.int64))


def read_table(path, dims=None) -> Table:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".csv":
        return parse_table_csv(text, dims)
    return parse_table_vector(text)


def write_table(path, table: Table) -> None:
    path = Path(path)
    text = format_table_csv(table) if path.suffix.lower() == ".csv" else format_table_vector(table)
    path.write_text(text)


def parse_index_file(text: str, dims=None) -> frozenset:
    """One 1-based multi-index per line, separated by spaces or commas."""
    cells = set()
    for lineno, ln in enumerate(_strip_comments(text), 1):
        s = ln.replace(",", " ").split()
        if not s:
            continue
        idx = tuple(int(x) for x in s)
        if dims is not None:
            if len(idx) != len(dims) or any(not 1 <= i <= d for i, d in zip(idx, dims)):
                raise ValueError(f"line {lineno}: index {idx} out of range for dims {tuple(dims)}")
        cells.add(idx)
    return frozenset(cells)


def read_index_file(path, dims=None) -> frozenset:
    return parse_index_file(Path(path).read_text(), dims)


def format_index_file(cells) -> str:
    return "".join(" ".join(str(i) for i in c) + "\n" for c in sorted(cells))
