"""Integer tables, moves and the sign order on them.

Tables are stored flattened in row-major order (last index varying fastest),
which reproduces the vector printed for the job satisfaction data.  All
external multi-indices are 1-based; flat indices are 0-based.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

INT64_MAX = np.iinfo(np.int64).max

__all__ = [
    "Dims",
    "Table",
    "Move",
    "validate_dims",
    "cell_count",
    "flatten",
    "unflatten",
    "to_flat_index",
    "to_multi_index",
    "multi_indices",
    "marginal",
    "sign_order_leq",
    "conformal_decomposition_check",
    "canonical_sign",
]

Dims = tuple  # tuple[int, ...]


def validate_dims(levels: Iterable[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in levels)
    if len(dims) < 1:
        raise ValueError("a table needs at least one dimension")
    if any(d < 1 for d in dims):
        raise ValueError(f"levels must be positive, got {dims}")
    if cell_count(dims) > INT64_MAX:
        raise OverflowError(f"cell count of {dims} does not fit in 64 bits")
    return dims


def cell_count(dims: Sequence[int]) -> int:
    total = 1
    for d in dims:
        total *= int(d)
    return total


def _as_int_array(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype == object:
        flat = arr.ravel()
        if any(abs(int(x)) > INT64_MAX for x in flat):
            raise OverflowError("table entries exceed the 64-bit range")
        return arr.astype(np.int64)
    if arr.dtype.kind == "f":
        if not np.all(np.mod(arr, 1) == 0):
            raise ValueError("tables must have integer entries")
    elif arr.dtype.kind not in "iub":
        raise TypeError(f"cannot interpret dtype {arr.dtype} as integer table")
    return arr.astype(np.int64)


@dataclass(frozen=True, eq=False)
class Table:
    """A k-way integer table with its flattened cells.

    ``observed`` tables (data) must be nonnegative; relaxed-fiber points and
    moves are not.
    """

    dims: tuple[int, ...]
    cells: np.ndarray
    observed: bool = field(default=False)

    def __post_init__(self):
        dims = validate_dims(self.dims)
        cells = _as_int_array(self.cells).ravel().copy()
        if cells.size != cell_count(dims):
            raise ValueError(
                f"expected {cell_count(dims)} cells for dims {dims}, got {cells.size}"
            )
        if self.observed and np.any(cells < 0):
            raise ValueError("observed tables must be nonnegative")
        cells.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def from_array(cls, array, observed: bool = False):
        arr = np.asarray(array)
        return cls(arr.shape, arr.ravel(), observed=observed)

    def to_array(self) -> np.ndarray:
        return self.cells.reshape(self.dims)

    @property
    def size(self) -> int:
        return self.cells.size

    @property
    def total(self) -> int:
        return int(self.cells.sum())

    def __getitem__(self, index: Sequence[int]) -> int:
        return int(self.cells[to_flat_index(index, self.dims)])

    def __eq__(self, other):
        if not isinstance(other, Table):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash((self.dims, self.cells.tobytes()))

    def __repr__(self):
        return f"{type(self).__name__}(dims={self.dims}, cells={self.cells.tolist()})"


class Move(Table):
    """A zero-margin table.

    Use :meth:`checked` to verify membership in the kernel of a design matrix.
    """

    @classmethod
    def checked(cls, cells, design, dims=None) -> "Move":
        matrix = getattr(design, "matrix", design)
        if dims is None:
            dims = getattr(design, "dims", None) or (np.asarray(cells).size,)
        move = cls(dims, cells)
        if not np.any(move.cells):
            raise ValueError("the zero vector is not a move")
        if np.any(np.asarray(matrix, dtype=np.int64) @ move.cells):
            raise ValueError("vector is not in the integer kernel of the design matrix")
        return move

    @property
    def norm1(self) -> int:
        return int(np.abs(self.cells).sum())

    @property
    def norm_inf(self) -> int:
        return int(np.abs(self.cells).max(initial=0))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.cells)

    @property
    def positive_part(self) -> np.ndarray:
        return np.maximum(self.cells, 0)

    @property
    def negative_part(self) -> np.ndarray:
        return np.maximum(-self.cells, 0)


def flatten(array, dims: Sequence[int] | None = None) -> Table:
    """Flatten a k-way array into a :class:`Table` in row-major order."""
    arr = np.asarray(array)
    if dims is not None:
        dims = validate_dims(dims)
        if arr.shape != dims:
            raise ValueError(f"array shape {arr.shape} does not match dims {dims}")
    return Table(arr.shape, arr.ravel())


def unflatten(table: Table) -> np.ndarray:
    return table.to_array()


def to_flat_index(coords: Sequence[int], dims: Sequence[int]) -> int:
    """Row-major flat index (0-based) of a 1-based multi-index."""
    if len(coords) != len(dims):
        raise ValueError(f"multi-index {tuple(coords)} has wrong length for dims {tuple(dims)}")
    flat = 0
    for i, d in zip(coords, dims):
        if not 1 <= i <= d:
            raise IndexError(f"multi-index {tuple(coords)} out of range for dims {tuple(dims)}")
        flat = flat * d + (i - 1)
    return flat


def to_multi_index(flat: int, dims: Sequence[int]) -> tuple[int, ...]:
    if not 0 <= flat < cell_count(dims):
        raise IndexError(f"flat index {flat} out of range for dims {tuple(dims)}")
    coords = []
    for d in reversed(dims):
        flat, r = divmod(flat, d)
        coords.append(r + 1)
    return tuple(reversed(coords))


def multi_indices(dims: Sequence[int]):
    """All 1-based multi-indices in flattening order."""
    return itertools.product(*(range(1, d + 1) for d in dims))


def marginal(cells, dims: Sequence[int], face: Iterable[int]) -> np.ndarray:
    """Flattened marginal of a table over the 1-based coordinates in ``face``.

    The result is ordered row-major over the face coordinates sorted
    increasingly.  An empty face gives the grand total.
    """
    face = sorted(set(face))
    arr = np.asarray(cells).reshape(tuple(dims))
    drop = tuple(ax for ax in range(len(dims)) if ax + 1 not in face)
    return arr.sum(axis=drop).ravel() if drop else arr.ravel().copy()


def _vec(x) -> np.ndarray:
    return np.asarray(getattr(x, "cells", x), dtype=np.int64).ravel()


def sign_order_leq(x, y) -> bool:
    """``x ⊑ y``: |x_i| <= |y_i| and x_i * y_i >= 0 in every coordinate."""
    x, y = _vec(x), _vec(y)
    if x.shape != y.shape:
        raise ValueError("vectors must have the same length")
    return bool(np.all(x * y >= 0) and np.all(np.abs(x) <= np.abs(y)))


def conformal_decomposition_check(x, parts) -> bool:
    """True iff ``parts`` sum to ``x`` with no sign cancellation in any cell."""
    x = _vec(x)
    parts = [_vec(p) for p in parts]
    if not parts:
        return not np.any(x)
    stacked = np.vstack(parts)
    if stacked.shape[1] != x.size:
        raise ValueError("parts must have the same length as x")
    if not np.array_equal(stacked.sum(axis=0), x):
        return False
    # each nonzero part entry must agree in sign with x (so x is nonzero there)
    return bool(np.all(stacked * x >= 0) and np.all((stacked == 0) | (x != 0)))


def canonical_sign(v: np.ndarray) -> np.ndarray:
    """Representative of ``{v, -v}`` whose first nonzero entry is positive."""
    nz = np.flatnonzero(v)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v
