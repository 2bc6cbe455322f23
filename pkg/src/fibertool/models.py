"""Design matrices of hierarchical log-linear models and related families."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tables import cell_count, marginal, multi_indices, to_flat_index, validate_dims

__all__ = [
    "SimplicialComplex",
    "DesignMatrix",
    "NFoldDecomposition",
    "hierarchical_design_matrix",
    "independence_matrix",
    "no_three_way_matrix",
    "lawrence_lifting",
    "a_family_matrix",
    "nfold_matrix",
    "nfold_block_decomposition",
    "table_margins",
    "enumerate_complexes",
]


@dataclass(frozen=True)
class SimplicialComplex:
    """Hierarchical model described by its maximal faces (1-based vertices)."""

    ground_size: int
    faces: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        faces = tuple(tuple(sorted(set(int(v) for v in f))) for f in self.faces)
        if not faces:
            raise ValueError("a simplicial complex needs at least one face")
        for f in faces:
            if not f:
                raise ValueError("faces must be nonempty")
            if f[0] < 1 or f[-1] > self.ground_size:
                raise ValueError(f"face {f} out of range for ground set of size {self.ground_size}")
        for a, b in itertools.permutations(range(len(faces)), 2):
            if set(faces[a]) <= set(faces[b]):
                raise ValueError(f"face {faces[a]} is contained in face {faces[b]}")
        object.__setattr__(self, "faces", faces)

    @classmethod
    def parse(cls, text: str, ground_size: int | None = None) -> "SimplicialComplex":
        """Parse ``"12,23,13"`` (digit-string faces) or a JSON list of lists."""
        text = text.strip()
        if text.startswith("["):
            faces = [tuple(f) for f in json.loads(text)]
        else:
            faces = []
            for pos, token in _tokens_with_pos(text, ","):
                if not token.isdigit():
                    raise ValueError(f"bad face {token!r} at position {pos}")
                faces.append(tuple(int(c) for c in token))
        if ground_size is None:
            ground_size = max(v for f in faces for v in f)
        return cls(ground_size, tuple(faces))

    def __str__(self):
        if self.ground_size <= 9:
            return ",".join("".join(map(str, f)) for f in self.faces)
        return json.dumps([list(f) for f in self.faces])


def _tokens_with_pos(text: str, sep: str):
    pos = 0
    for token in text.split(sep):
        yield pos, token.strip()
        pos += len(token) + len(sep)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Integer matrix A with one label per row; t(u) = A u."""

    matrix: np.ndarray
    row_labels: tuple = ()
    dims: tuple[int, ...] | None = None
    complex: SimplicialComplex | None = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        mat = np.asarray(self.matrix)
        if mat.ndim != 2:
            raise ValueError("design matrix must be two-dimensional")
        mat = mat.astype(np.int64, copy=True)
        mat.setflags(write=False)
        labels = tuple(self.row_labels) or tuple(range(mat.shape[0]))
        if len(labels) != mat.shape[0]:
            raise ValueError("need one label per row")
        if self.dims is not None and cell_count(self.dims) != mat.shape[1]:
            raise ValueError(f"dims {self.dims} do not match {mat.shape[1]} columns")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "row_labels", labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def margins(self, u) -> np.ndarray:
        return self.matrix @ np.asarray(getattr(u, "cells", u), dtype=np.int64).ravel()

    def __matmul__(self, other):
        return self.matrix @ np.asarray(getattr(other, "cells", other))

    def __eq__(self, other):
        if isinstance(other, DesignMatrix):
            other = other.matrix
        return np.array_equal(self.matrix, np.asarray(other))

    __hash__ = None

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"<DesignMatrix{tag} {self.rows}x{self.cols}>"


def as_matrix(A) -> np.ndarray:
    return np.asarray(getattr(A, "matrix", A), dtype=np.int64)


def _face_matrix(face: Sequence[int], dims: tuple[int, ...]):
    """Rows of the marginal map for one face, in row-major order over the face."""
    face = tuple(sorted(face))
    face_dims = tuple(dims[v - 1] for v in face)
    n_rows = cell_count(face_dims)
    block = np.zeros((n_rows, cell_count(dims)), dtype=np.int64)
    for col, idx in enumerate(multi_indices(dims)):
        sub = tuple(idx[v - 1] for v in face)
        block[to_flat_index(sub, face_dims) if face else 0, col] = 1
    labels = list(multi_indices(face_dims)) if face else [()]
    return block, labels


def hierarchical_design_matrix(complex: SimplicialComplex, dims) -> DesignMatrix:
    """Stack the face marginal maps of ``complex`` for a table of shape ``dims``."""
    dims = validate_dims(dims)
    if complex.ground_size != len(dims):
        raise ValueError(
            f"complex on {complex.ground_size} vertices does not match {len(dims)}-way dims"
        )
    return _faces_design(complex.faces, dims, complex=complex)


def _faces_design(faces, dims, complex=None, name="") -> DesignMatrix:
    blocks, labels = [], []
    for s, face in enumerate(faces):
        block, face_labels = _face_matrix(face, dims)
        blocks.append(block)
        labels.extend((s, f) for f in face_labels)
    mat = np.vstack(blocks) if blocks else np.zeros((0, cell_count(dims)), dtype=np.int64)
    return DesignMatrix(mat, tuple(labels), dims=dims, complex=complex, name=name)


def independence_matrix(*dims: int) -> DesignMatrix:
    """Mutual independence of all variables: one face per vertex."""
    dims = validate_dims(dims)
    cx = SimplicialComplex(len(dims), tuple((v,) for v in range(1, len(dims) + 1)))
    dm = hierarchical_design_matrix(cx, dims)
    return DesignMatrix(dm.matrix, dm.row_labels, dims, cx, name="independence")


def no_three_way_matrix(I: int, J: int, K: int) -> DesignMatrix:
    if min(I, J, K) < 2:
        raise ValueError("no-three-way interaction needs every level count >= 2")
    cx = SimplicialComplex(3, ((1, 2), (2, 3), (1, 3)))
    dm = hierarchical_design_matrix(cx, (I, J, K))
    return DesignMatrix(dm.matrix, dm.row_labels, dm.dims, cx, name="no3way")


def lawrence_lifting(A) -> DesignMatrix:
    """``[[A, 0], [I_n, I_n]]``; column i is paired with column n + i."""
    mat = as_matrix(A)
    m, n = mat.shape
    top = np.hstack([mat, np.zeros((m, n), dtype=np.int64)])
    bottom = np.hstack([np.eye(n, dtype=np.int64), np.eye(n, dtype=np.int64)])
    labels = tuple(("A", i) for i in range(m)) + tuple(("pair", j) for j in range(n))
    return DesignMatrix(np.vstack([top, bottom]), labels, name="lawrence")


def a_family_matrix(n: int) -> DesignMatrix:
    """The (n-2) x n banded matrix with rows ``1 -2 1``."""
    if n < 3:
        raise ValueError("the banded family needs n >= 3")
    mat = np.zeros((n - 2, n), dtype=np.int64)
    for i in range(n - 2):
        mat[i, i], mat[i, i + 1], mat[i, i + 2] = 1, -2, 1
    return DesignMatrix(mat, name=f"A_{n - 2}")


def nfold_matrix(A, B, n: int) -> np.ndarray:
    """Raw ``[A, B]^(n)`` as an integer array."""
    a, b = as_matrix(A), as_matrix(B)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("blocks must be two-dimensional")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"A and B must share a column count, got {a.shape[1]} and {b.shape[1]}")
    p, s = a.shape
    out = np.zeros((n * p + b.shape[0], n * s), dtype=np.int64)
    for j in range(n):
        out[j * p:(j + 1) * p, j * s:(j + 1) * s] = a
        out[n * p:, j * s:(j + 1) * s] = b
    return out


@dataclass(frozen=True, eq=False)
class NFoldDecomposition:
    """Blocks of A_Δ and the permutation certificate.

    ``A_delta.matrix[row_perm][:, col_perm]`` equals ``[A, B]^(n)`` entrywise.
    """

    A: DesignMatrix
    B: DesignMatrix
    n: int
    row_perm: np.ndarray
    col_perm: np.ndarray
    A_delta: DesignMatrix

    def permuted(self) -> np.ndarray:
        return self.A_delta.matrix[self.row_perm][:, self.col_perm]


def nfold_block_decomposition(complex: SimplicialComplex, dims, V) -> NFoldDecomposition:
    """Write A_Δ as an n-fold matrix with n the number of cells over ``V``.

    Requires every maximal face either to contain ``V`` or to avoid it.  The
    columns are grouped by the V-coordinates of their cell; rows of faces
    containing V are grouped the same way, and rows of faces avoiding V come
    last.  A is the design matrix of the link of V and B that of the faces
    avoiding V, both on the remaining coordinates.
    """
    dims = validate_dims(dims)
    V = tuple(sorted(set(int(v) for v in V)))
    if not V or V[0] < 1 or V[-1] > len(dims):
        raise ValueError(f"V={V} is not a nonempty subset of the ground set")
    Vset = set(V)
    inner, outer = [], []
    for s, face in enumerate(complex.faces):
        fs = set(face)
        if Vset <= fs:
            inner.append(s)
        elif not (Vset & fs):
            outer.append(s)
        else:
            raise ValueError(f"face {face} neither contains nor avoids V={V}")

    rest = tuple(v for v in range(1, len(dims) + 1) if v not in Vset)
    relabel = {v: i + 1 for i, v in enumerate(rest)}
    rest_dims = tuple(dims[v - 1] for v in rest) or (1,)
    v_dims = tuple(dims[v - 1] for v in V)
    n = cell_count(v_dims)

    def sub_faces(faces):
        return [tuple(relabel[v] for v in complex.faces[s] if v not in Vset) for s in faces]

    A_block = _faces_design(sub_faces(inner), rest_dims, name="link")
    B_block = _faces_design(sub_faces(outer), rest_dims, name="deletion")

    full = hierarchical_design_matrix(complex, dims)
    col_perm = []
    for iv in multi_indices(v_dims):
        for ir in (multi_indices(rest_dims) if rest else [()]):
            idx = [0] * len(dims)
            for v, x in zip(V, iv):
                idx[v - 1] = x
            for v, x in zip(rest, ir):
                idx[v - 1] = x
            col_perm.append(to_flat_index(idx, dims))

    label_pos = {lab: r for r, lab in enumerate(full.row_labels)}
    row_perm = []
    for iv in multi_indices(v_dims):
        for s in inner:
            face = complex.faces[s]
            fr = [v for v in face if v not in Vset]
            for f_rest in multi_indices(tuple(dims[v - 1] for v in fr)):
                coords = dict(zip(V, iv)) | dict(zip(fr, f_rest))
                row_perm.append(label_pos[(s, tuple(coords[v] for v in face))])
    for s in outer:
        face = complex.faces[s]
        for f in multi_indices(tuple(dims[v - 1] for v in face)):
            row_perm.append(label_pos[(s, f)])

    dec = NFoldDecomposition(
        A_block, B_block, n, np.array(row_perm, dtype=np.intp),
        np.array(col_perm, dtype=np.intp), full,
    )
    if not np.array_equal(dec.permuted(), nfold_matrix(A_block, B_block, n)):
        raise AssertionError("permuted design matrix is not the expected n-fold matrix")
    return dec


def enumerate_complexes(k: int) -> list[SimplicialComplex]:
    """Every simplicial complex on [k] whose maximal faces cover all vertices."""
    subsets = [
        c for r in range(1, k + 1) for c in itertools.combinations(range(1, k + 1), r)
    ]
    out = []
    for r in range(1, len(subsets) + 1):
        for faces in itertools.combinations(subsets, r):
            sets = [set(f) for f in faces]
            if set().union(*sets) != set(range(1, k + 1)):
                continue
            if any(a <= b for a, b in itertools.permutations(sets, 2)):
                continue
            out.append(SimplicialComplex(k, faces))
    return out


def table_margins(model: DesignMatrix, u) -> list[np.ndarray]:
    """Face marginals of ``u`` computed by direct summation (hierarchical models)."""
    if model.complex is None or model.dims is None:
        raise ValueError("model is not hierarchical")
    cells = np.asarray(getattr(u, "cells", u))
    return [marginal(cells, model.dims, f) for f in model.complex.faces]
