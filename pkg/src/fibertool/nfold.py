"""n-fold matrices, Graver complexity and lifting of Graver bases."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .bases import MoveSet, graver_basis
from .models import DesignMatrix, SimplicialComplex, as_matrix, nfold_block_decomposition, nfold_matrix

__all__ = [
    "NFoldSpec",
    "Complexity",
    "build_nfold",
    "graver_complexity",
    "graver_complexity_upper_bound",
    "nfold_graver",
    "hierarchical_graver_size_bound",
    "type_of",
]


@dataclass(frozen=True, eq=False)
class NFoldSpec:
    A: np.ndarray
    B: np.ndarray
    n: int

    def __post_init__(self):
        a, b = as_matrix(self.A), as_matrix(self.B)
        if b.size == 0:
            b = b.reshape(0, a.shape[1])
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
            raise ValueError("A and B must be matrices with the same number of columns")
        if self.n < 1:
            raise ValueError("n must be positive")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)

    @property
    def s(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class Complexity:
    """Graver complexity value; ``exact`` is False when a Graver run was truncated."""

    value: int
    exact: bool

    def __int__(self):
        return self.value


def build_nfold(spec: NFoldSpec) -> DesignMatrix:
    p, pp = spec.A.shape[0], spec.B.shape[0]
    labels = [("A", j, r) for j in range(spec.n) for r in range(p)] + [("B", r) for r in range(pp)]
    return DesignMatrix(
        nfold_matrix(spec.A, spec.B, spec.n),
        row_labels=tuple(labels),
        name=f"[A,B]^({spec.n})",
        meta={"p": p, "p_prime": pp, "s": spec.s, "n": spec.n},
    )


def type_of(x, s: int) -> int:
    """Number of nonzero blocks of length ``s`` in ``x``."""
    blocks = np.asarray(x).reshape(-1, s)
    return int(np.count_nonzero(blocks.any(axis=1)))


def graver_complexity(A, B, norm_cap: int = 10) -> Complexity:
    """max 1-norm over Gr(B · Gr(A)).

    Gr(A) enters with one representative per sign pair.  If ``B`` has no
    rows (or is zero) the Graver basis of the zero matrix consists of unit
    vectors, so g = 1; an empty Gr(A) gives g = 0.
    """
    spec = NFoldSpec(A, B, 1)
    GA = graver_basis(spec.A, norm_cap)
    if len(GA) == 0:
        return Complexity(0, GA.complete)
    BG = spec.B @ GA.moves.T
    if BG.shape[0] == 0:
        BG = np.zeros((1, len(GA)), dtype=np.int64)
    GBG = graver_basis(BG, norm_cap)
    value = int(np.abs(GBG.moves).sum(axis=1).max(initial=0))
    return Complexity(value, GA.complete and GBG.complete)


def graver_complexity_upper_bound(A, B) -> int:
    a, b = as_matrix(A), as_matrix(B)
    entry = max(int(np.abs(a).max(initial=0)), int(np.abs(b).max(initial=0)))
    rows = a.shape[0] + (b.shape[0] if b.ndim == 2 else 0)
    return (2 * entry + 1) ** (2 ** rows - 1)


def nfold_graver(spec: NFoldSpec, norm_cap: int = 10, g: Complexity | None = None) -> MoveSet:
    """Gr([A,B]^(n)) by lifting Gr([A,B]^(g)) onto every g-subset of blocks."""
    model = build_nfold(spec)
    g = g if g is not None else graver_complexity(spec.A, spec.B, norm_cap)
    if spec.n <= g.value or g.value == 0:
        direct = graver_basis(model, norm_cap)
        return MoveSet(direct.moves, "graver", model, direct.complete and g.exact)

    base = graver_basis(nfold_matrix(spec.A, spec.B, g.value), norm_cap)
    s = spec.s
    blocks = base.moves.reshape(len(base), g.value, s)
    lifted = []
    for places in itertools.combinations(range(spec.n), g.value):
        for elem in blocks:
            x = np.zeros((spec.n, s), dtype=np.int64)
            x[list(places)] = elem
            lifted.append(x.ravel())
    lifted.sort(key=lambda v: int(np.abs(v).sum()))
    return MoveSet.from_vectors(lifted, "graver", model, complete=base.complete and g.exact, dim=model.cols)


def hierarchical_graver_size_bound(complex: SimplicialComplex, dims, V, norm_cap: int = 10) -> int:
    """|Gr([A,B]^(g))| * C(n, g) for the block decomposition of A_Δ along V."""
    dec = nfold_block_decomposition(complex, dims, V)
    g = graver_complexity(dec.A, dec.B, norm_cap)
    if dec.n <= g.value:
        return len(graver_basis(dec.A_delta, norm_cap))
    base = graver_basis(nfold_matrix(dec.A, dec.B, g.value), norm_cap)
    return len(base) * comb(dec.n, g.value)
