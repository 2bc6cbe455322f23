"""Move sets: lattice bases, Graver bases, circuits and explicit move families.

Integer linear algebra runs on Python integers (object arrays) so that
intermediate values never overflow; move sets are returned as ``int64``.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .models import DesignMatrix, as_matrix, independence_matrix, no_three_way_matrix
from .tables import canonical_sign, to_flat_index

log = logging.getLogger(__name__)

ROLES = ("lattice", "graver", "markov", "basic", "circuits", "imported")

__all__ = [
    "HnfResult",
    "MoveSet",
    "hnf_column_style",
    "integer_rank",
    "determinant",
    "lattice_basis",
    "spans_integer_kernel",
    "graver_basis",
    "bounded_graver_subset",
    "circuits",
    "basic_moves",
    "independence_swap_basis",
    "embedded_two_way_move",
]


@dataclass(frozen=True, eq=False)
class HnfResult:
    """``A @ U == H`` with ``U`` unimodular and ``H`` in column-style HNF."""

    H: np.ndarray
    U: np.ndarray
    rank: int

    @property
    def kernel(self) -> np.ndarray:
        """Columns of U spanning the integer kernel (n x (n - rank))."""
        return self.U[:, self.rank:]


def _column_hnf(M: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    H = np.array(M, dtype=object)
    m, n = H.shape
    U = np.eye(n, dtype=object)
    k = 0
    for i in range(m):
        if k == n:
            break
        while True:
            nz = [j for j in range(k, n) if H[i, j] != 0]
            if not nz:
                break
            piv = min(nz, key=lambda j: abs(H[i, j]))
            if len(nz) == 1:
                break
            for j in nz:
                if j != piv:
                    q = H[i, j] // H[i, piv]
                    H[:, j] -= q * H[:, piv]
                    U[:, j] -= q * U[:, piv]
        if not nz:
            continue
        if piv != k:
            H[:, [k, piv]] = H[:, [piv, k]]
            U[:, [k, piv]] = U[:, [piv, k]]
        if H[i, k] < 0:
            H[:, k] = -H[:, k]
            U[:, k] = -U[:, k]
        p = H[i, k]
        for j in range(k):
            q = H[i, j] // p
            if q:
                H[:, j] -= q * H[:, k]
                U[:, j] -= q * U[:, k]
        k += 1
    return H, U, k


def hnf_column_style(A) -> HnfResult:
    """Column-style Hermite normal form.

    Pivots are positive and entries left of a pivot lie in ``[0, pivot)``.
    The trailing kernel columns of U are put in a canonical echelon form read
    from the last coordinate upwards, so the lattice basis does not depend on
    the elimination path.
    """
    mat = as_matrix(A)
    H, U, r = _column_hnf(mat)
    n = mat.shape[1]
    if r < n:
        K = U[:, r:]
        Hk, _, _ = _column_hnf(K[::-1])
        U[:, r:] = Hk[::-1][:, ::-1]
    return HnfResult(_to_int64(H), _to_int64(U), r)


def _to_int64(M: np.ndarray) -> np.ndarray:
    if M.size and max(abs(int(x)) for x in M.ravel()) > np.iinfo(np.int64).max:
        raise OverflowError("integer matrix entries exceed 64 bits")
    return np.array(M.tolist(), dtype=np.int64).reshape(M.shape)


def integer_rank(A) -> int:
    return _column_hnf(as_matrix(A))[2]


def determinant(M) -> int:
    """Exact determinant by fraction-free (Bareiss) elimination."""
    a = [[int(x) for x in row] for row in np.asarray(M).tolist()]
    n = len(a)
    if any(len(row) != n for row in a):
        raise ValueError("determinant needs a square matrix")
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1] if n else 1


@dataclass(frozen=True, eq=False)
class MoveSet:
    """An ordered set of moves, one representative per sign orbit.

    ``moves`` has one move per row.  ``complete`` is False when a Graver
    computation hit its norm cap.
    """

    moves: np.ndarray
    role: str
    model: DesignMatrix | None = None
    complete: bool = True

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        mv = np.asarray(self.moves, dtype=np.int64)
        if mv.size == 0:
            mv = mv.reshape(0, self.model.cols if self.model is not None else mv.shape[-1])
        elif mv.ndim == 1:
            mv = mv.reshape(1, -1)
        if mv.shape[0] and self.model is not None:
            if mv.shape[1] != self.model.cols:
                raise ValueError("moves do not match the model's column count")
            if np.any(self.model.matrix @ mv.T):
                raise ValueError("move set contains a vector outside the integer kernel")
        if np.any(~mv.any(axis=1)):
            raise ValueError("the zero vector is not a move")
        mv = mv.copy()
        mv.setflags(write=False)
        object.__setattr__(self, "moves", mv)

    @classmethod
    def from_vectors(cls, vectors: Iterable, role: str, model=None, complete=True, dim=None):
        """Deduplicate up to sign, keeping first-seen order."""
        seen, rows = set(), []
        for v in vectors:
            v = canonical_sign(np.asarray(v, dtype=np.int64).ravel())
            key = v.tobytes()
            if key not in seen:
                seen.add(key)
                rows.append(v)
        if dim is None:
            dim = model.cols if model is not None else (rows[0].size if rows else 0)
        arr = np.vstack(rows) if rows else np.zeros((0, dim), dtype=np.int64)
        return cls(arr, role, model, complete)

    def __len__(self):
        return self.moves.shape[0]

    def __iter__(self):
        return iter(self.moves)

    @property
    def dimension(self) -> int:
        if self.moves.shape[0]:
            return self.moves.shape[1]
        return self.model.cols if self.model is not None else self.moves.shape[1]

    def symmetric(self) -> np.ndarray:
        """The proposal set ±M as a (2|M|) x D array."""
        return np.vstack([self.moves, -self.moves]) if len(self) else self.moves

    def as_set(self) -> set[bytes]:
        return {canonical_sign(m).tobytes() for m in self.moves}

    def with_role(self, role: str) -> "MoveSet":
        return MoveSet(self.moves, role, self.model, self.complete)

    def __repr__(self):
        flag = "" if self.complete else ", truncated"
        return f"<MoveSet {self.role}: {len(self)} moves in Z^{self.dimension}{flag}>"


def lattice_basis(A) -> MoveSet:
    """Trailing columns of U from the column-style HNF of A."""
    model = A if isinstance(A, DesignMatrix) else None
    res = hnf_column_style(A)
    K = res.kernel
    return MoveSet(K.T.copy(), "lattice", model)


def _hnf_lattice(vectors: np.ndarray) -> np.ndarray:
    """Canonical generator matrix (nonzero HNF columns) of the lattice spanned by rows."""
    if vectors.shape[0] == 0:
        return np.zeros((vectors.shape[1], 0), dtype=object)
    H, _, r = _column_hnf(vectors.T)
    return H[:, :r]


def spans_integer_kernel(M: MoveSet, A=None) -> bool:
    """True iff the moves generate the whole integer kernel of the model."""
    A = A if A is not None else M.model
    if A is None:
        raise ValueError("need a design matrix to compare against")
    mat = as_matrix(A)
    if len(M) and np.any(mat @ M.moves.T):
        raise ValueError("move set contains a vector outside the integer kernel")
    L = lattice_basis(mat).moves
    mv = M.moves if len(M) else np.zeros((0, mat.shape[1]), dtype=np.int64)
    H1, H2 = _hnf_lattice(mv), _hnf_lattice(L)
    return H1.shape == H2.shape and bool(np.all(H1 == H2))


def _normal_form(s: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Reduce ``s`` by elements ``g ⊑ s`` of G until none applies."""
    while s.any():
        fits = np.all((G * s >= 0) & (np.abs(G) <= np.abs(s)), axis=1)
        hit = np.flatnonzero(fits)
        if hit.size == 0:
            break
        s = s - G[hit[0]]
    return s


def _minimal_elements(G: np.ndarray) -> np.ndarray:
    keep = []
    for i, x in enumerate(G):
        below = np.all((G * x >= 0) & (np.abs(G) <= np.abs(x)), axis=1)
        below[i] = False
        # an exact duplicate of x only removes one copy
        dup = below & np.all(G == x, axis=1)
        if np.any(below & ~dup) or np.any(np.flatnonzero(dup) < i):
            continue
        keep.append(i)
    return G[keep]


def graver_basis(A, norm_cap: int = 10) -> MoveSet:
    """Graver basis by completion, restricted to ∞-norm at most ``norm_cap``.

    Starts from a lattice basis and its negatives, adds normal forms of all
    pairwise sums until closed.  Normal forms whose ∞-norm exceeds the cap
    are dropped and the result is flagged incomplete.
    """
    if norm_cap < 1:
        raise ValueError("norm_cap must be at least 1")
    model = A if isinstance(A, DesignMatrix) else None
    mat = as_matrix(A)
    n = mat.shape[1]
    L = lattice_basis(mat).moves
    if L.shape[0] == 0:
        return MoveSet(np.zeros((0, n), dtype=np.int64), "graver", model, True)

    G = list(np.vstack([L, -L]))
    Garr = np.vstack(G)
    pending = [G[i] + G[j] for i in range(len(G)) for j in range(i + 1, len(G))]
    truncated = False
    while pending:
        s = pending.pop()
        f = _normal_form(s, Garr)
        if not f.any():
            continue
        if np.abs(f).max() > norm_cap:
            truncated = True
            continue
        pending.extend(f + g for g in G)
        G.append(f)
        Garr = np.vstack([Garr, f])
    minimal = _minimal_elements(Garr)
    norms = np.abs(minimal).max(axis=1)
    if np.any(norms > norm_cap):
        truncated = True
        minimal = minimal[norms <= norm_cap]
    if truncated:
        log.warning("Graver completion truncated at norm cap %d", norm_cap)
    ordered = sorted(
        (canonical_sign(x) for x in minimal),
        key=lambda x: (int(np.abs(x).sum()), tuple(-x)),
    )
    return MoveSet.from_vectors(ordered, "graver", model, complete=not truncated, dim=n)


def bounded_graver_subset(G: MoveSet, q: int) -> MoveSet:
    """Graver elements whose entries are bounded by ``q`` in absolute value."""
    if G.role != "graver":
        raise ValueError("expected a Graver move set")
    if q < 0:
        raise ValueError("q must be nonnegative")
    if len(G) == 0:
        return G
    keep = np.abs(G.moves).max(axis=1) <= q
    return MoveSet(G.moves[keep], "graver", G.model, G.complete)


def circuits(A, norm_cap: int = 10) -> MoveSet:
    """Support-minimal Graver elements."""
    G = graver_basis(A, norm_cap)
    supp = G.moves != 0
    keep = []
    for i in range(len(G)):
        inside = np.all(~supp | supp[i], axis=1)
        strictly = inside & (supp.sum(axis=1) < supp[i].sum())
        if not strictly.any():
            keep.append(i)
    return MoveSet(G.moves[keep], "circuits", G.model, G.complete)


def basic_moves(I: int, J: int, K: int) -> MoveSet:
    """Degree-4 moves b(i1,i2; j1,j2; k1,k2) of the no-three-way model."""
    model = no_three_way_matrix(I, J, K)
    dims = (I, J, K)
    rows = []
    for (i1, i2), (j1, j2), (k1, k2) in itertools.product(
        itertools.combinations(range(1, I + 1), 2),
        itertools.combinations(range(1, J + 1), 2),
        itertools.combinations(range(1, K + 1), 2),
    ):
        b = np.zeros(I * J * K, dtype=np.int64)
        for c in ((i1, j1, k1), (i1, j2, k2), (i2, j1, k2), (i2, j2, k1)):
            b[to_flat_index(c, dims)] = 1
        for c in ((i2, j2, k2), (i2, j1, k1), (i1, j2, k1), (i1, j1, k2)):
            b[to_flat_index(c, dims)] = -1
        rows.append(b)
    return MoveSet.from_vectors(rows, "basic", model)


def independence_swap_basis(d1: int, d2: int) -> MoveSet:
    """All 2x2 swaps e_{i1 j1} + e_{i2 j2} - e_{i1 j2} - e_{i2 j1}."""
    if d1 < 2 or d2 < 2:
        raise ValueError("swap moves need at least two levels per variable")
    model = independence_matrix(d1, d2)
    rows = []
    for (i1, i2), (j1, j2) in itertools.product(
        itertools.combinations(range(1, d1 + 1), 2), itertools.combinations(range(1, d2 + 1), 2)
    ):
        b = np.zeros(d1 * d2, dtype=np.int64)
        b[to_flat_index((i1, j1), (d1, d2))] += 1
        b[to_flat_index((i2, j2), (d1, d2))] += 1
        b[to_flat_index((i1, j2), (d1, d2))] -= 1
        b[to_flat_index((i2, j1), (d1, d2))] -= 1
        rows.append(b)
    return MoveSet.from_vectors(rows, "markov", model)


def embedded_two_way_move(I: int, J: int, i1: int, i2: int, j: int, k1: int, k2: int, K: int = 3):
    """The I x J x K table b(i1, i2; j; k1, k2): a 2x2 swap inside slice j.

    Its ij- and jk-margins vanish but its ik-margin does not, so it is a
    building block rather than a move of the no-three-way model.
    """
    if i1 == i2 or k1 == k2:
        raise ValueError("need i1 != i2 and k1 != k2")
    dims = (I, J, K)
    out = np.zeros(I * J * K, dtype=np.int64)
    for c, val in (((i1, j, k1), 1), ((i2, j, k2), 1), ((i1, j, k2), -1), ((i2, j, k1), -1)):
        out[to_flat_index(c, dims)] += val
    return out
