"""Fiber membership, enumeration, counting and connectivity.

Points of a fiber are handled as tuples of Python ints during search; the
public functions return :class:`~fibertool.tables.Table` objects.
"""
from __future__ import annotations

import itertools
from collections import defaultdict, deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .bases import MoveSet
from .models import DesignMatrix, as_matrix
from .tables import Table, cell_count, to_flat_index

__all__ = [
    "CapExceeded",
    "UnboundedFiberError",
    "FiberSpec",
    "RelaxationSpec",
    "ConnectivityReport",
    "in_relaxed_fiber",
    "cell_bounds",
    "enumerate_fiber",
    "count_two_way_fiber",
    "connectivity",
    "reachable",
    "is_q_bounded_markov",
    "minimal_relaxation",
    "tables_up_to_total",
    "family_connectivity",
]

DEFAULT_CAP = 10**7


class CapExceeded(RuntimeError):
    """More points than the caller allowed."""


class UnboundedFiberError(ValueError):
    """Some cell of the (relaxed) fiber has no finite upper bound."""


@dataclass(frozen=True, eq=False)
class FiberSpec:
    model: DesignMatrix
    margins: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.margins, dtype=np.int64).ravel()
        if b.size != self.model.rows:
            raise ValueError(f"expected {self.model.rows} margins, got {b.size}")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "margins", b)

    @classmethod
    def of(cls, model: DesignMatrix, u) -> "FiberSpec":
        cells = np.asarray(getattr(u, "cells", u), dtype=np.int64).ravel()
        return cls(model, model.matrix @ cells)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.model.dims or (self.model.cols,)

    def table(self, cells) -> Table:
        return Table(self.dims, np.asarray(cells, dtype=np.int64))


@dataclass(frozen=True)
class RelaxationSpec:
    """Cells in ``S`` may go down to ``-q``; ``S=None`` means every cell."""

    q: int = 0
    S: frozenset | None = None

    def __post_init__(self):
        if self.q < 0:
            raise ValueError("q must be nonnegative")
        if self.S is not None:
            object.__setattr__(self, "S", frozenset(tuple(int(i) for i in c) for c in self.S))

    def lower_bounds(self, dims: Sequence[int]) -> list[int]:
        n = cell_count(dims)
        if self.q == 0:
            return [0] * n
        if self.S is None:
            return [-self.q] * n
        lo = [0] * n
        for c in self.S:
            lo[to_flat_index(c, dims)] = -self.q
        return lo


PLAIN = RelaxationSpec()


@dataclass
class ConnectivityReport:
    """Components of the plain-fiber points in the move graph.

    ``components`` lists plain-fiber points grouped by the component of the
    (possibly relaxed) graph they fall into.
    """

    component_count: int
    components: list[list[Table]]
    witness_pairs: list[tuple[Table, Table]] = field(default_factory=list)
    fiber_size: int = 0
    graph_size: int = 0

    @property
    def connected(self) -> bool:
        return self.component_count <= 1

    def to_json(self) -> dict:
        return {
            "component_count": self.component_count,
            "connected": self.connected,
            "fiber_size": self.fiber_size,
            "graph_size": self.graph_size,
            "component_sizes": [len(c) for c in self.components],
            "witness_pairs": [[a.cells.tolist(), b.cells.tolist()] for a, b in self.witness_pairs],
        }


def _cells(u) -> np.ndarray:
    return np.asarray(getattr(u, "cells", u), dtype=np.int64).ravel()


def in_relaxed_fiber(u, spec: FiberSpec, relax: RelaxationSpec = PLAIN) -> bool:
    x = _cells(u)
    if x.size != spec.model.cols:
        raise ValueError("table does not match the model")
    lo = np.asarray(relax.lower_bounds(spec.dims))
    return bool(np.array_equal(spec.model.matrix @ x, spec.margins) and np.all(x >= lo))


def cell_bounds(spec: FiberSpec, relax: RelaxationSpec = PLAIN, upper: int | None = None):
    """Lower and upper bound for every cell of the relaxed fiber.

    Upper bounds come from rows of A with nonnegative entries; cells covered
    by no such row fall back to a linear program.
    """
    A = spec.model.matrix
    b = spec.margins
    lo = relax.lower_bounds(spec.dims)
    lo_arr = np.asarray(lo, dtype=np.int64)
    hi: list[float] = [np.inf] * A.shape[1]
    for r in np.flatnonzero(np.all(A >= 0, axis=1)):
        row = A[r]
        base = int(b[r]) - int(row @ lo_arr)
        for c in np.flatnonzero(row):
            bound = lo[c] + base // int(row[c])
            hi[c] = min(hi[c], bound)
    missing = [c for c in range(A.shape[1]) if hi[c] == np.inf]
    if missing:
        hi = _lp_bounds(A, b, lo, hi, missing)
    if upper is not None:
        hi = [min(h, upper) for h in hi]
    return lo, [int(h) for h in hi]


def _lp_bounds(A, b, lo, hi, missing):
    from scipy.optimize import linprog

    bounds = [(l, None) for l in lo]
    for c in missing:
        obj = np.zeros(A.shape[1])
        obj[c] = -1.0
        res = linprog(obj, A_eq=A, b_eq=b, bounds=bounds, method="highs")
        if res.status == 3:
            raise UnboundedFiberError(f"cell {c} is unbounded on this fiber")
        if res.status == 2:
            hi[c] = lo[c] - 1  # infeasible: empty fiber
        elif res.status != 0:
            raise RuntimeError(f"LP bound failed for cell {c}: {res.message}")
        else:
            hi[c] = int(np.floor(-res.fun + 1e-9))
    return hi


def _search_points(spec: FiberSpec, relax: RelaxationSpec, cap: int, upper: int | None):
    """Yield every point of the relaxed fiber as a tuple (DFS, flattening order)."""
    A = spec.model.matrix
    m, D = A.shape
    lo, hi = cell_bounds(spec, relax, upper)
    if any(h < l for l, h in zip(lo, hi)):
        return
    col_rows = [[(int(r), int(A[r, c])) for r in np.flatnonzero(A[:, c])] for c in range(D)]
    # suffix ranges of sum_{c' >= c} A[r,c'] x_c' over the box
    smin = [[0] * (D + 1) for _ in range(m)]
    smax = [[0] * (D + 1) for _ in range(m)]
    for c in range(D - 1, -1, -1):
        for r in range(m):
            smin[r][c] = smin[r][c + 1]
            smax[r][c] = smax[r][c + 1]
        for r, a in col_rows[c]:
            lo_v, hi_v = a * lo[c], a * hi[c]
            smin[r][c] += min(lo_v, hi_v)
            smax[r][c] += max(lo_v, hi_v)
    resid = [int(v) for v in spec.margins]
    if any(not smin[r][0] <= resid[r] <= smax[r][0] for r in range(m)):
        return
    x = [0] * D
    count = 0

    def rec(c):
        nonlocal count
        if c == D:
            if any(resid):
                return
            count += 1
            if count > cap:
                raise CapExceeded(f"fiber has more than {cap} points")
            yield tuple(x)
            return
        vlo, vhi = lo[c], hi[c]
        for r, a in col_rows[c]:
            # a * x_c must lie in [resid - smax(c+1), resid - smin(c+1)]
            t_lo = resid[r] - smax[r][c + 1]
            t_hi = resid[r] - smin[r][c + 1]
            if a > 0:
                vlo = max(vlo, _ceil_div(t_lo, a))
                vhi = min(vhi, t_hi // a)
            else:
                vlo = max(vlo, _ceil_div(t_hi, a))
                vhi = min(vhi, t_lo // a)
            if vlo > vhi:
                return
        rows = col_rows[c]
        for val in range(vhi, vlo - 1, -1):
            x[c] = val
            for r, a in rows:
                resid[r] -= a * val
            yield from rec(c + 1)
            for r, a in rows:
                resid[r] += a * val
        x[c] = 0

    yield from rec(0)


def _ceil_div(t, a):
    return -((-t) // a)


def enumerate_fiber(
    spec: FiberSpec,
    relax: RelaxationSpec | None = None,
    cap: int = DEFAULT_CAP,
    upper: int | None = None,
) -> list[Table]:
    """All points of F_{-q,S}(b), optionally with every entry at most ``upper``.

    Raises :class:`CapExceeded` instead of truncating.
    """
    relax = relax or PLAIN
    return [spec.table(p) for p in _search_points(spec, relax, cap, upper)]


def count_two_way_fiber(row_sums: Sequence[int], col_sums: Sequence[int]) -> int:
    """Number of nonnegative integer matrices with the given margins.

    Dynamic program over columns; the state is the multiset of residual row
    sums, since permuting rows does not change the number of completions.
    """
    rows = [int(r) for r in row_sums]
    cols = [int(c) for c in col_sums]
    if any(v < 0 for v in rows + cols):
        raise ValueError("margins must be nonnegative")
    if sum(rows) != sum(cols):
        raise ValueError(f"row total {sum(rows)} differs from column total {sum(cols)}")
    if len(rows) > len(cols):
        rows, cols = cols, rows
    cols = sorted(cols)

    @lru_cache(maxsize=None)
    def fill(k: int, resid: tuple[int, ...]) -> int:
        if k == len(cols) - 1:
            return 1  # the last column is forced
        total = 0
        for col in _bounded_compositions(cols[k], resid):
            nxt = tuple(sorted(r - v for r, v in zip(resid, col)))
            total += fill(k + 1, nxt)
        return total

    if not cols:
        return 1
    return fill(0, tuple(sorted(rows)))


def _bounded_compositions(total: int, caps: Sequence[int]):
    """Vectors v with 0 <= v_i <= caps_i summing to ``total``."""
    n = len(caps)
    suffix = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] + caps[i]
    out = [0] * n

    def rec(i, left):
        if i == n - 1:
            if left <= caps[i]:
                out[i] = left
                yield tuple(out)
            return
        for v in range(max(0, left - suffix[i + 1]), min(caps[i], left) + 1):
            out[i] = v
            yield from rec(i + 1, left - v)

    if total > suffix[0]:
        return
    if n == 0:
        if total == 0:
            yield ()
        return
    yield from rec(0, total)


def _sparse_moves(moves: MoveSet | np.ndarray) -> list[list[tuple[int, int]]]:
    arr = moves.moves if isinstance(moves, MoveSet) else np.asarray(moves, dtype=np.int64)
    return [[(int(i), int(m[i])) for i in np.flatnonzero(m)] for m in arr]


def _step(point: tuple, move, sign: int, lo, hi) -> tuple | None:
    x = list(point)
    for i, v in move:
        y = x[i] + sign * v
        if y < lo[i] or (hi is not None and y > hi[i]):
            return None
        x[i] = y
    return tuple(x)


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _components(points: list[tuple], moves, lo, hi) -> _UnionFind:
    index = {p: i for i, p in enumerate(points)}
    uf = _UnionFind(len(points))
    sparse = _sparse_moves(moves)
    for i, p in enumerate(points):
        for mv in sparse:
            nb = _step(p, mv, 1, lo, hi)
            if nb is not None:
                j = index.get(nb)
                if j is not None:
                    uf.union(i, j)
    return uf


def connectivity(
    spec: FiberSpec,
    moves: MoveSet,
    relax: RelaxationSpec | None = None,
    cap: int = DEFAULT_CAP,
    upper: int | None = None,
    max_witnesses: int = 5,
) -> ConnectivityReport:
    """Do the moves connect all nonnegative points through F_{-q,S}(b)?

    The graph has the relaxed-fiber points as vertices and edges u -> u +- m.
    ``upper`` additionally caps every entry (used for q-bounded fibers).
    """
    relax = relax or PLAIN
    points = list(_search_points(spec, relax, cap, upper))
    lo, hi = cell_bounds(spec, relax, upper)
    uf = _components(points, moves, lo, hi if upper is not None else None)
    groups: dict[int, list[Table]] = defaultdict(list)
    plain = 0
    for i, p in enumerate(points):
        if min(p, default=0) >= 0:
            plain += 1
            groups[uf.find(i)].append(spec.table(p))
    comps = sorted(groups.values(), key=lambda g: -len(g))
    witnesses = [(comps[0][0], c[0]) for c in comps[1:1 + max_witnesses]]
    return ConnectivityReport(len(comps), comps, witnesses, plain, len(points))


def reachable(
    spec: FiberSpec,
    moves: MoveSet,
    start,
    relax: RelaxationSpec | None = None,
    target=None,
    cap: int = DEFAULT_CAP,
) -> set[tuple] | bool:
    """Breadth-first search from ``start`` inside F_{-q,S}(b).

    Returns the reached point set, or whether ``target`` was reached.
    """
    relax = relax or PLAIN
    lo = relax.lower_bounds(spec.dims)
    s = tuple(int(v) for v in _cells(start))
    if not in_relaxed_fiber(s, spec, relax):
        raise ValueError("start point is not in the relaxed fiber")
    goal = tuple(int(v) for v in _cells(target)) if target is not None else None
    sparse = _sparse_moves(moves)
    seen = {s}
    queue = deque([s])
    while queue:
        p = queue.popleft()
        if p == goal:
            return True
        for mv in sparse:
            for sign in (1, -1):
                nb = _step(p, mv, sign, lo, None)
                if nb is not None and nb not in seen:
                    seen.add(nb)
                    if len(seen) > cap:
                        raise CapExceeded(f"search visited more than {cap} points")
                    queue.append(nb)
    return False if goal is not None else seen


def minimal_relaxation(spec: FiberSpec, M: MoveSet, u, v, q_max: int, cap: int = DEFAULT_CAP) -> int | None:
    """Smallest q <= q_max for which u and v are joined inside F_{-q}(b)."""
    for q in range(q_max + 1):
        if reachable(spec, M, u, RelaxationSpec(q), target=v, cap=cap):
            return q
    return None


def is_q_bounded_markov(model: DesignMatrix, margin_family: Iterable, G: MoveSet, q: int,
                        cap: int = DEFAULT_CAP) -> bool:
    """Is every F^q(b) in the family connected by the moves with entries <= q?"""
    bounded = G.moves[np.abs(G.moves).max(axis=1) <= q] if len(G) else G.moves
    for b in margin_family:
        spec = FiberSpec(model, b)
        report = connectivity(spec, bounded, PLAIN, cap=cap, upper=q)
        if not report.connected:
            return False
    return True


def tables_up_to_total(D: int, max_total: int):
    """All nonnegative vectors of length D with entry sum at most ``max_total``."""
    for total in range(max_total + 1):
        # stars and bars
        for bars in itertools.combinations(range(total + D - 1), D - 1):
            prev, out = -1, []
            for bar in bars:
                out.append(bar - prev - 1)
                prev = bar
            out.append(total + D - 2 - prev)
            yield tuple(out)


@dataclass
class FamilyReport:
    fibers: int
    points: int
    disconnected: list[tuple[tuple, int]]

    @property
    def all_connected(self) -> bool:
        return not self.disconnected


def family_connectivity(model: DesignMatrix, moves, max_total: int, upper: int | None = None) -> FamilyReport:
    """Connectivity of every fiber met by tables of sample size <= ``max_total``.

    Fibers are closed under the sample size, so grouping all such tables by
    their margins yields each fiber completely.  With ``upper`` only tables
    with entries <= upper are kept, giving the q-bounded fibers F^q(b).
    """
    A = as_matrix(model)
    D = A.shape[1]
    groups: dict[tuple, list[tuple]] = defaultdict(list)
    for t in tables_up_to_total(D, max_total):
        if upper is not None and max(t, default=0) > upper:
            continue
        groups[tuple((A @ np.asarray(t, dtype=np.int64)).tolist())].append(t)
    lo = [0] * D
    hi = [upper] * D if upper is not None else None
    arr = moves.moves if isinstance(moves, MoveSet) else np.asarray(moves, dtype=np.int64).reshape(-1, D)
    bad = []
    n_points = 0
    for b, pts in groups.items():
        n_points += len(pts)
        if len(pts) == 1:
            continue
        uf = _components(pts, arr, lo, hi)
        roots = {uf.find(i) for i in range(len(pts))}
        if len(roots) > 1:
            bad.append((b, len(roots)))
    return FamilyReport(len(groups), n_points, bad)
