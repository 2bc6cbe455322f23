"""Negative results as checkable constructions.

* an unbounded-relaxation family: Lawrence liftings of the banded matrices
  A_{n-2} with a two-element lattice basis;
* anti-staircase cell sets on which basic moves of the no-three-way model
  fail to connect relaxed fibers;
* the theta-gadget polytope with its four integer points.

Every builder verifies its claims and raises :class:`VerificationError` on the
first one that fails.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .bases import MoveSet, basic_moves, determinant, embedded_two_way_move, hnf_column_style, spans_integer_kernel
from .fibers import FiberSpec, RelaxationSpec, _search_points, minimal_relaxation, reachable
from .models import DesignMatrix, a_family_matrix, lawrence_lifting, no_three_way_matrix
from .tables import marginal, to_flat_index

__all__ = [
    "VerificationError",
    "RelaxationFamily",
    "explicit_unimodular",
    "build_relaxation_family",
    "certify_relaxation_family",
    "StaircaseSpec",
    "staircase_set",
    "anti_staircase_set",
    "render_layers",
    "STAIRCASE_EXAMPLE_TAU",
    "AntiStaircaseWitness",
    "anti_staircase_witness",
    "ThetaGadget",
    "theta_gadget",
]

# a staircase shape on [4] x [6] x [3]
STAIRCASE_EXAMPLE_TAU = (3, 3, 2, 2, 2, 1)


class VerificationError(AssertionError):
    """A claimed property of a construction does not hold."""


def _require(cond: bool, message: str, checks: dict, key: str):
    checks[key] = bool(cond)
    if not cond:
        raise VerificationError(message)


# --- unbounded relaxation family -------------------------------------------


def explicit_unimodular(n: int) -> np.ndarray:
    """The explicit n x n matrix U with A_{n-2} U = (I | 0 | 0)."""
    U = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(i, n - 1):
            U[i, j] = j - i + 1
        U[i, n - 1] = -(n - 2 - i) if i <= n - 2 else 1
    return U


@dataclass(eq=False)
class RelaxationFamily:
    n: int
    A: DesignMatrix
    U: np.ndarray
    H: np.ndarray
    Lambda: DesignMatrix
    z1: np.ndarray
    z2: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    checks: dict = field(default_factory=dict)

    @property
    def moves(self) -> MoveSet:
        return MoveSet(np.vstack([self.z1, self.z2]), "lattice", self.Lambda)

    @property
    def fiber(self) -> FiberSpec:
        return FiberSpec.of(self.Lambda, self.u)


def build_relaxation_family(n: int) -> RelaxationFamily:
    """Build and check the instance for a given n >= 4."""
    if n < 4:
        raise ValueError("the construction needs n >= 4")
    checks: dict = {}
    A = a_family_matrix(n)
    U = explicit_unimodular(n)
    H = A.matrix @ U
    expected_H = np.hstack([np.eye(n - 2, dtype=np.int64), np.zeros((n - 2, 2), dtype=np.int64)])
    _require(np.array_equal(H, expected_H), "A U is not (I | 0 | 0)", checks, "AU_equals_H")
    _require(abs(determinant(U)) == 1, "U is not unimodular", checks, "det_U_unit")
    hnf = hnf_column_style(A)
    _require(np.array_equal(np.asarray(hnf.H, dtype=np.int64), expected_H),
             "computed Hermite normal form differs", checks, "hnf_matches")

    L = U[:, -2:]
    Lam = lawrence_lifting(A)
    z1 = np.concatenate([L[:, 0], -L[:, 0]])
    z2 = np.concatenate([L[:, 1], -L[:, 1]])
    w = np.arange(n, dtype=np.int64)
    u = np.concatenate([w, np.zeros(n, dtype=np.int64)])
    v = np.concatenate([np.zeros(n, dtype=np.int64), w])

    _require(not np.any(Lam.matrix @ z1) and not np.any(Lam.matrix @ z2),
             "z1, z2 are not in the kernel", checks, "z_in_kernel")
    moves = MoveSet(np.vstack([z1, z2]), "lattice", Lam)
    _require(spans_integer_kernel(moves), "z1, z2 do not span the kernel", checks, "span_kernel")
    target = np.concatenate([np.zeros(n - 2, dtype=np.int64), w])
    _require(np.array_equal(Lam.matrix @ u, target) and np.array_equal(Lam.matrix @ v, target),
             "u and v do not share the margins (0, w)", checks, "same_fiber")
    return RelaxationFamily(n, A, U, np.asarray(H), Lam, z1, z2, u, v, w, checks)


def certify_relaxation_family(inst: RelaxationFamily, q_max: int | None = None) -> dict:
    """Single-step and breadth-first checks of the disconnection claim."""
    n = inst.n
    q_max = 3 * n if q_max is None else q_max
    steps = [inst.u + s * z for z in (inst.z1, inst.z2) for s in (1, -1)]
    worst = [int(x.min()) for x in steps]
    single = all(m <= -(n - 2) for m in worst)
    spec = inst.fiber
    disconnected = {
        q: not reachable(spec, inst.moves, inst.u, RelaxationSpec(q), target=inst.v) for q in range(n - 2)
    }
    q_min = minimal_relaxation(spec, inst.moves, inst.u, inst.v, q_max)
    cert = {
        "n": n,
        **inst.checks,
        "single_step_minima": worst,
        "every_step_below_minus_n_plus_2": single,
        "disconnected_for_q": {str(q): d for q, d in disconnected.items()},
        "disconnected_all_q_le_n_minus_3": all(disconnected.values()),
        "minimal_q": q_min,
        "q_max": q_max,
        "norm_row_1": int(np.abs(inst.Lambda.matrix).sum(axis=1).max()),
        "norm_col_1": int(np.abs(inst.Lambda.matrix).sum(axis=0).max()),
    }
    cert["verified"] = bool(single and cert["disconnected_all_q_le_n_minus_3"] and q_min is not None)
    return cert


# --- staircase sets ---------------------------------------------------------


@dataclass(frozen=True)
class StaircaseSpec:
    """tau maps [J] to [3] (axis "j") or [I] to [3] (axis "i")."""

    I: int
    J: int
    tau: tuple
    axis: str = "j"

    def __post_init__(self):
        tau = tuple(int(t) for t in self.tau)
        object.__setattr__(self, "tau", tau)
        if self.I < 3 or self.J < 3:
            raise ValueError("staircase sets need I, J >= 3")
        if self.axis not in ("i", "j"):
            raise ValueError("axis must be 'i' or 'j'")
        if len(tau) != (self.J if self.axis == "j" else self.I):
            raise ValueError("tau has the wrong length")
        if set(tau) != {1, 2, 3}:
            raise ValueError(f"tau must be onto {{1, 2, 3}}, got {tau}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.I, self.J, 3)


def staircase_set(spec: StaircaseSpec) -> frozenset:
    if spec.axis == "j":
        return frozenset((i, j, spec.tau[j - 1]) for i in range(1, spec.I + 1) for j in range(1, spec.J + 1))
    return frozenset((i, j, spec.tau[i - 1]) for i in range(1, spec.I + 1) for j in range(1, spec.J + 1))


def anti_staircase_set(spec: StaircaseSpec) -> frozenset:
    full = itertools.product(range(1, spec.I + 1), range(1, spec.J + 1), range(1, 4))
    return frozenset(full) - staircase_set(spec)


def render_layers(cells, I: int, J: int, mark: str = "#", blank: str = ".") -> str:
    """ASCII picture of a cell subset of [I] x [J] x [3], one block per k."""
    cells = set(cells)
    out = []
    for k in range(1, 4):
        out.append(f"k={k}")
        for i in range(1, I + 1):
            out.append("".join(mark if (i, j, k) in cells else blank for j in range(1, J + 1)))
    return "\n".join(out)


@dataclass(eq=False)
class AntiStaircaseWitness:
    spec: StaircaseSpec
    q: int
    n: np.ndarray
    m: np.ndarray
    m_prime: np.ndarray
    slices: tuple
    checks: dict
    displayed: dict
    visited: int

    def to_json(self) -> dict:
        return {
            "I": self.spec.I, "J": self.spec.J, "tau": list(self.spec.tau), "q": self.q,
            "slices": list(self.slices), "n": self.n.tolist(), "m": self.m.tolist(),
            "m_prime": self.m_prime.tolist(), "checks": self.checks,
            "displayed_witness": self.displayed, "bfs_visited": self.visited,
        }


def _slice_ik_margin(x: np.ndarray, dims, cells: set) -> np.ndarray:
    masked = np.zeros_like(x)
    for c in cells:
        f = to_flat_index(c, dims)
        masked[f] = x[f]
    return marginal(masked, dims, (1, 3))


def _witness_checks(n: np.ndarray, dims, S: frozenset, model: DesignMatrix) -> dict:
    m = np.where(n < 0, 1, 0).astype(np.int64)
    off_S = [to_flat_index(c, dims) for c in itertools.product(*(range(1, d + 1) for d in dims)) if c not in S]
    return {
        "is_move": not np.any(model.matrix @ n),
        "m_zero_off_S": not np.any(m[off_S]),
        "m_prime_nonnegative": bool(np.all(m + n >= 0)),
    }


def anti_staircase_witness(spec: StaircaseSpec, q: int, cap: int = 10**7) -> AntiStaircaseWitness:
    """Pair m, m' in one fiber that basic moves cannot join inside F_{-q,S}.

    The witness move is n = b(1,2; j1; 2,3) + b(1,2; j2; 3,1) + b(1,2; j3; 1,2)
    where j_t is the first slice with tau(j_t) = t, and m is the indicator
    of the cells where n is negative.
    """
    if spec.axis != "j":
        raise ValueError("the witness is built for tau on the second index")
    I, J, K = spec.dims
    dims = spec.dims
    S = anti_staircase_set(spec)
    model = no_three_way_matrix(I, J, K)
    slices = tuple(spec.tau.index(t) + 1 for t in (1, 2, 3))
    j1, j2, j3 = slices
    n = (embedded_two_way_move(I, J, 1, 2, j1, 2, 3)
         + embedded_two_way_move(I, J, 1, 2, j2, 3, 1)
         + embedded_two_way_move(I, J, 1, 2, j3, 1, 2))
    displayed = (embedded_two_way_move(I, J, 1, 2, j1, 1, 2)
                 + embedded_two_way_move(I, J, 1, 2, j2, 2, 3)
                 + embedded_two_way_move(I, J, 1, 2, j3, 1, 3))
    displayed_checks = _witness_checks(displayed, dims, S, model)

    checks: dict = {}
    base = _witness_checks(n, dims, S, model)
    _require(base["is_move"], "witness has nonzero margins", checks, "witness_is_move")
    m = np.where(n < 0, 1, 0).astype(np.int64)
    m_prime = m + n
    _require(base["m_zero_off_S"], "m is not supported on S", checks, "m_supported_on_S")
    _require(base["m_prime_nonnegative"] and np.all(m >= 0), "m or m' is negative", checks, "nonnegative")
    _require(np.array_equal(model.matrix @ m, model.matrix @ m_prime), "m and m' have different margins",
             checks, "same_margins")

    # S_t: cells of S on the slices j with tau(j) = t
    S1 = {c for c in S if spec.tau[c[1] - 1] == 1}
    _require(not np.array_equal(_slice_ik_margin(m, dims, S1), _slice_ik_margin(m_prime, dims, S1)),
             "restricted ik-margins agree on S_1", checks, "slice_margin_obstruction")

    fiber = FiberSpec.of(model, m)
    relax = RelaxationSpec(q, S)
    seen = reachable(fiber, basic_moves(I, J, K), m, relax, cap=cap)
    _require(tuple(int(x) for x in m_prime) not in seen, "m' is reachable from m", checks, "bfs_disconnected")
    return AntiStaircaseWitness(spec, q, n, m, m_prime, slices, checks, displayed_checks, len(seen))


# --- theta gadget -----------------------------------------------------------


@dataclass(eq=False)
class ThetaGadget:
    theta: np.ndarray
    points: list  # enumerated integer points of the shifted polytope
    expected: dict  # closed-form points by name
    differences: dict
    matches: bool

    def to_json(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "points": [list(p) for p in self.points],
            "expected": {k: list(v) for k, v in self.expected.items()},
            "differences": self.differences,
            "matches": self.matches,
        }


def _gadget_system(theta: np.ndarray) -> tuple[DesignMatrix, np.ndarray]:
    """y' >= 0 with y'_0 + y'_{eta+1} = 3 and theta_j y'_0 - y'_j = theta_j - 1."""
    eta = theta.size
    M = np.zeros((eta + 1, eta + 2), dtype=np.int64)
    M[0, 0] = M[0, eta + 1] = 1
    for j in range(eta):
        M[j + 1, 0] = theta[j]
        M[j + 1, j + 1] = -1
    b = np.concatenate([[3], theta - 1])
    return DesignMatrix(M, name="theta-gadget"), b


def theta_gadget(theta, check: bool = True) -> ThetaGadget:
    """Enumerate the integer points of the shifted gadget polytope.

    With ``check`` a mismatch with the four closed-form points raises
    :class:`VerificationError`.
    """
    theta = np.asarray(theta, dtype=np.int64).ravel()
    if theta.size == 0 or np.any(theta < 0):
        raise ValueError("theta must be a nonempty vector of nonnegative integers")
    eta = theta.size
    model, b = _gadget_system(theta)
    pts = sorted(_search_points(FiberSpec(model, b), RelaxationSpec(0), cap=10**6, upper=None))
    one = np.ones(eta + 2, dtype=np.int64)
    z = np.zeros(eta, dtype=np.int64)

    def vec(*parts):
        return np.concatenate([np.atleast_1d(p) for p in parts]).astype(np.int64) + one

    expected = {
        "y1": vec(0, z, 1),
        "y2": vec(1, theta, 0),
        "z1": vec(2, 2 * theta, -1),
        "z2": vec(-1, -theta, 2),
    }
    expected_set = sorted(tuple(int(x) for x in p) for p in expected.values())
    matches = pts == sorted(set(expected_set)) and len(set(expected_set)) == 4
    inner = slice(1, eta + 1)
    diffs = {
        "z1-y2": (expected["z1"] - expected["y2"])[inner].tolist(),
        "y2-y1": (expected["y2"] - expected["y1"])[inner].tolist(),
        "z1-y1": (expected["z1"] - expected["y1"])[inner].tolist(),
        "y1-z2": (expected["y1"] - expected["z2"])[inner].tolist(),
    }
    patterns = (
        diffs["z1-y2"] == theta.tolist()
        and diffs["y2-y1"] == theta.tolist()
        and diffs["y1-z2"] == theta.tolist()
        and diffs["z1-y1"] == (2 * theta).tolist()
    )
    gadget = ThetaGadget(theta, [tuple(p) for p in pts], {k: tuple(int(x) for x in v) for k, v in expected.items()},
                         {**diffs, "patterns_hold": bool(patterns)}, bool(matches))
    if check and not matches:
        missing = [k for k, v in gadget.expected.items() if v not in set(gadget.points)]
        raise VerificationError(
            f"theta={theta.tolist()}: enumerated {len(pts)} points; closed-form points missing: {missing}"
        )
    return gadget
