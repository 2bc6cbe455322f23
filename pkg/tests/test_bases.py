import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fibertool.bases import (
    MoveSet,
    basic_moves,
    bounded_graver_subset,
    circuits,
    determinant,
    embedded_two_way_move,
    graver_basis,
    hnf_column_style,
    independence_swap_basis,
    lattice_basis,
    spans_integer_kernel,
)
from fibertool.counterexamples import explicit_unimodular
from fibertool.fibers import family_connectivity
from fibertool.models import (
    a_family_matrix,
    enumerate_complexes,
    hierarchical_design_matrix,
    independence_matrix,
    no_three_way_matrix,
)
from fibertool.tables import marginal, sign_order_leq
from oracles import brute_graver, kernel_box


def test_hnf_a1():
    res = hnf_column_style(a_family_matrix(3))
    assert res.H.tolist() == [[1, 0, 0]]
    U3 = explicit_unimodular(3)
    assert U3[:, -2:].T.tolist() == [[2, 1, 0], [-1, 0, 1]]
    assert not np.any(a_family_matrix(3).matrix @ U3[:, -2:])


def test_hnf_identity():
    res = hnf_column_style(np.eye(3, dtype=int))
    assert np.array_equal(res.H, np.eye(3)) and np.array_equal(res.U, np.eye(3))


@pytest.mark.parametrize("n", range(4, 9))
def test_hnf_banded_family(n):
    A = a_family_matrix(n)
    res = hnf_column_style(A)
    expected = np.hstack([np.eye(n - 2), np.zeros((n - 2, 2))])
    assert np.array_equal(np.asarray(res.H, dtype=np.int64), expected)
    assert abs(determinant(res.U)) == 1
    # the canonical kernel columns coincide with the explicit U
    assert np.array_equal(lattice_basis(A).moves, explicit_unimodular(n)[:, -2:].T)


def test_lattice_basis_examples():
    n = 6
    assert lattice_basis(a_family_matrix(n)).moves.tolist() == [
        [5, 4, 3, 2, 1, 0], [-4, -3, -2, -1, 0, 1]]
    assert len(lattice_basis(np.eye(4, dtype=int))) == 0
    L = lattice_basis(independence_matrix(2, 2))
    assert len(L) == 1 and np.array_equal(np.abs(L.moves[0]), [1, 1, 1, 1])


def test_spans_integer_kernel():
    A = independence_matrix(2, 2)
    assert spans_integer_kernel(lattice_basis(A))
    assert not spans_integer_kernel(MoveSet([[2, -2, -2, 2]], "imported", A))
    assert spans_integer_kernel(basic_moves(3, 3, 3))


def test_graver_small():
    G = graver_basis(independence_matrix(2, 2))
    assert G.complete and G.moves.tolist() == [[1, -1, -1, 1]]
    assert brute_graver(independence_matrix(2, 2).matrix, 3) == G.as_set()
    G0 = graver_basis(np.eye(3, dtype=int))
    assert len(G0) == 0 and G0.complete
    with pytest.raises(ValueError):
        graver_basis(independence_matrix(2, 2), 0)


def test_graver_truncation_flag():
    # kernel spanned by (2, -1): its only Graver element has entry 2
    G = graver_basis(np.array([[1, 2]]), norm_cap=1)
    assert not G.complete and len(G) == 0
    assert graver_basis(np.array([[1, 2]]), norm_cap=2).moves.tolist() == [[2, -1]]


def test_bounded_subset():
    G = graver_basis(independence_matrix(2, 2))
    assert len(bounded_graver_subset(G, 0)) == 0
    assert bounded_graver_subset(G, 1).as_set() == G.as_set()
    with pytest.raises(ValueError):
        bounded_graver_subset(lattice_basis(independence_matrix(2, 2)), 1)


def test_bounded_subset_no3way_zero_one_fibers():
    A = no_three_way_matrix(2, 2, 2)
    G1 = bounded_graver_subset(graver_basis(A), 1)
    rep = family_connectivity(A, G1, max_total=8, upper=1)
    assert rep.all_connected


def test_circuits():
    assert circuits(independence_matrix(2, 2)).moves.tolist() == [[1, -1, -1, 1]]
    assert len(circuits(np.eye(2, dtype=int))) == 0
    C = circuits(independence_matrix(2, 3))
    assert C.as_set() == independence_swap_basis(2, 3).as_set()
    K = kernel_box(independence_matrix(2, 3).matrix, 2)
    supports = {tuple(np.flatnonzero(x)) for x in K}
    minimal = {s for s in supports if not any(set(t) < set(s) for t in supports)}
    assert {tuple(np.flatnonzero(c)) for c in C.moves} == minimal


def test_basic_moves():
    for dims in [(2, 2, 2), (3, 3, 3), (2, 3, 4)]:
        B = basic_moves(*dims)
        I, J, K = dims
        assert len(B) == (I * (I - 1) // 2) * (J * (J - 1) // 2) * (K * (K - 1) // 2)
        A = no_three_way_matrix(*dims)
        assert not np.any(A.matrix @ B.moves.T)
        assert np.all(np.abs(B.moves).sum(axis=1) == 8)
    G = graver_basis(no_three_way_matrix(3, 3, 2))
    assert basic_moves(3, 3, 2).as_set() <= G.as_set()


def test_swap_basis():
    S = independence_swap_basis(4, 4)
    b = np.zeros(16, dtype=int)
    b[[0, 5]] = 1
    b[[1, 4]] = -1
    assert b.tobytes() in S.as_set()
    assert len(independence_swap_basis(2, 2)) == 1
    S3 = independence_swap_basis(3, 3)
    assert len(S3) == 9 and not np.any(independence_matrix(3, 3).matrix @ S3.moves.T)


def test_embedded_moves():
    b = embedded_two_way_move(2, 1, 1, 2, 1, 1, 2, K=2)
    assert b.reshape(2, 1, 2)[:, 0, :].tolist() == [[1, -1], [-1, 1]]
    basic = basic_moves(2, 2, 2).moves[0]
    total = embedded_two_way_move(2, 2, 1, 2, 1, 1, 2, K=2) + embedded_two_way_move(2, 2, 2, 1, 2, 1, 2, K=2)
    assert np.array_equal(total, basic) or np.array_equal(total, -basic)
    for args in [(3, 3, 1, 2, 1, 1, 2), (3, 4, 3, 1, 4, 3, 2)]:
        e = embedded_two_way_move(*args)
        dims = (args[0], args[1], 3)
        assert not marginal(e, dims, (1, 2)).any() and not marginal(e, dims, (1,)).any()
        assert marginal(e, dims, (1, 3)).any()
    with pytest.raises(ValueError):
        embedded_two_way_move(3, 3, 1, 1, 1, 1, 2)


matrices = st.tuples(st.integers(1, 8), st.integers(1, 12)).flatmap(
    lambda s: hnp.arrays(np.int64, s, elements=st.integers(-3, 3)))


@settings(max_examples=60, deadline=None)
@given(matrices)
def test_hnf_properties(A):
    res = hnf_column_style(A)
    H = np.asarray(res.H, dtype=object)
    U = np.asarray(res.U, dtype=object)
    assert np.array_equal(np.asarray(A, dtype=object).dot(U), H)
    assert abs(determinant(res.U)) == 1
    assert not np.any(H[:, res.rank:])
    # pivot convention: positive pivots, entries left of a pivot reduced modulo it
    row = 0
    for j in range(res.rank):
        while H[row, j] == 0:
            row += 1
        assert H[row, j] > 0
        assert all(0 <= H[row, k] < H[row, j] for k in range(j))
        assert not np.any(H[:row, j])
        row += 1


SMALL_MODELS = [(d, cx) for d in [(2, 2), (2, 3), (3, 3), (2, 4), (2, 2, 2), (3, 4), (2, 6), (2, 2, 3)]
                for cx in enumerate_complexes(len(d))]


@pytest.mark.parametrize("dims,cx", SMALL_MODELS, ids=lambda x: str(x))
def test_graver_equals_brute_force(dims, cx):
    A = hierarchical_design_matrix(cx, dims)
    G = graver_basis(A, norm_cap=10)
    assert G.complete
    top = int(np.abs(G.moves).max(initial=1))
    box = top + 1 if str(cx) != "1,2,3" or np.prod(dims) <= 8 else top
    assert brute_graver(A.matrix, box) == G.as_set()
    for x in G.moves:
        assert not any(sign_order_leq(y, x) and not np.array_equal(y, x) for y in G.moves)
    if len(G):
        assert spans_integer_kernel(G, A)
    C = circuits(A)
    assert C.as_set() <= G.as_set()


@pytest.mark.parametrize("dims", [(2, 3), (3, 3)])
def test_swaps_inside_graver(dims):
    assert independence_swap_basis(*dims).as_set() <= graver_basis(independence_matrix(*dims)).as_set()
