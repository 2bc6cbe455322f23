import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fibertool.bases import determinant
from fibertool.counterexamples import (
    STAIRCASE_EXAMPLE_TAU,
    StaircaseSpec,
    VerificationError,
    anti_staircase_set,
    anti_staircase_witness,
    build_relaxation_family,
    certify_relaxation_family,
    explicit_unimodular,
    render_layers,
    staircase_set,
    theta_gadget,
)
from oracles import theta_points


def test_unimodular_n4():
    U = explicit_unimodular(4)
    assert U.tolist() == [[1, 2, 3, -2], [0, 1, 2, -1], [0, 0, 1, 0], [0, 0, 0, 1]]
    assert determinant(U) == 1


def test_small_n_rejected():
    with pytest.raises(ValueError):
        build_relaxation_family(3)


@pytest.mark.parametrize("n", range(4, 9))
def test_relaxation_family(n):
    inst = build_relaxation_family(n)
    assert all(inst.checks.values())
    cert = certify_relaxation_family(inst)
    assert cert["verified"]
    assert cert["every_step_below_minus_n_plus_2"]
    assert cert["disconnected_all_q_le_n_minus_3"]
    assert cert["minimal_q"] == n - 2
    assert cert["norm_row_1"] == 4
    assert cert["norm_col_1"] == (4 if n == 4 else 5)


def test_staircase_identity():
    spec = StaircaseSpec(3, 3, (1, 2, 3))
    assert staircase_set(spec) == {(i, j, j) for i in range(1, 4) for j in range(1, 4)}
    assert len(anti_staircase_set(spec)) == 18


@given(st.integers(3, 5), st.lists(st.integers(1, 3), min_size=3, max_size=6))
@settings(max_examples=40, deadline=None)
def test_staircase_sizes(I, tau):
    if set(tau) != {1, 2, 3}:
        with pytest.raises(ValueError):
            StaircaseSpec(I, len(tau), tuple(tau))
        return
    spec = StaircaseSpec(I, len(tau), tuple(tau))
    S, T = staircase_set(spec), anti_staircase_set(spec)
    assert len(S) == I * len(tau) and len(T) == 2 * I * len(tau)
    assert not S & T and len(S | T) == 3 * I * len(tau)


def test_render_staircase_example():
    spec = StaircaseSpec(4, 6, STAIRCASE_EXAMPLE_TAU)
    golden = "\n".join(
        ["k=1"] + [".....#"] * 4 + ["k=2"] + ["..###."] * 4 + ["k=3"] + ["##...."] * 4
    )
    assert render_layers(staircase_set(spec), 4, 6) == golden


@pytest.mark.parametrize("q", [1, 2, 3])
def test_anti_staircase_witness(q):
    w = anti_staircase_witness(StaircaseSpec(3, 3, (1, 2, 3)), q)
    assert all(w.checks.values()) and len(w.checks) == 6
    assert w.m.min() >= 0 and w.m_prime.min() >= 0
    assert not w.displayed["is_move"]
    assert set(w.to_json()) >= {"m", "m_prime", "checks"}


def test_witness_on_wider_tau():
    w = anti_staircase_witness(StaircaseSpec(3, 4, (2, 1, 3, 1)), 1)
    assert w.slices == (2, 1, 3)
    assert all(w.checks.values())


def test_theta_zero_and_unit_entries():
    for theta in ([0], [1], [1, 0, 1], [0, 0]):
        g = theta_gadget(theta)
        assert g.matches and g.differences["patterns_hold"]
        assert len(g.points) == 4


def test_theta_larger_entry_fails():
    with pytest.raises(VerificationError):
        theta_gadget([2])
    g = theta_gadget([2], check=False)
    assert g.points == [(1, 1, 2), (2, 3, 1), (3, 5, 0)]
    assert g.expected["z2"] not in g.points


@given(st.lists(st.integers(0, 4), min_size=1, max_size=3))
@settings(max_examples=30, deadline=None)
def test_theta_points_match_oracle(theta):
    g = theta_gadget(theta, check=False)
    assert g.points == theta_points(theta)
    assert g.matches == (max(theta) <= 1)


def test_theta_input_validation():
    with pytest.raises(ValueError):
        theta_gadget([])
    with pytest.raises(ValueError):
        theta_gadget([-1])
