import math
from collections import Counter

import numpy as np
import pytest

from fibertool.bases import MoveSet, independence_swap_basis, lattice_basis
from fibertool.fibers import FiberSpec, RelaxationSpec, enumerate_fiber, in_relaxed_fiber
from fibertool.models import SimplicialComplex, hierarchical_design_matrix, independence_matrix
from fibertool.sampler import (
    ACCEPTED,
    IN_RELAXED_EXCURSION,
    REJECTED_METROPOLIS,
    REJECTED_OUT_OF_RELAXED,
    ChainConfig,
    DegenerateMarginError,
    acceptance_report,
    batch_means_se,
    chi_square_statistic,
    exact_p_value,
    fitted_values,
    g_square_statistic,
    hypergeometric_weight,
    run_chain,
    run_chains,
)
from oracles import pearson

JOB = np.array([[1, 2, 1, 0], [3, 3, 6, 1], [10, 10, 14, 9], [6, 7, 12, 11]])
SPARSE = np.array([[1, 0, 0, 1], [1, 1, 0, 0], [0, 1, 1, 0], [0, 0, 1, 1]])


def _fiber(u, dims):
    A = independence_matrix(*dims)
    return FiberSpec.of(A, np.asarray(u).ravel()), independence_swap_basis(*dims)


def test_config_validation():
    assert ChainConfig(length=100).burn_in == 10
    with pytest.raises(ValueError):
        ChainConfig(length=10, burn_in=10)
    with pytest.raises(ValueError):
        ChainConfig(target="other")


def test_visits_whole_sparse_fiber():
    spec, M = _fiber(SPARSE, (4, 4))
    out = run_chain(SPARSE.ravel(), M, ChainConfig(length=300_000, seed=11, target="uniform"), spec)
    visited = {s.tobytes() for s in out.states}
    assert visited == {t.cells.tobytes() for t in enumerate_fiber(spec)}


def test_single_point_fiber():
    u = np.array([[1, 0], [0, 0]])
    spec, M = _fiber(u, (2, 2))
    out = run_chain(u.ravel(), M, ChainConfig(length=500, seed=1), spec)
    assert len(out.states) == 1 and out.acceptance_rate == 0.0
    assert np.all(out.acceptance_trace == REJECTED_OUT_OF_RELAXED)
    assert acceptance_report(out, 100).window_rates.tolist() == [0.0] * 5
    pv = exact_p_value(u.ravel(), M, ChainConfig(length=500, seed=1), spec)
    assert pv.p == 1.0


def test_two_point_uniform_frequency():
    u = np.array([[1, 0], [0, 1]])
    spec, M = _fiber(u, (2, 2))
    out = run_chain(u.ravel(), M, ChainConfig(length=100_000, seed=5, target="uniform"), spec)
    freq = np.mean(out.state_ids == 0)
    assert abs(freq - 0.5) < 0.02


def test_samples_stay_in_fiber_with_excursions():
    A = independence_matrix(3, 3)
    u = np.array([[1, 0, 2], [0, 3, 0], [2, 0, 1]]).ravel()
    spec = FiberSpec.of(A, u)
    cfg = ChainConfig(length=20_000, seed=3, relax=RelaxationSpec(1))
    out = run_chain(u, lattice_basis(A), cfg, spec)
    assert np.any(out.acceptance_trace == IN_RELAXED_EXCURSION)
    for s in out.states:
        assert in_relaxed_fiber(s, spec)
    rep = acceptance_report(out)
    assert rep.excursions > 0 and rep.mean_excursion_length >= 1


def test_reset_on_reject_switch():
    A = independence_matrix(3, 3)
    u = np.array([[1, 0, 2], [0, 3, 0], [2, 0, 1]]).ravel()
    spec = FiberSpec.of(A, u)
    base = ChainConfig(length=5000, seed=9, relax=RelaxationSpec(1))
    keep = run_chain(u, lattice_basis(A), base, spec)
    reset = run_chain(u, lattice_basis(A), ChainConfig(length=5000, seed=9, relax=RelaxationSpec(1),
                                                     reset_on_reject=True), spec)
    assert np.any(keep.acceptance_trace == REJECTED_METROPOLIS)
    assert not keep.identical_to(reset)


def test_errors():
    spec, M = _fiber(SPARSE, (4, 4))
    with pytest.raises(ValueError):
        run_chain(np.zeros(16, dtype=int), M, ChainConfig(length=10), spec)
    with pytest.raises(ValueError):
        run_chain(SPARSE.ravel(), MoveSet(np.zeros((0, 16)), "imported", spec.model), ChainConfig(length=10), spec)


def test_determinism():
    spec, M = _fiber(JOB, (4, 4))
    cfg = ChainConfig(length=5000, seed=42)
    a = exact_p_value(JOB.ravel(), M, cfg, spec).output
    b = exact_p_value(JOB.ravel(), M, cfg, spec).output
    assert a.identical_to(b)
    c = exact_p_value(JOB.ravel(), M, ChainConfig(length=5000, seed=43), spec).output
    assert not a.identical_to(c)
    runs = run_chains(JOB.ravel(), M, cfg, spec, 3)
    assert runs[0].identical_to(run_chain(JOB.ravel(), M, cfg, spec))
    assert runs[2].config.seed == 44


def test_chi_square_examples():
    u = np.array([[1, 1], [1, 1]])
    spec, _ = _fiber(u, (2, 2))
    assert chi_square_statistic(u.ravel(), spec) == pytest.approx(0.0)
    spec, _ = _fiber(np.eye(2, dtype=int), (2, 2))
    assert chi_square_statistic(np.eye(2, dtype=int).ravel(), spec) == pytest.approx(2.0)
    spec, _ = _fiber(JOB, (4, 4))
    assert chi_square_statistic(JOB.ravel(), spec) == pytest.approx(pearson(JOB))


def test_degenerate_margins():
    u = np.array([[1, 0], [0, 0]])
    spec, _ = _fiber(u, (2, 2))
    assert chi_square_statistic(u.ravel(), spec) == pytest.approx(0.0)
    with pytest.raises(DegenerateMarginError):
        chi_square_statistic(np.array([0, 0, 0, 1]), spec)


def test_ipf_matches_closed_form_and_margins():
    cx = SimplicialComplex.parse("12,13,23")
    A = hierarchical_design_matrix(cx, (2, 2, 3))
    rng = np.random.default_rng(0)
    u = rng.integers(1, 6, size=12)
    spec = FiberSpec.of(A, u)
    fit = fitted_values(spec)
    assert np.allclose(A.matrix @ fit, spec.margins, atol=1e-6)
    # G^2 is nonnegative and zero at the fitted table of a saturated model
    sat = FiberSpec.of(hierarchical_design_matrix(SimplicialComplex.parse("123"), (2, 2, 3)), u)
    assert g_square_statistic(u, sat) == pytest.approx(0.0, abs=1e-9)
    assert g_square_statistic(u, spec) >= 0


def test_hypergeometric_weight():
    assert hypergeometric_weight(np.array([0, 1, 1, 0])) == 0.0
    u = np.array([3, 1, 2, 4])
    m = np.array([1, -1, -1, 1])
    ratio = math.exp(hypergeometric_weight(u + m) - hypergeometric_weight(u))
    # (3! 1! 2! 4!) / (4! 0! 1! 5!)
    assert ratio == pytest.approx((6 * 1 * 2 * 24) / (24 * 1 * 1 * 120))
    assert hypergeometric_weight(u, "uniform") == 0.0


def test_p_value_sparse_table_markov():
    spec, M = _fiber(SPARSE, (4, 4))
    pv = exact_p_value(SPARSE.ravel(), M, ChainConfig(length=10_000, seed=7), spec)
    assert abs(pv.p - 1.0) <= 0.05


def test_p_value_two_point_closed_form():
    u = np.array([[2, 0], [0, 1]])
    spec, M = _fiber(u, (2, 2))
    other = np.array([1, 1, 1, 0])
    assert chi_square_statistic(u.ravel(), spec) > chi_square_statistic(other, spec)
    # hypergeometric weights 1/2 and 1
    pv = exact_p_value(u.ravel(), M, ChainConfig(length=200_000, burn_in=0, seed=21), spec)
    assert abs(pv.p - 1 / 3) < max(3 * pv.se, 0.01)


def test_acceptance_positive_for_markov_basis():
    spec, M = _fiber(SPARSE, (4, 4))
    for out in run_chains(SPARSE.ravel(), M, ChainConfig(length=10_000, seed=100), spec, 5):
        rep = acceptance_report(out)
        assert rep.rate > 0 and np.all(rep.window_rates > 0)
        assert sum(rep.outcome_counts.values()) == 10_000
    csv = rep.to_csv(run=0)
    assert csv.splitlines()[0] == "run,window_start,window_end,acceptance_rate"
    assert len(csv.splitlines()) == 11


@pytest.mark.parametrize("u", [np.array([[1, 0, 0], [0, 1, 1]]), np.array([[1, 0], [0, 1]])])
def test_detailed_balance_small_fibers(u):
    spec, M = _fiber(u, u.shape)
    out = run_chain(u.ravel(), M, ChainConfig(length=200_000, seed=17, target="uniform"), spec)
    ids = out.state_ids
    trans = Counter(zip(ids[:-1].tolist(), ids[1:].tolist()))
    k = len(out.states)
    assert k == len(enumerate_fiber(spec))
    for a in range(k):
        for b in range(a + 1, k):
            n_ab, n_ba = trans[(a, b)], trans[(b, a)]
            assert abs(n_ab - n_ba) <= 4 * math.sqrt(n_ab + n_ba) + 5


def test_batch_means_se():
    assert math.isnan(batch_means_se(np.ones(1)))
    assert batch_means_se(np.ones(100)) == 0.0
    rng = np.random.default_rng(0)
    x = rng.normal(size=100_000)
    assert batch_means_se(x) == pytest.approx(1 / math.sqrt(100_000), rel=0.5)


def test_uniform_frequencies_aggregate():
    # mean squared z-score over all states is near 1 for a correct sampler
    from fibertool.bases import graver_basis

    spec, _ = _fiber(SPARSE, (4, 4))
    M = graver_basis(spec.model)
    out = run_chain(SPARSE.ravel(), M, ChainConfig(length=300_000, burn_in=0, seed=77, target="uniform"), spec)
    ids = out.kept_ids()
    z2 = []
    for s in range(len(out.states)):
        ind = (ids == s).astype(float)
        z2.append(((ind.mean() - 1 / 282) / batch_means_se(ind)) ** 2)
    assert len(z2) == 282
    assert 0.5 < np.mean(z2) < 2.0
