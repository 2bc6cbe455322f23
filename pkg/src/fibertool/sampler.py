"""Metropolis-Hastings over relaxed fibers, with goodness-of-fit statistics.

The chain keeps two tables: ``u``, the current state in the plain fiber,
and an auxiliary ``v`` that may wander through the relaxed fiber.  Each
step draws a move uniformly from ±M and tries ``w = v + m``:

* ``w`` outside F_{-q,S}(b): the step is rejected, nothing changes;
* ``w`` in F(b): Metropolis acceptance against ``u``; on acceptance both
  ``u`` and ``v`` jump to ``w``; on rejection ``v`` stays put (or resets to
  ``u`` with ``reset_on_reject``);
* otherwise ``v`` moves to ``w`` and ``u`` is repeated.

Randomness comes from :func:`numpy.random.default_rng` (PCG64) seeded with
the configured integer; move indices and uniforms are drawn in two blocks so
output depends only on the seed and the configuration.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .bases import MoveSet
from .fibers import PLAIN, FiberSpec, RelaxationSpec, in_relaxed_fiber
from .tables import Table, marginal

__all__ = [
    "ACCEPTED",
    "REJECTED_OUT_OF_RELAXED",
    "REJECTED_METROPOLIS",
    "IN_RELAXED_EXCURSION",
    "ChainConfig",
    "ChainOutput",
    "PValue",
    "AcceptanceSummary",
    "DegenerateMarginError",
    "run_chain",
    "run_chains",
    "hypergeometric_weight",
    "fitted_values",
    "chi_square_statistic",
    "g_square_statistic",
    "exact_p_value",
    "acceptance_report",
    "batch_means_se",
]

ACCEPTED, REJECTED_OUT_OF_RELAXED, REJECTED_METROPOLIS, IN_RELAXED_EXCURSION = range(4)
OUTCOME_NAMES = ("accepted", "rejected_out_of_relaxed", "rejected_metropolis", "in_relaxed_excursion")
TARGETS = ("uniform", "hypergeometric")


class DegenerateMarginError(ValueError):
    """A cell with zero fitted value holds a positive count."""


@dataclass(frozen=True)
class ChainConfig:
    length: int = 10_000
    burn_in: int | None = None  # default: 10% of length
    thinning: int = 1
    seed: int = 0
    relax: RelaxationSpec = PLAIN
    target: str = "hypergeometric"
    reset_on_reject: bool = False

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("chain length must be positive")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.length // 10)
        if not 0 <= self.burn_in < self.length:
            raise ValueError("burn_in must lie in [0, length)")
        if self.thinning < 1:
            raise ValueError("thinning must be positive")
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}")


@dataclass(eq=False)
class ChainOutput:
    """Chain history stored as indices into the distinct visited states."""

    dims: tuple[int, ...]
    states: np.ndarray  # distinct plain-fiber tables, one per row
    state_ids: np.ndarray  # state index of u_n for n = 1..N
    acceptance_trace: np.ndarray  # outcome code of each proposal
    config: ChainConfig
    statistic_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return self.state_ids.size

    @property
    def samples(self) -> list[Table]:
        return [Table(self.dims, self.states[i]) for i in self.state_ids]

    def kept_ids(self) -> np.ndarray:
        """State ids after burn-in and thinning."""
        return self.state_ids[self.config.burn_in :: self.config.thinning]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.acceptance_trace == ACCEPTED))

    def identical_to(self, other: "ChainOutput") -> bool:
        return (
            np.array_equal(self.states, other.states)
            and np.array_equal(self.state_ids, other.state_ids)
            and np.array_equal(self.acceptance_trace, other.acceptance_trace)
            and np.array_equal(self.statistic_trace, other.statistic_trace)
        )


@lru_cache(maxsize=64)
def _log_factorials(n: int) -> tuple[float, ...]:
    return tuple(math.lgamma(k + 1) for k in range(n + 1))


def hypergeometric_weight(u, target: str = "hypergeometric") -> float:
    """log(1 / prod u_c!), the unnormalized log target; 0 for the uniform target."""
    if target == "uniform":
        return 0.0
    cells = np.asarray(getattr(u, "cells", u), dtype=np.int64).ravel()
    if np.any(cells < 0):
        raise ValueError("weights are defined for nonnegative tables only")
    return -float(sum(math.lgamma(int(c) + 1) for c in cells))


def run_chain(start, M: MoveSet, config: ChainConfig, spec: FiberSpec) -> ChainOutput:
    start_cells = np.asarray(getattr(start, "cells", start), dtype=np.int64).ravel()
    if not in_relaxed_fiber(start_cells, spec, PLAIN):
        raise ValueError("start table is not in the fiber")
    if len(M) == 0:
        raise ValueError("the move set is empty")
    moves = M.symmetric()
    if moves.shape[1] != start_cells.size:
        raise ValueError("moves do not match the table size")
    sparse = [[(int(i), int(m[i])) for i in np.flatnonzero(m)] for m in moves]

    N = config.length
    rng = np.random.default_rng(config.seed)
    picks = rng.integers(0, len(sparse), size=N).tolist()
    unifs = rng.random(N).tolist()

    lo = config.relax.lower_bounds(spec.dims)
    hyper = config.target == "hypergeometric"
    lf = _log_factorials(int(spec.margins.max(initial=0)) + 1) if hyper else ()

    u = tuple(int(x) for x in start_cells)
    v = list(u)
    neg_v = 0  # negative cells of v
    log_u = -sum(lf[x] for x in u) if hyper else 0.0
    index = {u: 0}
    states = [u]
    cur = 0
    ids = np.empty(N, dtype=np.int64)
    trace = np.empty(N, dtype=np.int8)
    reset = config.reset_on_reject

    for n in range(N):
        move = sparse[picks[n]]
        ok = True
        neg_w = neg_v
        for i, a in move:
            y = v[i] + a
            if y < lo[i]:
                ok = False
                break
            neg_w += (y < 0) - (v[i] < 0)
        if not ok:
            trace[n] = REJECTED_OUT_OF_RELAXED
        elif neg_w == 0:
            for i, a in move:
                v[i] += a
            w = tuple(v)
            if hyper:
                log_w = -sum(lf[x] for x in w)
                diff = log_w - log_u
                accept = diff >= 0 or unifs[n] < math.exp(diff)
            else:
                log_w, accept = 0.0, True
            if accept:
                trace[n] = ACCEPTED
                u, log_u, neg_v = w, log_w, 0
                cur = index.get(u)
                if cur is None:
                    cur = index[u] = len(states)
                    states.append(u)
            else:
                trace[n] = REJECTED_METROPOLIS
                if reset:
                    v = list(u)
                    neg_v = 0
                else:
                    for i, a in move:
                        v[i] -= a
        else:
            for i, a in move:
                v[i] += a
            neg_v = neg_w
            trace[n] = IN_RELAXED_EXCURSION
        ids[n] = cur

    return ChainOutput(spec.dims, np.array(states, dtype=np.int64), ids, trace, config)


def _chain_job(args):
    return run_chain(*args)


def run_chains(start, M: MoveSet, config: ChainConfig, spec: FiberSpec, runs: int,
               workers: int = 1) -> list[ChainOutput]:
    """Repeated runs with seeds ``seed + r``; output order follows r."""
    jobs = [(start, M, replace(config, seed=config.seed + r), spec) for r in range(runs)]
    if workers <= 1:
        return [run_chain(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_chain_job, jobs))


_FITTED_CACHE: dict = {}


def fitted_values(spec: FiberSpec, tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    """Maximum likelihood fitted table of a hierarchical model.

    Closed form for two-way independence, iterative proportional fitting
    otherwise.  Fitted values depend only on the margins, so they are cached
    per fiber.
    """
    model = spec.model
    if model.complex is None or model.dims is None:
        raise ValueError("fitted values need a hierarchical model")
    key = (model.dims, tuple(model.complex.faces), spec.margins.tobytes())
    if key in _FITTED_CACHE:
        return _FITTED_CACHE[key]
    dims = model.dims
    faces = model.complex.faces
    offsets = np.cumsum([0] + [int(np.prod([dims[v - 1] for v in f])) for f in faces])
    targets = [spec.margins[offsets[s]:offsets[s + 1]].astype(float) for s in range(len(faces))]
    total = float(targets[0].sum()) if faces else 0.0

    if len(dims) == 2 and sorted(faces) == [(1,), (2,)]:
        rows, cols = targets[faces.index((1,))], targets[faces.index((2,))]
        fit = np.outer(rows, cols) / total if total else np.zeros(dims)
    else:
        fit = np.full(dims, total / float(np.prod(dims)) if total else 0.0)
        for _ in range(max_iter):
            worst = 0.0
            for f, tgt in zip(faces, targets):
                shape = [dims[v - 1] if v in f else 1 for v in range(1, len(dims) + 1)]
                cur = marginal(fit, dims, f).reshape([dims[v - 1] for v in f])
                ratio = np.divide(tgt.reshape(cur.shape), cur, out=np.zeros_like(cur), where=cur > 0)
                worst = max(worst, float(np.abs(cur - tgt.reshape(cur.shape)).max(initial=0)))
                fit = fit * ratio.reshape(shape)
            if worst < tol:
                break
    fit = np.asarray(fit, dtype=float).ravel()
    fit.setflags(write=False)
    _FITTED_CACHE[key] = fit
    return fit


def _expected_or_raise(x: np.ndarray, e: np.ndarray) -> np.ndarray:
    zero = e <= 0
    if np.any(zero & (x > 0)):
        raise DegenerateMarginError("positive count in a cell with zero fitted value")
    return zero


def chi_square_statistic(u, spec: FiberSpec) -> float:
    """Pearson X^2 against the model's fitted values."""
    x = np.asarray(getattr(u, "cells", u), dtype=float).ravel()
    e = fitted_values(spec)
    zero = _expected_or_raise(x, e)
    safe = np.where(zero, 1.0, e)
    return float(np.sum(np.where(zero, 0.0, (x - e) ** 2 / safe)))


def g_square_statistic(u, spec: FiberSpec) -> float:
    """Likelihood-ratio statistic G^2 = 2 sum u log(u / e)."""
    x = np.asarray(getattr(u, "cells", u), dtype=float).ravel()
    e = fitted_values(spec)
    _expected_or_raise(x, e)
    pos = x > 0
    return float(2.0 * np.sum(x[pos] * np.log(x[pos] / e[pos])))


STATISTICS = {"pearson": chi_square_statistic, "g2": g_square_statistic}


def _statistics_matrix(states: np.ndarray, spec: FiberSpec, name: str) -> np.ndarray:
    e = fitted_values(spec)
    x = states.astype(float)
    zero = e <= 0
    if np.any((x[:, zero]) > 0):
        raise DegenerateMarginError("positive count in a cell with zero fitted value")
    if name == "pearson":
        safe = np.where(zero, 1.0, e)
        return np.sum(np.where(zero, 0.0, (x - e) ** 2 / safe), axis=1)
    if name == "g2":
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0) / np.where(zero, 1.0, e)), 0.0)
        return 2.0 * terms.sum(axis=1)
    raise ValueError(f"unknown statistic {name!r}")


def batch_means_se(values: np.ndarray, n_batches: int = 20) -> float:
    """Standard error of the mean of a correlated series by batch means."""
    values = np.asarray(values, dtype=float)
    n_batches = min(n_batches, values.size)
    if n_batches < 2:
        return float("nan")
    size = values.size // n_batches
    means = values[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


@dataclass
class PValue:
    p: float
    se: float
    observed_statistic: float
    output: ChainOutput | None = None

    def to_json(self) -> dict:
        return {"p_value": self.p, "se": self.se, "observed_statistic": self.observed_statistic}


def exact_p_value(observed, M: MoveSet, config: ChainConfig, spec: FiberSpec,
                  statistic: str = "pearson", n_batches: int = 20) -> PValue:
    """Monte Carlo conditional p-value: share of samples at least as extreme."""
    out = run_chain(observed, M, config, spec)
    stats = _statistics_matrix(out.states, spec, statistic)
    obs = float(STATISTICS[statistic](observed, spec))
    out.statistic_trace = stats[out.state_ids]
    kept = stats[out.kept_ids()]
    hits = (kept >= obs - 1e-9 * max(1.0, abs(obs))).astype(float)
    return PValue(float(hits.mean()), batch_means_se(hits, n_batches), obs, out)


@dataclass
class AcceptanceSummary:
    rate: float
    window: int
    window_rates: np.ndarray
    outcome_counts: dict
    excursions: int
    mean_excursion_length: float
    distinct_states: int

    def to_json(self) -> dict:
        return {
            "acceptance_rate": self.rate,
            "window": self.window,
            "outcome_counts": self.outcome_counts,
            "excursions": self.excursions,
            "mean_excursion_length": self.mean_excursion_length,
            "distinct_states": self.distinct_states,
        }

    def to_csv(self, run: int | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(([] if run is None else ["run"]) + ["window_start", "window_end", "acceptance_rate"])
        for k, r in enumerate(self.window_rates):
            row = [k * self.window, (k + 1) * self.window, f"{r:.6f}"]
            w.writerow(([] if run is None else [run]) + row)
        return buf.getvalue()


def acceptance_report(output: ChainOutput, window: int = 1000) -> AcceptanceSummary:
    """Acceptance rates per window of proposals plus excursion statistics."""
    trace = output.acceptance_trace
    acc = (trace == ACCEPTED).astype(float)
    nwin = max(1, math.ceil(trace.size / window))
    rates = np.array([acc[k * window:(k + 1) * window].mean() for k in range(nwin)]) if trace.size else np.zeros(0)
    counts = {name: int(np.sum(trace == code)) for code, name in enumerate(OUTCOME_NAMES)}
    # an excursion is a maximal run of in_relaxed_excursion steps
    exc = trace == IN_RELAXED_EXCURSION
    starts = np.flatnonzero(exc & ~np.concatenate([[False], exc[:-1]])) if exc.size else np.zeros(0)
    n_exc = int(starts.size)
    mean_len = float(exc.sum() / n_exc) if n_exc else 0.0
    return AcceptanceSummary(
        float(acc.mean()) if acc.size else 0.0, window, rates, counts, n_exc, mean_len,
        int(np.unique(output.state_ids).size),
    )
