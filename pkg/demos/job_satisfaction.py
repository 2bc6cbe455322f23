"""Exact test of independence on a 4x4 job-satisfaction table.

Counts the fiber exactly, then estimates the conditional p-value of
Pearson's statistic with a swap-move chain.
"""
import numpy as np

from fibertool.bases import independence_swap_basis
from fibertool.fibers import FiberSpec, count_two_way_fiber
from fibertool.models import independence_matrix
from fibertool.sampler import ChainConfig, acceptance_report, chi_square_statistic, exact_p_value

TABLE = np.array([[1, 2, 1, 0], [3, 3, 6, 1], [10, 10, 14, 9], [6, 7, 12, 11]])


def main():
    print(f"fiber size: {count_two_way_fiber(TABLE.sum(axis=1), TABLE.sum(axis=0)):,}")
    spec = FiberSpec.of(independence_matrix(4, 4), TABLE.ravel())
    print(f"observed X^2 = {chi_square_statistic(TABLE.ravel(), spec):.3f}")
    pv = exact_p_value(TABLE.ravel(), independence_swap_basis(4, 4), ChainConfig(length=50_000, seed=1), spec)
    rep = acceptance_report(pv.output)
    print(f"Monte Carlo p-value {pv.p:.4f} (batch-means SE {pv.se:.4f}), acceptance {rep.rate:.3f}")


if __name__ == "__main__":
    main()
