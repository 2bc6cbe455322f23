"""Graver complexity and the n-fold Graver basis of the 2x3 independence block."""
from math import comb

import numpy as np

from fibertool.models import SimplicialComplex, independence_matrix
from fibertool.nfold import NFoldSpec, graver_complexity, hierarchical_graver_size_bound, nfold_graver

A = independence_matrix(2, 3).matrix
B = np.eye(6, dtype=np.int64)

g = graver_complexity(A, B)
print(f"g(A, B) = {g.value} (exact: {g.exact})")
for n in (3, 4, 5):
    G = nfold_graver(NFoldSpec(A, B, n))
    print(f"n={n}: |Gr| = {len(G)}, lifting bound = {15 * comb(n, 3)}")

cx = SimplicialComplex.parse("123,124,34")
for d1, d2 in [(2, 2), (2, 3), (3, 3)]:
    print(f"dims ({d1},{d2},2,3): Graver size at most {hierarchical_graver_size_bound(cx, (d1, d2, 2, 3), (1, 2))}")
