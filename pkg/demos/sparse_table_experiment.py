"""Markov basis versus lattice basis on two sparse 4x4 tables.

Writes per-window acceptance traces and per-run p-values to ./sparse_out.
"""
import json
import sys
from pathlib import Path

from fibertool.cli import run_pipeline

runs2 = int(sys.argv[1]) if len(sys.argv) > 1 else 20
summary = run_pipeline(Path("sparse_out"), runs_sparse=10, runs_second=runs2, chain_length=10_000, seed=0)
for name in ("markov", "lattice"):
    f1 = summary["sparse"][name]
    print(f"{name:8s} stuck runs {f1['stuck_runs']}/10, mean acceptance {sum(f1['acceptance_rates']) / 10:.3f}")
print(json.dumps(summary["second"], indent=2))
