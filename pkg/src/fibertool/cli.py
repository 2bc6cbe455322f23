"""``fibertool`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 resource
cap exceeded.  A JSON run manifest goes to stderr, or to ``--manifest FILE``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from math import comb
from pathlib import Path

import numpy as np

from . import __version__
from .bases import (
    MoveSet,
    basic_moves,
    circuits,
    graver_basis,
    independence_swap_basis,
    integer_rank,
    lattice_basis,
    spans_integer_kernel,
)
from .counterexamples import (
    StaircaseSpec,
    VerificationError,
    anti_staircase_witness,
    build_relaxation_family,
    certify_relaxation_family,
    theta_gadget,
)
from .fibers import (
    CapExceeded,
    FiberSpec,
    RelaxationSpec,
    UnboundedFiberError,
    connectivity,
    count_two_way_fiber,
    enumerate_fiber,
)
from .formats import format_matrix, format_table_vector, read_index_file, read_matrix, read_table, write_matrix
from .models import (
    DesignMatrix,
    SimplicialComplex,
    a_family_matrix,
    hierarchical_design_matrix,
    independence_matrix,
    lawrence_lifting,
    nfold_matrix,
    no_three_way_matrix,
)
from .nfold import NFoldSpec, graver_complexity, graver_complexity_upper_bound, nfold_graver
from .sampler import ChainConfig, acceptance_report, exact_p_value
from .tables import Table

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_CAP = 0, 1, 2, 3
DEFAULT_ENUM_CAP = 10**7

SPARSE_TABLE = [[1, 0, 0, 1], [1, 1, 0, 0], [0, 1, 1, 0], [0, 0, 1, 1]]
SECOND_TABLE = [[10, 0, 10, 0], [0, 3, 0, 3], [0, 0, 2, 40], [2, 40, 0, 0]]


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def enumeration_cap() -> int:
    raw = os.environ.get("FIBERTOOL_CAP")
    if not raw:
        return DEFAULT_ENUM_CAP
    try:
        cap = int(float(raw))
    except ValueError:
        raise UsageError(f"FIBERTOOL_CAP must be an integer, got {raw!r}") from None
    if cap < 1:
        raise UsageError("FIBERTOOL_CAP must be positive")
    return cap


# --- model mini-language ------------------------------------------------------


def _ints(tokens, what) -> list[int]:
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise UsageError(f"{what}: expected integers, got {' '.join(tokens)!r}") from None


def parse_model(text: str) -> DesignMatrix:
    """Model from a spec string, JSON, or a 4ti2 matrix file path.

    ``independence d1 d2 ...``, ``no3way I J K``,
    ``complex 12,23 dims d1 d2 d3``, ``afamily n``, ``lawrence <spec>``,
    ``{"complex": [[1,2],[2,3]], "dims": [2,2,2]}`` or ``{"matrix": [[...]]}``.
    """
    text = text.strip()
    if not text:
        raise UsageError("empty model specification")
    if text.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"model JSON: {exc.msg} at position {exc.pos}") from None
        if "matrix" in obj:
            return DesignMatrix(np.array(obj["matrix"], dtype=np.int64), name="matrix")
        if "complex" in obj and "dims" in obj:
            cx = SimplicialComplex(len(obj["dims"]), tuple(tuple(f) for f in obj["complex"]))
            return hierarchical_design_matrix(cx, obj["dims"])
        raise UsageError("model JSON needs 'matrix' or 'complex' and 'dims'")
    path = Path(text)
    if path.is_file():
        return DesignMatrix(read_matrix(path), name=path.name)
    tokens = text.split()
    head, rest = tokens[0].lower(), tokens[1:]
    try:
        if head == "independence":
            return independence_matrix(*_ints(rest, "independence"))
        if head == "no3way":
            if len(rest) != 3:
                raise UsageError("no3way takes exactly three level counts")
            return no_three_way_matrix(*_ints(rest, "no3way"))
        if head == "afamily":
            if len(rest) != 1:
                raise UsageError("afamily takes one integer n")
            return a_family_matrix(_ints(rest, "afamily")[0])
        if head == "lawrence":
            return lawrence_lifting(parse_model(" ".join(rest)))
        if head == "complex":
            if "dims" not in rest or rest.index("dims") != 1:
                raise UsageError("expected 'complex FACES dims d1 ... dk'")
            dims = _ints(rest[2:], "dims")
            cx = SimplicialComplex.parse(rest[0], ground_size=len(dims))
            return hierarchical_design_matrix(cx, dims)
    except UsageError:
        raise
    except (ValueError, TypeError) as exc:
        raise UsageError(f"model {text!r}: {exc}") from None
    raise UsageError(f"unknown model kind {tokens[0]!r} at position 0")


def _model_summary(model: DesignMatrix) -> dict:
    return {
        "name": model.name,
        "rows": model.rows,
        "cols": model.cols,
        "rank": integer_rank(model.matrix),
        "dims": list(model.dims) if model.dims else None,
        "faces": [list(f) for f in model.complex.faces] if model.complex else None,
    }


def _load_moves(path, model: DesignMatrix, role="imported") -> MoveSet:
    arr = read_matrix(path)
    return MoveSet(arr, role, model)


def _moves_of_kind(model: DesignMatrix, kind: str, cap: int) -> MoveSet:
    if kind == "lattice":
        return lattice_basis(model)
    if kind == "graver":
        return graver_basis(model, cap)
    if kind == "circuits":
        return circuits(model, cap)
    if kind == "basic":
        if model.name != "no3way" or model.dims is None:
            raise UsageError("basic moves exist for no3way models only")
        return basic_moves(*model.dims)
    if kind == "markov":
        if model.name != "independence" or model.dims is None or len(model.dims) != 2:
            raise UsageError("built-in Markov bases exist for two-way independence only")
        return independence_swap_basis(*model.dims)
    raise UsageError(f"unknown move kind {kind!r}")


def _resolve_moves(args, model: DesignMatrix) -> MoveSet:
    if getattr(args, "moves", None):
        return _load_moves(args.moves, model)
    return _moves_of_kind(model, args.kind, args.cap)


def _relaxation(args, dims) -> RelaxationSpec:
    S = read_index_file(args.S, dims) if getattr(args, "S", None) else None
    return RelaxationSpec(args.q, S)


def _load_table(args, model: DesignMatrix) -> Table:
    table = read_table(args.table, model.dims)
    if table.size != model.cols:
        raise UsageError(f"table has {table.size} cells but the model has {model.cols} columns")
    if model.dims and table.dims != model.dims:
        table = Table(model.dims, table.cells)
    return table


# --- manifest -------------------------------------------------------------------


class Manifest:
    def __init__(self, argv):
        self.data = {
            "command_line": ["fibertool", *argv],
            "seed": None,
            "versions": {
                "fibertool": __version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
            },
            "inputs": {},
            "outputs": [],
            "timings": {},
        }
        try:
            import scipy

            self.data["versions"]["scipy"] = scipy.__version__
        except ImportError:
            pass
        self._t0 = time.perf_counter()

    def input(self, path):
        if path and Path(path).is_file():
            self.data["inputs"][str(path)] = hashlib.sha256(Path(path).read_bytes()).hexdigest()

    def output(self, path):
        self.data["outputs"].append(str(path))

    def finish(self, code, dest):
        self.data["exit_code"] = code
        self.data["timings"]["wall_seconds"] = round(time.perf_counter() - self._t0, 6)
        text = json.dumps(self.data, sort_keys=True)
        if dest:
            Path(dest).write_text(text + "\n")
        else:
            print(text, file=sys.stderr)


def _emit(text: str, out, manifest: Manifest):
    if out:
        Path(out).write_text(text)
        manifest.output(out)
    else:
        sys.stdout.write(text)


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


# --- commands ---------------------------------------------------------------------


def cmd_model(args, manifest):
    model = parse_model(" ".join(args.spec))
    summary = _model_summary(model)
    _emit(format_matrix(model), args.output, manifest)
    if args.output:
        _print_json(summary)
    if args.json:
        Path(args.json).write_text(json.dumps(summary, indent=2) + "\n")
        manifest.output(args.json)
    return EXIT_OK


def cmd_bases(args, manifest):
    manifest.input(args.model)
    model = parse_model(args.model)
    moves = _moves_of_kind(model, args.kind, args.cap)
    _emit(format_matrix(moves.moves), args.output, manifest)
    summary = {
        "kind": args.kind,
        "count": len(moves),
        "complete": moves.complete,
        "spans_kernel": spans_integer_kernel(moves, model),
        "max_norm1": int(np.abs(moves.moves).sum(axis=1).max(initial=0)),
    }
    if args.output:
        _print_json(summary)
    if args.json:
        Path(args.json).write_text(json.dumps(summary, indent=2) + "\n")
        manifest.output(args.json)
    return EXIT_OK


def cmd_nfold(args, manifest):
    for p in (args.A, args.B):
        manifest.input(p)
    A, B = read_matrix(args.A), read_matrix(args.B)
    if B.size == 0:
        B = B.reshape(0, A.shape[1])
    g = graver_complexity(A, B, args.cap)
    summary = {"g": g.value, "g_exact": g.exact, "g_upper_bound": graver_complexity_upper_bound(A, B)}
    if not args.complexity_only:
        spec = NFoldSpec(A, B, args.n)
        G = nfold_graver(spec, args.cap, g)
        base = len(graver_basis(nfold_matrix(A, B, g.value), args.cap)) if g.value else 0
        summary.update({
            "n": args.n,
            "size": len(G),
            "complete": G.complete,
            "bound": base * comb(args.n, g.value) if args.n > g.value else len(G),
        })
        _emit(format_matrix(G.moves), args.output, manifest)
    if args.output or args.complexity_only:
        _print_json(summary)
    if args.json:
        Path(args.json).write_text(json.dumps(summary, indent=2) + "\n")
        manifest.output(args.json)
    return EXIT_OK


def cmd_fiber(args, manifest):
    manifest.input(args.table)
    manifest.input(args.moves)
    manifest.input(args.S)
    model = parse_model(args.model)
    table = _load_table(args, model)
    spec = FiberSpec.of(model, table)
    cap = enumeration_cap()
    relax = _relaxation(args, spec.dims)
    if args.action == "count":
        if (model.name == "independence" and model.dims and len(model.dims) == 2 and relax.q == 0):
            arr = table.to_array()
            n = count_two_way_fiber(arr.sum(axis=1), arr.sum(axis=0))
            method = "two-way dynamic program"
        else:
            n = len(enumerate_fiber(spec, relax, cap))
            method = "enumeration"
        _print_json({"count": n, "method": method, "q": relax.q})
    elif args.action == "enumerate":
        pts = enumerate_fiber(spec, relax, cap)
        _emit("".join(format_table_vector(p) for p in pts), args.output, manifest)
        if args.output:
            _print_json({"count": len(pts)})
    else:
        moves = _resolve_moves(args, model)
        report = connectivity(spec, moves, relax, cap)
        _print_json(report.to_json())
    return EXIT_OK


def cmd_test(args, manifest):
    manifest.input(args.table)
    manifest.input(args.moves)
    manifest.input(args.S)
    manifest.data["seed"] = args.seed
    model = parse_model(args.model)
    table = _load_table(args, model)
    spec = FiberSpec.of(model, table)
    moves = _resolve_moves(args, model)
    relax = _relaxation(args, spec.dims)
    runs = []
    traces = []
    for r in range(args.runs):
        cfg = ChainConfig(length=args.chain_length, burn_in=args.burn_in, seed=args.seed + r,
                          relax=relax, target=args.target)
        pv = exact_p_value(table, moves, cfg, spec, args.statistic)
        rep = acceptance_report(pv.output, args.window)
        runs.append({"run": r, "seed": cfg.seed, **pv.to_json(), "acceptance": rep.to_json()})
        traces.append(rep.to_csv(run=r))
    ps = [r["p_value"] for r in runs]
    result = {
        "p_value": float(np.mean(ps)),
        "se": runs[0]["se"] if len(runs) == 1 else float(np.std(ps, ddof=1) / np.sqrt(len(ps))),
        "acceptance_summary": {
            "rates": [r["acceptance"]["acceptance_rate"] for r in runs],
            "stuck_runs": sum(r["acceptance"]["acceptance_rate"] == 0 for r in runs),
        },
        "runs": runs,
    }
    if args.trace_csv:
        body = [t.split("\n", 1)[1] for t in traces]
        Path(args.trace_csv).write_text(traces[0].split("\n", 1)[0] + "\n" + "".join(body))
        manifest.output(args.trace_csv)
    _print_json(result)
    return EXIT_OK


def _write_moves_dir(outdir, manifest, **arrays):
    if not outdir:
        return
    Path(outdir).mkdir(parents=True, exist_ok=True)
    for name, arr in arrays.items():
        p = Path(outdir) / f"{name}.mat"
        write_matrix(p, arr)
        manifest.output(p)


def cmd_counterexample(args, manifest):
    if args.which == "thm41":
        inst = build_relaxation_family(args.n)
        cert = certify_relaxation_family(inst, args.q_max)
        _write_moves_dir(args.output_dir, manifest, Lambda=inst.Lambda.matrix, U=inst.U,
                         lattice=np.vstack([inst.z1, inst.z2]), u=inst.u, v=inst.v)
    elif args.which == "antistair":
        tau = tuple(int(t) for t in args.tau.split(",")) if args.tau else _default_tau(args.J)
        w = anti_staircase_witness(StaircaseSpec(args.I, args.J, tau), args.q)
        cert = {**w.to_json(), "verified": all(w.checks.values())}
        _write_moves_dir(args.output_dir, manifest, witness=w.n, m=w.m, m_prime=w.m_prime)
    else:
        theta = [int(t) for t in args.vec.split(",")]
        gadget = theta_gadget(theta, check=False)
        cert = {**gadget.to_json(), "verified": gadget.matches}
    _print_json(cert)
    return EXIT_OK if cert["verified"] else EXIT_VERIFY


def _default_tau(J: int) -> tuple:
    """Identity on the first three slices, then constant 3."""
    if J < 3:
        raise UsageError("J must be at least 3")
    return (1, 2, 3) + (3,) * (J - 3)


def pipeline_plan(args) -> list[dict]:
    return [
        {"step": "sparse", "table": SPARSE_TABLE, "bases": ["markov", "lattice"], "runs": args.runs_sparse,
         "chain_length": args.chain_length, "seed": args.seed,
         "outputs": ["sparse_markov.csv", "sparse_lattice.csv"]},
        {"step": "second", "table": SECOND_TABLE, "bases": ["markov", "lattice"], "runs": args.runs_second,
         "chain_length": args.chain_length, "seed": args.seed,
         "outputs": ["second_markov.csv", "second_lattice.csv"]},
    ]


def run_pipeline(outdir: Path, runs_sparse=10, runs_second=100, chain_length=10_000, seed=0,
                 window=1000, manifest=None) -> dict:
    """The two sparse-table experiments; returns a summary and writes CSVs."""
    from scipy.stats import ks_2samp

    outdir.mkdir(parents=True, exist_ok=True)
    model = independence_matrix(4, 4)
    bases = {"markov": independence_swap_basis(4, 4), "lattice": lattice_basis(model)}
    summary: dict = {"sparse": {}, "second": {}}

    u1 = Table.from_array(np.array(SPARSE_TABLE))
    spec1 = FiberSpec.of(model, u1)
    for name, M in bases.items():
        lines = ["run,window_start,window_end,acceptance_rate\n"]
        rates, ps = [], []
        for r in range(runs_sparse):
            pv = exact_p_value(u1, M, ChainConfig(length=chain_length, seed=seed + r), spec1)
            rep = acceptance_report(pv.output, window)
            lines.append(rep.to_csv(run=r).split("\n", 1)[1])
            rates.append(rep.rate)
            ps.append(pv.p)
        path = outdir / f"sparse_{name}.csv"
        path.write_text("".join(lines))
        if manifest:
            manifest.output(path)
        summary["sparse"][name] = {"acceptance_rates": rates, "stuck_runs": sum(r == 0 for r in rates),
                                 "p_values": ps}

    u2 = Table.from_array(np.array(SECOND_TABLE))
    spec2 = FiberSpec.of(model, u2)
    pvals = {}
    for name, M in bases.items():
        lines = ["run,seed,p_value,se,acceptance_rate\n"]
        ps = []
        for r in range(runs_second):
            cfg = ChainConfig(length=chain_length, seed=seed + 1000 + r)
            pv = exact_p_value(u2, M, cfg, spec2)
            lines.append(f"{r},{cfg.seed},{pv.p:.6f},{pv.se:.6f},{pv.output.acceptance_rate:.6f}\n")
            ps.append(pv.p)
        path = outdir / f"second_{name}.csv"
        path.write_text("".join(lines))
        if manifest:
            manifest.output(path)
        pvals[name] = ps
        summary["second"][name] = {"mean_p": float(np.mean(ps)), "share_above_0.05": float(np.mean(np.array(ps) > 0.05))}
    ks = ks_2samp(pvals["markov"], pvals["lattice"])
    summary["second"]["ks_statistic"] = float(ks.statistic)
    summary["second"]["ks_pvalue"] = float(ks.pvalue)
    return summary


def cmd_pipeline(args, manifest):
    manifest.data["seed"] = args.seed
    plan = pipeline_plan(args)
    if args.dry_run:
        _print_json({"dry_run": True, "output_dir": str(args.output_dir), "plan": plan})
        return EXIT_OK
    summary = run_pipeline(Path(args.output_dir), args.runs_sparse, args.runs_second, args.chain_length,
                           args.seed, manifest=manifest)
    _print_json(summary)
    return EXIT_OK


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fibertool", description="Exact conditional inference on contingency tables.")
    p.add_argument("--version", action="version", version=f"fibertool {__version__}")
    p.add_argument("--manifest", help="write the run manifest here instead of stderr")
    common = _Parser(add_help=False)
    common.add_argument("--manifest", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("model", help="build a design matrix", parents=[common])
    m.add_argument("spec", nargs="+", help='e.g. "independence 4 4" or "complex 12,23 dims 2 2 2"')
    m.add_argument("-o", "--output")
    m.add_argument("--json")
    m.set_defaults(func=cmd_model)

    b = sub.add_parser("bases", help="compute a move set", parents=[common])
    b.add_argument("--model", required=True)
    b.add_argument("--kind", choices=["lattice", "graver", "basic", "circuits", "markov"], required=True)
    b.add_argument("--cap", type=int, default=10, help="norm cap for Graver completion")
    b.add_argument("-o", "--output")
    b.add_argument("--json")
    b.set_defaults(func=cmd_bases)

    nf = sub.add_parser("nfold", help="n-fold Graver bases and complexity", parents=[common])
    nf.add_argument("--A", required=True)
    nf.add_argument("--B", required=True)
    nf.add_argument("--n", type=int, default=1)
    nf.add_argument("--complexity-only", action="store_true")
    nf.add_argument("--cap", type=int, default=10)
    nf.add_argument("-o", "--output")
    nf.add_argument("--json")
    nf.set_defaults(func=cmd_nfold)

    f = sub.add_parser("fiber", help="count, enumerate or test connectivity of a fiber", parents=[common])
    f.add_argument("action", choices=["count", "enumerate", "connectivity"])
    f.add_argument("--model", required=True)
    f.add_argument("--table", required=True)
    f.add_argument("--moves")
    f.add_argument("--kind", default="graver", choices=["lattice", "graver", "basic", "circuits", "markov"])
    f.add_argument("--cap", type=int, default=10)
    f.add_argument("--q", type=int, default=0)
    f.add_argument("--S")
    f.add_argument("-o", "--output")
    f.set_defaults(func=cmd_fiber)

    t = sub.add_parser("test", help="Monte Carlo exact goodness-of-fit test", parents=[common])
    t.add_argument("--model", required=True)
    t.add_argument("--table", required=True)
    t.add_argument("--moves")
    t.add_argument("--kind", default="markov", choices=["lattice", "graver", "basic", "circuits", "markov"])
    t.add_argument("--cap", type=int, default=10)
    t.add_argument("--q", type=int, default=0)
    t.add_argument("--S")
    t.add_argument("--chain-length", type=int, default=10_000)
    t.add_argument("--burn-in", type=int, default=None)
    t.add_argument("--runs", type=int, default=1)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--target", choices=["uniform", "hypergeometric"], default="hypergeometric")
    t.add_argument("--statistic", choices=["pearson", "g2"], default="pearson")
    t.add_argument("--window", type=int, default=1000)
    t.add_argument("--trace-csv")
    t.set_defaults(func=cmd_test)

    c = sub.add_parser("counterexample", help="verify a counterexample construction", parents=[common])
    csub = c.add_subparsers(dest="which", required=True, parser_class=_Parser)
    c1 = csub.add_parser("thm41", parents=[common])
    c1.add_argument("--n", type=int, required=True)
    c1.add_argument("--q-max", type=int, default=None)
    c2 = csub.add_parser("antistair", parents=[common])
    c2.add_argument("--I", type=int, default=3)
    c2.add_argument("--J", type=int, default=3)
    c2.add_argument("--q", type=int, default=1)
    c2.add_argument("--tau", help="comma-separated values of tau on [J]")
    c3 = csub.add_parser("theta", parents=[common])
    c3.add_argument("--vec", required=True)
    for sp in (c1, c2, c3):
        sp.add_argument("-o", "--output-dir")
        sp.set_defaults(func=cmd_counterexample)
    c3.set_defaults(output_dir=None)

    pl = sub.add_parser("pipeline", help="reproduce the sparse-table sampling experiments", parents=[common])
    pl.add_argument("--output-dir", default="pipeline_out")
    pl.add_argument("--runs-sparse", type=int, default=10)
    pl.add_argument("--runs-second", type=int, default=100)
    pl.add_argument("--chain-length", type=int, default=10_000)
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--dry-run", action="store_true")
    pl.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    manifest = Manifest(argv)
    code = EXIT_OK
    try:
        code = args.func(args, manifest)
    except CapExceeded as exc:
        print(f"fibertool: cap exceeded: {exc}", file=sys.stderr)
        code = EXIT_CAP
    except VerificationError as exc:
        print(f"fibertool: verification failed: {exc}", file=sys.stderr)
        code = EXIT_VERIFY
    except (UsageError, UnboundedFiberError, FileNotFoundError) as exc:
        print(f"fibertool: error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    except ValueError as exc:
        print(f"fibertool: error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    manifest.finish(code, args.manifest)
    return code


if __name__ == "__main__":
    sys.exit(main())
