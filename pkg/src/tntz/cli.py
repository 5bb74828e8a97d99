"""Command-line front end: decompose, info, reconstruct, round, cross,
benchmark.

Exit codes are stable: 0 success, 2 usage error, 3 data error (bad files,
malformed containers, shape mismatches), 4 numeric guard (size/memory
limits, failed benchmark equality gate).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import arithmetic, benchmark, cross, decompose, functions, serialization
from .config import default_seed
from .core import TnTensor, full, norm
from .errors import ContractViolationError, DataError, GuardExceededError, TntzError

RECONSTRUCT_GUARD = 10**8

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_GUARD = 4


def _parse_ints(text: str) -> tuple:
    try:
        values = tuple(int(x) for x in text.split(",") if x != "")
    except ValueError:
        raise ContractViolationError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise ContractViolationError("expected at least one integer")
    return values


def _dense_input(args) -> np.ndarray:
    shape = _parse_ints(args.shape)
    if args.batch is not None:
        shape = (args.batch,) + shape
    return serialization.read_dense(args.input, shape)


def _per_element_errors(x: np.ndarray, t: TnTensor) -> np.ndarray:
    approx = full(t)
    if t.batch_size is None:
        x, approx = x[None], approx[None]
    b = x.shape[0]
    num = np.linalg.norm((x - approx).reshape(b, -1), axis=1)
    den = np.linalg.norm(x.reshape(b, -1), axis=1)
    return num / np.maximum(den, 1e-300)


def cmd_decompose(args) -> int:
    x = _dense_input(args)
    shape = _parse_ints(args.shape)
    if args.eps is None and args.rank is None:
        raise ContractViolationError("one of --eps or --rank is required")
    if args.format == "cp":
        if args.rank is None:
            raise ContractViolationError("--format cp requires --rank")
        if args.batch is not None:
            raise ContractViolationError("cp decomposition does not support --batch")
        result = decompose.cp_als(x, args.rank, seed=args.seed)
        t = result.tensor
    else:
        spec = decompose.TruncationSpec.by_eps(args.eps) if args.eps is not None \
            else decompose.TruncationSpec.by_max_ranks(args.rank)
        if args.format == "tt":
            t = decompose.tt_svd_batched(x, spec) if args.batch is not None \
                else decompose.tt_svd(x, spec)
        elif args.format == "tucker":
            if args.batch is not None:
                raise ContractViolationError("tucker does not support --batch")
            t = decompose.tucker_hosvd(x, spec)
        else:
            raise ContractViolationError(f"unknown format {args.format!r}")
    serialization.save(t, args.output)
    numel = int(np.prod(shape))
    payload_bytes = 8 * t.dof() * (t.batch_size or 1)
    input_bytes = 8 * numel * (t.batch_size or 1)
    print(f"shape: {tuple(shape)}")
    print(f"ranks: {t.ranks}")
    print(f"dof: {t.dof()}")
    print(f"compression_ratio: {input_bytes / payload_bytes:.4f}")
    if numel <= 10**6:
        errors = _per_element_errors(x, t)
        print(f"relative_error: {errors.max():.6e}")
    return 0


def cmd_info(args) -> int:
    header = serialization.read_header(args.container)
    print(f"kind: {header['kind']}")
    print(f"num_modes: {header['num_modes']}")
    print(f"batch_size: {header['batch_size']}")
    if header["kind"] == serialization.KIND_TENSOR:
        print(f"physical_shape: {tuple(header['physical_shape'])}")
        print(f"rank_chain: {header['rank_chain']}")
        kinds = ",".join(n["kind"] for n in header["nodes"])
        print(f"node_kinds: {kinds}")
        factors = [k for k, n in enumerate(header["nodes"])
                   if n["factor_shape"] is not None]
        print(f"factor_modes: {factors}")
    elif header["kind"] == serialization.KIND_TT_MATRIX:
        print(f"row_dims: {tuple(header['row_dims'])}")
        print(f"col_dims: {tuple(header['col_dims'])}")
        print(f"rank_chain: {header['rank_chain']}")
    else:
        print(f"row_dims: {tuple(header['row_dims'])}")
        print(f"col_dims: {tuple(header['col_dims'])}")
        print(f"rank: {header['rank']}")
    print(f"checksum: {header['checksum']:#010x}")
    return 0


def cmd_reconstruct(args) -> int:
    obj = serialization.load(args.container)
    if not isinstance(obj, TnTensor):
        raise ContractViolationError("reconstruct expects a tensor container")
    total = obj.numel() * (obj.batch_size or 1)
    if total > RECONSTRUCT_GUARD:
        raise GuardExceededError(
            f"reconstruction of {total} entries exceeds the {RECONSTRUCT_GUARD} guard"
        )
    serialization.write_dense(full(obj), args.output)
    print(f"wrote {total} float64 entries")
    return 0


def cmd_round(args) -> int:
    obj = serialization.load(args.container)
    if not isinstance(obj, TnTensor):
        raise ContractViolationError("round expects a tensor container")
    before = obj.ranks
    rounded = decompose.round_tt(obj, decompose.TruncationSpec.by_eps(args.eps))
    serialization.save(rounded, args.output)
    print(f"ranks_before: {before}")
    print(f"ranks_after: {rounded.ranks}")
    print(f"error_bound: {args.eps:.6e}")
    return 0


def cmd_cross(args) -> int:
    shape = _parse_ints(args.shape)
    f = functions.get_function(args.function, shape)
    cfg = cross.CrossConfig(target_eps=args.eps, seed=args.seed,
                            validation_size=args.validation_size)
    t, log = cross.cross_approximate(f, shape, cfg)
    serialization.save(t, args.output)
    print(f"evaluations: {log.total_evaluations}")
    print(f"validation_error: {log.final_validation_error:.6e}")
    print(f"ranks: {t.ranks}")
    print(f"incumbent_index: {log.best_index}")
    print(f"incumbent_value: {log.best_value:.12g}")
    return 0


def cmd_benchmark(args) -> int:
    ops = benchmark.OPS if args.op is None else (args.op,)
    modes = benchmark.MODES if args.mode is None else (args.mode,)
    cfg = benchmark.BenchmarkConfig(
        sizes=_parse_ints(args.sizes),
        rank=args.rank,
        dims=args.dims,
        batch=args.batch,
        repeats=args.repeats,
        seed=args.seed,
        ops=ops,
        modes=modes,
        memory_budget_bytes=(None if args.memory_budget_gb is None
                             else int(args.memory_budget_gb * 2**30)),
    )
    lines = [benchmark.CSV_HEADER]
    report = benchmark.run_benchmark(cfg, report=lambda s: print(s, file=sys.stderr))
    lines += [row.csv() for row in report.rows]
    text = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if report.refused:
        print("refused cells (memory guard):", file=sys.stderr)
        for item in report.refused:
            print(f"  {item}", file=sys.stderr)
        raise GuardExceededError(f"{len(report.refused)} cells refused")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tntz",
        description="Low-rank tensor chains: decompose, inspect, and benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="fit a dense file into a compressed chain")
    p.add_argument("--input", required=True)
    p.add_argument("--shape", required=True, help="comma-separated mode sizes")
    p.add_argument("--format", required=True, choices=("tt", "cp", "tucker"))
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--batch", type=int, default=None,
                   help="leading batch mode of the input file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_decompose)

    p = sub.add_parser("info", help="print a container's header")
    p.add_argument("container")
    p.set_defaults(fn=cmd_info)

    p = sub.add_parser("reconstruct", help="expand a container to a dense file")
    p.add_argument("container")
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("round", help="truncate a container's ranks")
    p.add_argument("container")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_round)

    p = sub.add_parser("cross", help="learn a built-in function by sampling")
    p.add_argument("--function", required=True)
    p.add_argument("--shape", required=True)
    p.add_argument("--eps", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--validation-size", type=int, default=200)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_cross)

    p = sub.add_parser("benchmark", help="loop-vs-batch timing grid")
    p.add_argument("--op", choices=benchmark.OPS, default=None,
                   help="single operation (default: all four)")
    p.add_argument("--sizes", default="15,25,35,45")
    p.add_argument("--rank", type=int, default=20)
    p.add_argument("--dims", type=int, default=8)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--mode", choices=benchmark.MODES, default=None,
                   help="single mode (default: both)")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--memory-budget-gb", type=float, default=None)
    p.add_argument("--output", default=None, help="CSV path (default: stdout)")
    p.set_defaults(fn=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None and hasattr(args, "seed"):
        args.seed = default_seed()
    try:
        return args.fn(args)
    except ContractViolationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GuardExceededError, benchmark.EqualityGateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except TntzError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
