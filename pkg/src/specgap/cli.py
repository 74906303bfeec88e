"""Command-line front end: ``specgap <subcommand> ...``.

Exit status is 0 when every check passes, 1 when a check fails and 2 on input errors.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from importlib import metadata
from pathlib import Path

from .chain import chain_from_dict, state_cap
from .decomposition import Partition, decompose
from .errors import SpecGapError, SizeOverflow
from .permutations import KClassParams
from .report import (
    Report,
    comparison_suite,
    gap_suite,
    mixing_suite,
    partition_suite,
    perm_suite,
    product_suite,
    verify_suite,
)


class InputError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _load_json(path: str) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _load_chain(path: str):
    d = _load_json(path)
    try:
        return chain_from_dict(d)
    except KeyError as exc:
        raise InputError(f"{path}: missing field {exc}") from exc


def _load_partition(path: str) -> Partition:
    d = _load_json(path)
    if "block_of" not in d:
        raise InputError(f"{path}: missing field 'block_of'")
    return Partition.from_labels(d["block_of"])


def _load_kclass(path: str) -> KClassParams:
    d = _load_json(path)
    try:
        return KClassParams.from_dict(d)
    except KeyError as exc:
        raise InputError(f"{path}: missing field {exc}") from exc


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="seed for random test vectors")
    p.add_argument("--cap", type=int, default=None, help="state-space cap (default: $SPECGAP_CAP or 10080)")
    p.add_argument("--tol", type=float, default=1e-9, help="slack allowed on inequality checks")
    p.add_argument("--nstar", type=float, default=None, help="override the good/bad inversion threshold")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default=None, help="write the report here instead of stdout")
    p.add_argument("--timing", action="store_true", help="include wall-clock time (breaks byte reproducibility)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="specgap", description="Certify spectral-gap bounds for reversible Markov chains.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gap", parents=[common], help="spectrum and gaps of a chain")
    p.add_argument("chain")

    p = sub.add_parser("verify", parents=[common], help="decomposition inequality suite")
    p.add_argument("chain")
    p.add_argument("partition")
    p.add_argument("--vectors", type=int, default=50, help="random test vectors")

    p = sub.add_parser("product", parents=[common], help="direct product of chains")
    p.add_argument("chains", nargs="+")
    p.add_argument("--probs", type=float, nargs="+", default=None, help="selection probabilities (default uniform)")

    p = sub.add_parser("perm", parents=[common], help="biased permutation suites")
    p.add_argument("kclass")
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--prefix", default=None, help="one prefix word, '_' for free slots (default: all)")
    p.add_argument("--certificate", action="store_true")
    p.add_argument("--compare", action="store_true")
    p.add_argument("--mixing", action="store_true")
    p.add_argument("--eps", type=float, default=0.25, help="mixing threshold for --mixing")

    p = sub.add_parser("partition-bound", parents=[common], help="partition-number tail certificate")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--nmax", type=int, default=500, help="check the growth bound for 1..nmax")

    p = sub.add_parser("mixing", parents=[common], help="exact mixing time")
    p.add_argument("chain")
    p.add_argument("--eps", type=float, nargs="+", default=[0.25])
    p.add_argument("--curve", default=None, help="write the (t, tv) curve of the first eps as CSV")

    p = sub.add_parser("compare", parents=[common], help="canonical-path comparison of M_nn with M_T")
    p.add_argument("kclass")
    return parser


def _config(args: argparse.Namespace) -> dict:
    skip = {"out", "format", "timing"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    cfg["cap"] = state_cap(args.cap)
    return cfg


def run(args: argparse.Namespace) -> Report:
    report = Report(args.command, _config(args), _version())
    cap = args.cap
    if args.command == "gap":
        gap_suite(report, _load_chain(args.chain), args.tol)
    elif args.command == "verify":
        chain = _load_chain(args.chain)
        part = _load_partition(args.partition)
        verify_suite(report, chain, part, args.vectors, args.seed, args.tol, bundle=decompose(chain, part))
    elif args.command == "product":
        chains = [_load_chain(p) for p in args.chains]
        probs = args.probs or [1.0 / len(chains)] * len(chains)
        product_suite(report, chains, probs, args.tol, cap)
    elif args.command == "perm":
        params = _load_kclass(args.kclass)
        perm_suite(
            report, params, args.level, args.prefix, args.nstar,
            args.certificate or not (args.level or args.compare or args.mixing),
            args.compare, args.mixing, args.eps, args.tol, cap,
        )
    elif args.command == "partition-bound":
        partition_suite(report, args.q, args.n, args.nstar, args.nmax)
    elif args.command == "mixing":
        curves = mixing_suite(report, _load_chain(args.chain), args.eps, cap)
        if args.curve:
            Path(args.curve).write_text(curves[0].to_csv())
    elif args.command == "compare":
        comparison_suite(report, _load_kclass(args.kclass), args.tol, cap)
    return report


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        report = run(args)
    except SizeOverflow as exc:
        print(f"specgap: SizeOverflow: {exc.size} states exceed cap {exc.cap}", file=sys.stderr)
        return 2
    except (InputError, SpecGapError, ValueError, OSError) as exc:
        print(f"specgap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if args.timing:
        report.wall_clock = time.perf_counter() - start
    text = report.to_json() if args.format == "json" else report.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
