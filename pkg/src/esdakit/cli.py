"""`engine` command line interface.

Subcommands: run, weights, lisa, score, describe. Every flag's default can
be overridden by an ENGINE_* environment variable (e.g. ENGINE_SEED,
ENGINE_PERMUTATIONS, ENGINE_RULE); an explicit flag always wins.

Exit codes: 0 success, 2 input or configuration error, 3 statistical
precondition error (zero variance, too few regions, ...), 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .attributes import AttributeTable, parse_attributes, parse_attributes_standalone
from .errors import EngineError, InputError, StatError
from .lattice import parse_lattice
from .moran import ClusterClass, local_moran
from .pipeline import load_run_config, run
from .scoring import describe
from .textio import format_number
from .weights import build_contiguity, row_standardize, weights_to_csv

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_STAT = 3
EXIT_IO = 4


def _env(name: str, fallback=None, cast=str):
    raw = os.environ.get(f"ENGINE_{name}")
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except ValueError:
        raise InputError(f"ENGINE_{name}={raw!r} is not a valid {cast.__name__}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="engine",
        description="Spatial autocorrelation and vulnerability-scoring pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a full configured run")
    p_run.add_argument("--config", required=_env("CONFIG") is None, default=_env("CONFIG"),
                       help="YAML run configuration")
    p_run.add_argument("--output", default=_env("OUTPUT"), help="override the output directory")
    p_run.add_argument("--seed", type=int, default=_env("SEED", cast=int))
    p_run.add_argument("--permutations", type=int, default=_env("PERMUTATIONS", cast=int))
    p_run.add_argument("--workers", type=int, default=_env("WORKERS", cast=int))

    p_w = sub.add_parser("weights", help="build contiguity weights from a lattice")
    p_w.add_argument("--lattice", required=True)
    p_w.add_argument("--rule", choices=["queen", "rook"], default=_env("RULE", "queen"))
    p_w.add_argument("--snap-tol", type=float, default=_env("SNAP_TOL", 1e-7, float))
    p_w.add_argument("--standardize", action="store_true")
    p_w.add_argument("--out", required=True)

    p_l = sub.add_parser("lisa", help="univariate LISA over one feature")
    p_l.add_argument("--lattice", required=True)
    p_l.add_argument("--attributes", action="append", required=True)
    p_l.add_argument("--feature", required=True)
    p_l.add_argument("--rule", choices=["queen", "rook"], default=_env("RULE", "queen"))
    p_l.add_argument("--permutations", type=int, default=_env("PERMUTATIONS", 999, int))
    p_l.add_argument("--seed", type=int, default=_env("SEED", 0, int))
    p_l.add_argument("--alpha", type=float, default=_env("ALPHA", 0.05, float))
    p_l.add_argument("--workers", type=int, default=_env("WORKERS", cast=int))
    p_l.add_argument("--out", default=None, help="output CSV (default stdout)")

    p_s = sub.add_parser("score", help="score a cluster subset from a configured run")
    p_s.add_argument("--config", required=True, help="YAML run configuration")
    p_s.add_argument("--subset", default=None, help="<analysis>:<class>, e.g. EPO:LL")
    p_s.add_argument("--out", default=_env("OUTPUT"), help="override the output directory")

    p_d = sub.add_parser("describe", help="descriptive statistics of one feature")
    p_d.add_argument("--attributes", required=True)
    p_d.add_argument("--lattice", default=None)
    p_d.add_argument("--feature", required=True)
    return parser


def _cmd_run(args) -> int:
    config = load_run_config(args.config)
    if args.output:
        config.output = Path(args.output)
    if args.seed is not None:
        config.seed = args.seed
    if args.permutations is not None:
        config.permutations = args.permutations
    if args.workers is not None:
        config.workers = args.workers
    for path in run(config):
        print(path)
    return EXIT_OK


def _cmd_weights(args) -> int:
    lattice = parse_lattice(Path(args.lattice).read_bytes())
    w = build_contiguity(lattice, args.rule, args.snap_tol)
    if args.standardize:
        w = row_standardize(w)
    Path(args.out).write_text(weights_to_csv(w), encoding="utf-8", newline="")
    print(f"{args.out}: n={w.n} islands={w.n_islands} standardized={w.standardized}")
    return EXIT_OK


def _cmd_lisa(args) -> int:
    lattice = parse_lattice(Path(args.lattice).read_bytes())
    table = AttributeTable(list(lattice.region_ids), {})
    for path in args.attributes:
        table = table.merge(parse_attributes(Path(path).read_bytes(), list(lattice.region_ids)))
    w = row_standardize(build_contiguity(lattice, args.rule))
    result = local_moran(
        table.require_complete(args.feature), w,
        permutations=args.permutations, seed=args.seed, alpha=args.alpha,
        workers=args.workers,
    )
    text = result.to_csv(lattice.region_ids)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="")
        print(args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_score(args) -> int:
    config = load_run_config(args.config)
    if config.scoring is None:
        raise InputError("the run configuration has no scoring section")
    if args.subset:
        name, _, code = args.subset.rpartition(":")
        codes = {cls.code: cls for cls in ClusterClass}
        if not name or code not in codes:
            raise InputError(f"--subset must look like EPO:LL, got {args.subset!r}")
        config.scoring.subset_analysis = name
        config.scoring.subset_class = codes[code]
        if not any(a.name == name for a in config.analyses):
            raise InputError(f"analysis {name!r} is not defined in the configuration")
    if args.out:
        config.output = Path(args.out)
    # a scoring run needs the referenced analysis; execute the pipeline
    for path in run(config):
        print(path)
    return EXIT_OK


def _cmd_describe(args) -> int:
    data = Path(args.attributes).read_bytes()
    if args.lattice:
        lattice = parse_lattice(Path(args.lattice).read_bytes())
        table = parse_attributes(data, list(lattice.region_ids))
    else:
        table = parse_attributes_standalone(data)
    stats = describe(table.require_complete(args.feature))
    for label, value in (
        ("mean", stats.mean), ("std", stats.std), ("min", stats.minimum),
        ("max", stats.maximum), ("q1", stats.q1), ("median", stats.median),
        ("q3", stats.q3),
    ):
        print(f"{args.feature} {label} {format_number(value)}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "weights": _cmd_weights,
    "lisa": _cmd_lisa,
    "score": _cmd_score,
    "describe": _cmd_describe,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except StatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAT
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
