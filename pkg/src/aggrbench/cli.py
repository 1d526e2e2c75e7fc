"""Command-line front end: ``aggrbench {gen,stats,verify,bench,sweep,ingest}``.

Exit codes: 0 success, 1 verification or benchmark failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from .bench import (
    DEFAULT_FEATURE_LEN,
    DEFAULT_OUT_DIM,
    DEFAULT_REPETITIONS,
    DEFAULT_WARMUP,
    SWEEPABLE,
    BenchConfig,
    BenchFailure,
    compare_abstractions,
    load_graph,
    reports_to_csv,
    reports_to_json,
    run_benchmark,
    sweep,
)
from .features import ShapeError, random_features, read_features
from .kernels import ContractError
from .layers import MODELS, LayerSpec, UnsupportedCombination
from .stats import compute_stats
from .synth import FAMILY_ALIASES, SynthSpec, generate
from .topology import GraphValidationError, format_edge_list, read_edge_list, symmetrize
from .verify import verify_graph

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _default_threads() -> int:
    raw = os.environ.get("AGGRBENCH_THREADS")
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"AGGRBENCH_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise UsageError("AGGRBENCH_THREADS must be >= 1")
    return value


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_synth(p: argparse.ArgumentParser, required: bool = False) -> None:
    g = p.add_argument_group("synthetic graph")
    g.add_argument("--family", choices=sorted(FAMILY_ALIASES), required=required)
    g.add_argument("--n", type=int, default=None, help="vertex count (synthetic size, or override for files)")
    g.add_argument("--density", type=float, default=0.01)
    g.add_argument("--exponent", type=float, default=2.5)
    g.add_argument("--mean-degree", type=float, default=20.0)
    g.add_argument("--k", type=int, default=10)
    g.add_argument("--p", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)


def _add_graph_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("graph", nargs="?", help="edge-list file (omit to use --family)")
    _add_synth(p)
    p.add_argument("--symmetrize", action="store_true", help="add reverse edges")


def _add_layer(p: argparse.ArgumentParser, abstraction_optional: bool = True) -> None:
    p.add_argument("--model", choices=MODELS, default="gcn")
    p.add_argument("--abstraction", choices=("scatter", "reduce", "pull", "push"), default=None)
    p.add_argument("--op", choices=("add", "max", "mean"), default="add")
    p.add_argument("--reps", type=int, default=DEFAULT_REPETITIONS)
    p.add_argument("--warmup", type=int, default=DEFAULT_WARMUP)
    p.add_argument("--out-dim", type=int, default=DEFAULT_OUT_DIM)
    p.add_argument("--feature-len", type=int, default=DEFAULT_FEATURE_LEN)
    p.add_argument("--features", default=None, help="feature matrix file (binary or text)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("-o", "--output", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aggrbench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic graph")
    _add_synth(p, required=True)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("stats", help="structural statistics of a graph")
    _add_graph_input(p)
    p.add_argument("-o", "--output", default=None)

    p = sub.add_parser("verify", help="check every abstraction against the dense oracle")
    _add_graph_input(p)
    p.add_argument("--op", choices=("add", "max", "mean"), default=None, help="default: all three")
    p.add_argument("--feature-len", type=int, default=8)
    p.add_argument("--features", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-o", "--output", default=None)

    p = sub.add_parser("bench", help="time one layer (all abstractions unless --abstraction)")
    _add_graph_input(p)
    _add_layer(p)

    p = sub.add_parser("sweep", help="benchmark across values of one structural property")
    _add_graph_input(p)
    _add_layer(p)
    p.add_argument("--property", choices=SWEEPABLE, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")

    p = sub.add_parser("ingest", help="parse an edge list and report its size")
    p.add_argument("graph")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--symmetrize", action="store_true")
    p.add_argument("--features", default=None)
    p.add_argument("-o", "--output", default=None, help="write the normalized edge list here")
    return parser


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _synth_from_args(a) -> SynthSpec:
    family = FAMILY_ALIASES[a.family]
    kw = {"family": family, "num_vertices": 10000 if a.n is None else a.n, "seed": a.seed}
    if family == "erdos_renyi":
        kw["density"] = a.density
    elif family == "chung_lu_powerlaw":
        kw.update(exponent=a.exponent, mean_degree=a.mean_degree)
    else:
        kw.update(k=a.k, p=a.p)
    return SynthSpec(**kw)


def _graph_source(a) -> dict:
    if a.graph is not None and a.family is not None:
        raise UsageError("give either a graph file or --family, not both")
    if a.graph is None and a.family is None:
        raise UsageError("a graph file or --family is required")
    if a.graph is not None:
        return {"graph_path": a.graph, "num_vertices": a.n, "synth": None}
    return {"graph_path": None, "num_vertices": None, "synth": _synth_from_args(a)}


def _threads(a) -> int:
    t = a.threads if a.threads is not None else _default_threads()
    if t < 1:
        raise UsageError("--threads must be >= 1")
    return t


def _echo(config: dict) -> None:
    print("# config " + json.dumps(config, sort_keys=True), file=sys.stderr)


def _source_dict(cfg: BenchConfig) -> dict:
    d = cfg.to_dict()
    return {k: d[k] for k in ("graph_path", "num_vertices", "synth", "symmetrize")}


def _emit(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _bench_config(a) -> BenchConfig:
    src = _graph_source(a)
    return BenchConfig(
        model=a.model,
        abstraction=a.abstraction,
        reduce_op=a.op,
        symmetrize=a.symmetrize,
        features_path=a.features,
        feature_len=a.feature_len,
        out_dim=a.out_dim,
        repetitions=a.reps,
        warmup=a.warmup,
        threads=_threads(a),
        seed=a.seed,
        **src,
    )


def _check_layer(cfg: BenchConfig) -> None:
    # reject illegal model/abstraction/op pairings before loading any data
    if cfg.abstraction is not None:
        LayerSpec(cfg.model, cfg.abstraction, in_dim=1, out_dim=cfg.out_dim, reduce_op=cfg.reduce_op)
    elif cfg.model != "gcn" and cfg.reduce_op != "add":
        raise UnsupportedCombination(f"{cfg.model} aggregates with add; only gcn takes another operator")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen(a) -> int:
    spec = _synth_from_args(a)
    _echo({"command": "gen", "synth": spec.to_dict(), "output": a.output})
    g = generate(spec)
    _emit(format_edge_list(g), a.output)
    stats = compute_stats(g)
    _emit(json.dumps({"synth": spec.to_dict(), "stats": stats.to_dict()}, indent=2) + "\n", a.output + ".stats.json")
    print(f"wrote {a.output}: {g.num_vertices} vertices, {g.num_edges} edges", file=sys.stderr)
    return EXIT_OK


def cmd_stats(a) -> int:
    src = _graph_source(a)
    cfg = BenchConfig(symmetrize=a.symmetrize, repetitions=1, **src)
    _echo({"command": "stats", **_source_dict(cfg)})
    stats = compute_stats(load_graph(cfg))
    _emit(json.dumps(stats.to_dict(), indent=2) + "\n", a.output)
    return EXIT_OK


def cmd_verify(a) -> int:
    src = _graph_source(a)
    cfg = BenchConfig(symmetrize=a.symmetrize, repetitions=1, feature_len=a.feature_len, seed=a.seed, **src)
    threads = _threads(a)
    _echo({
        "command": "verify",
        "ops": a.op or "add,mean,max",
        "threads": threads,
        "feature_len": a.feature_len,
        "features_path": a.features,
        "seed": cfg.seed,
        **_source_dict(cfg),
    })
    g = load_graph(cfg)
    if a.features:
        x = read_features(a.features)
    else:
        x = random_features(g.num_vertices, a.feature_len, cfg.seed)
    ops = (a.op,) if a.op else ("add", "mean", "max")
    result = verify_graph(g, x, ops=ops, threads=threads)
    _emit(json.dumps(result.to_dict(), indent=2) + "\n", a.output)
    print(("PASS" if result.passed else "FAIL") + f": {len(result.checks)} checks", file=sys.stderr)
    return EXIT_OK if result.passed else EXIT_FAILURE


def _write_reports(reports, a) -> None:
    _emit(reports_to_csv(reports) if a.format == "csv" else reports_to_json(reports), a.output)


def cmd_bench(a) -> int:
    cfg = _bench_config(a)
    _check_layer(cfg)
    _echo({"command": "bench", **cfg.to_dict()})
    if cfg.abstraction is not None:
        reports = [run_benchmark(cfg)]
    else:
        cmp = compare_abstractions(cfg)
        reports = cmp.reports
        print(cmp.table(), file=sys.stderr)
    _write_reports(reports, a)
    return EXIT_OK


def _parse_values(prop: str, raw: str) -> list:
    try:
        vals = [float(t) for t in raw.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--values must be comma-separated numbers, got {raw!r}") from None
    if not vals:
        raise UsageError("--values is empty")
    if prop == "feature_len":
        if any(v != int(v) or v < 1 for v in vals):
            raise UsageError("feature_len values must be positive integers")
        return [int(v) for v in vals]
    return vals


def cmd_sweep(a) -> int:
    values = _parse_values(a.property, a.values)
    needed = {"density": "erdos_renyi", "exponent": "chung_lu_powerlaw", "rewire_p": "watts_strogatz"}
    if a.property in needed and (a.family is None or FAMILY_ALIASES[a.family] != needed[a.property]):
        raise UsageError(f"sweeping {a.property} needs --family {needed[a.property]}")
    cfg = _bench_config(a)
    _check_layer(cfg)
    # the swept value replaces whatever the flag said; validate the base with the first value
    if cfg.synth is not None and a.property != "feature_len":
        cfg = replace(cfg, synth=cfg.synth.with_value(a.property, values[0]))
    _echo({"command": "sweep", "property": a.property, "values": values, **cfg.to_dict()})
    reports = sweep(a.property, values, cfg)
    _write_reports(reports, a)
    return EXIT_OK


def cmd_ingest(a) -> int:
    _echo({"command": "ingest", "graph": a.graph, "num_vertices": a.n, "symmetrize": a.symmetrize, "features": a.features})
    g = read_edge_list(a.graph, a.n)
    if a.symmetrize:
        g = symmetrize(g)
    summary = {"vertices": g.num_vertices, "edges": g.num_edges, "weighted": g.weights is not None}
    if a.features:
        x = read_features(a.features)
        if x.shape[0] != g.num_vertices:
            raise ShapeError(f"feature file has {x.shape[0]} rows, graph has {g.num_vertices} vertices")
        summary["feature_length"] = int(x.shape[1])
    if a.output:
        _emit(format_edge_list(g), a.output)
    print(json.dumps(summary))
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "stats": cmd_stats,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "ingest": cmd_ingest,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, UnsupportedCombination) as exc:
        print(f"aggrbench {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GraphValidationError as exc:
        print(f"aggrbench {args.command}: validation error: {json.dumps(exc.as_dict())}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ShapeError, ContractError, FileNotFoundError) as exc:
        print(f"aggrbench {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BenchFailure as exc:
        print(f"aggrbench {args.command}: {json.dumps(exc.details)}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
