"""Repeated, timed single-layer inference with allocation accounting and cost counters.

A run does ``warmup`` discarded passes and then ``repetitions`` timed passes of
one prepared layer. Each pass is timed with the monotonic nanosecond clock and
runs under a fresh allocation tracker; the report keeps the raw samples, their
summary statistics, the peak auxiliary bytes, the kernel counters and the
statistics of the input graph.

Wall-clock rankings depend on the machine and are reported, never asserted.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import statistics
import time
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from typing import Optional

import numpy as np

from . import __version__
from .features import random_features, read_features
from .layers import DEFAULT_EDGE_DIM, LayerParams, LayerSpec, PreparedLayer, legal_abstractions, load_params
from .memory import AllocationLimitExceeded, tracking
from .stats import GraphStats, compute_stats
from .synth import DEFAULT_MEAN_DEGREE, SynthSpec, generate
from .topology import CooGraph, read_edge_list, symmetrize

DEFAULT_REPETITIONS = 300
DEFAULT_WARMUP = 10
DEFAULT_FEATURE_LEN = 32
DEFAULT_OUT_DIM = 8
# the three abstractions the characterization compares by default; push runs only on request
COMPARED_ABSTRACTIONS = ("scatter", "reduce", "pull")
SWEEPABLE = ("density", "exponent", "rewire_p", "feature_len")


class BenchFailure(RuntimeError):
    """A benchmark could not complete; ``details`` is JSON-serializable."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = {"error": "benchmark", "message": message, **details}


@dataclass(frozen=True)
class BenchConfig:
    model: str = "gcn"
    abstraction: Optional[str] = None
    reduce_op: str = "add"
    graph_path: Optional[str] = None
    synth: Optional[SynthSpec] = None
    num_vertices: Optional[int] = None
    symmetrize: bool = False
    features_path: Optional[str] = None
    feature_len: int = DEFAULT_FEATURE_LEN
    out_dim: int = DEFAULT_OUT_DIM
    repetitions: int = DEFAULT_REPETITIONS
    warmup: int = DEFAULT_WARMUP
    threads: int = 1
    seed: int = 0
    eps: float = 0.0
    params_path: Optional[str] = None
    memory_limit_bytes: Optional[int] = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if (self.graph_path is None) == (self.synth is None):
            raise ValueError("give exactly one graph source: a file path or a synthetic spec")
        if self.feature_len < 1 or self.out_dim < 1:
            raise ValueError("feature length and output dimension must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["synth"] = None if self.synth is None else self.synth.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        d = dict(d)
        if d.get("synth") is not None:
            d["synth"] = SynthSpec(**d["synth"])
        return cls(**d)


@dataclass
class TimingStats:
    samples_ns: list
    mean_ns: float
    median_ns: float
    stddev_ns: float

    @classmethod
    def from_samples(cls, samples: list) -> "TimingStats":
        return cls(list(samples), sample_mean(samples), float(statistics.median(samples)), sample_stddev(samples))


def sample_mean(samples) -> float:
    # integer nanoseconds: exact sum, one rounding
    return sum(samples) / len(samples)


def sample_stddev(samples) -> float:
    """Sample standard deviation (n - 1); the variance is exact before the final sqrt."""
    n = len(samples)
    if n < 2:
        return 0.0
    mean = Fraction(sum(samples), n)
    var = sum((Fraction(s) - mean) ** 2 for s in samples) / (n - 1)
    return math.sqrt(float(var))


@dataclass
class BenchReport:
    config: dict
    layer: dict
    sweep: Optional[dict]
    graph_stats: dict
    counters: dict
    memory: dict
    output_digest: str
    environment: dict
    timing: dict

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, allow_nan=False)

    @classmethod
    def from_dict(cls, d: dict) -> "BenchReport":
        names = [f.name for f in fields(cls)]
        missing = [n for n in names if n not in d]
        if missing:
            raise ValueError(f"report is missing fields: {', '.join(missing)}")
        return cls(**{n: d[n] for n in names})

    @classmethod
    def from_json(cls, text: str) -> "BenchReport":
        return cls.from_dict(json.loads(text))

    def deterministic_payload(self) -> str:
        """Everything except timings, canonically encoded."""
        d = self.to_dict()
        d.pop("timing")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def payload_digest(self) -> str:
        return hashlib.sha256(self.deterministic_payload().encode()).hexdigest()

    @property
    def mean_ns(self) -> float:
        return self.timing["mean_ns"]

    @property
    def peak_aux_bytes(self) -> int:
        return self.memory["peak_aux_bytes"]

    def csv_row(self) -> dict:
        cfg = self.config
        synth = cfg.get("synth") or {}
        row = {
            "model": self.layer["model"],
            "abstraction": self.layer["abstraction"],
            "reduce_op": self.layer["reduce_op"],
            "in_dim": self.layer["in_dim"],
            "out_dim": self.layer["out_dim"],
            "graph": cfg.get("graph_path") or synth.get("family"),
            "seed": cfg["seed"],
            "threads": cfg["threads"],
            "repetitions": cfg["repetitions"],
            "warmup": cfg["warmup"],
            "swept_property": (self.sweep or {}).get("property", ""),
            "swept_value": (self.sweep or {}).get("value", ""),
        }
        row.update({f"stat_{k}": v for k, v in self.graph_stats.items()})
        row.update({f"counter_{k}": v for k, v in self.counters.items()})
        row["peak_aux_bytes"] = self.memory["peak_aux_bytes"]
        row["mean_ns"] = self.timing["mean_ns"]
        row["median_ns"] = self.timing["median_ns"]
        row["stddev_ns"] = self.timing["stddev_ns"]
        row["output_digest"] = self.output_digest
        return {k: ("" if v is None else v) for k, v in row.items()}


def reports_to_csv(reports: list[BenchReport]) -> str:
    buf = io.StringIO()
    rows = [r.csv_row() for r in reports]
    if not rows:
        return ""
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def reports_to_json(reports: list[BenchReport]) -> str:
    """One JSON document per report, separated by newlines."""
    return "".join(r.to_json(indent=None) + "\n" for r in reports)


def parse_reports_json(text: str) -> list[BenchReport]:
    return [BenchReport.from_json(line) for line in text.splitlines() if line.strip()]


# ---------------------------------------------------------------------------
# Inputs
# ---------------------------------------------------------------------------


@dataclass
class BenchInputs:
    graph: CooGraph
    stats: GraphStats
    features: np.ndarray
    assumptions: list = field(default_factory=list)


def load_graph(cfg: BenchConfig) -> CooGraph:
    if cfg.synth is not None:
        g = generate(cfg.synth)
    else:
        g = read_edge_list(cfg.graph_path, cfg.num_vertices)
    return symmetrize(g) if cfg.symmetrize else g


def load_inputs(cfg: BenchConfig) -> BenchInputs:
    g = load_graph(cfg)
    if cfg.features_path is not None:
        x = read_features(cfg.features_path)
        if x.shape[0] != g.num_vertices:
            raise ValueError(f"feature file has {x.shape[0]} rows, graph has {g.num_vertices} vertices")
    else:
        x = random_features(g.num_vertices, cfg.feature_len, cfg.seed)
    assumptions = []
    if cfg.synth is not None and cfg.synth.family == "chung_lu_powerlaw" and cfg.synth.mean_degree == DEFAULT_MEAN_DEGREE:
        assumptions.append(f"mean degree {DEFAULT_MEAN_DEGREE:g} is an assumed default for power-law graphs")
    return BenchInputs(g, compute_stats(g), x, assumptions)


def _environment(cfg: BenchConfig, inputs: BenchInputs) -> dict:
    return {
        "artifact_version": __version__,
        "threads": cfg.threads,
        "precision": "float32",
        "accumulator": "float64",
        "timer": "time.perf_counter_ns, one sample per forward pass",
        "warmup_discarded": cfg.warmup,
        "outlier_trimming": "none",
        "memory_accounting": "instrumented allocation tracking (bytes of tracked buffers)",
        "assumptions": list(inputs.assumptions),
    }


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def _build_layer(cfg: BenchConfig, abstraction: str, inputs: BenchInputs) -> PreparedLayer:
    spec = LayerSpec(
        model=cfg.model,
        abstraction=abstraction,
        in_dim=inputs.features.shape[1],
        out_dim=cfg.out_dim,
        reduce_op=cfg.reduce_op,
        eps=cfg.eps,
    )
    params = load_params(cfg.params_path) if cfg.params_path else LayerParams.seeded(spec, cfg.seed + 1)
    edge_features = None
    layer_graph_edges = inputs.graph.num_edges
    if cfg.model == "pdn":
        edge_features = random_features(layer_graph_edges, DEFAULT_EDGE_DIM, cfg.seed + 2)
    return PreparedLayer(spec, inputs.graph, params, edge_features, cfg.threads)


def run_benchmark(cfg: BenchConfig, inputs: Optional[BenchInputs] = None, sweep: Optional[dict] = None) -> BenchReport:
    if cfg.abstraction is None:
        raise ValueError("run_benchmark needs an abstraction; use compare_abstractions to run them all")
    inputs = inputs or load_inputs(cfg)
    layer = _build_layer(cfg, cfg.abstraction, inputs)
    x = inputs.features
    out = None
    counters = None
    samples: list[int] = []
    peak = 0
    breakdown: dict = {}
    try:
        for _ in range(cfg.warmup):
            with tracking(cfg.memory_limit_bytes):
                layer(x)
        for _ in range(cfg.repetitions):
            with tracking(cfg.memory_limit_bytes) as tracker:
                t0 = time.perf_counter_ns()
                out, c = layer(x)
                t1 = time.perf_counter_ns()
            samples.append(t1 - t0)
            if counters is None:
                counters = c
            if tracker.peak_bytes >= peak:
                peak = tracker.peak_bytes
                breakdown = dict(sorted(tracker.by_tag.items()))
    except AllocationLimitExceeded as exc:
        raise BenchFailure(
            "out of memory",
            kind="out_of_memory",
            attempted_bytes=exc.attempted_bytes,
            live_bytes=exc.live_bytes,
            limit_bytes=exc.limit_bytes,
            buffer=exc.tag,
        ) from exc
    except MemoryError as exc:
        raise BenchFailure(
            "out of memory",
            kind="out_of_memory",
            attempted_bytes=getattr(exc, "_total_size", None),
        ) from exc

    timing = TimingStats.from_samples(samples)
    return BenchReport(
        config=cfg.to_dict(),
        layer=asdict(layer.spec),
        sweep=sweep,
        graph_stats=inputs.stats.to_dict(),
        counters=counters.to_dict(),
        memory={"peak_aux_bytes": int(peak), "largest_buffers": breakdown},
        output_digest=hashlib.sha256(np.ascontiguousarray(out).tobytes()).hexdigest(),
        environment=_environment(cfg, inputs),
        timing=asdict(timing),
    )


@dataclass
class Comparison:
    reports: list
    latency_ranking: list
    memory_ranking: list

    def table(self) -> str:
        lines = [f"{'abstraction':<12}{'mean_ms':>12}{'peak_aux_MiB':>15}{'messages':>14}"]
        for r in self.reports:
            lines.append(
                f"{r.layer['abstraction']:<12}{r.mean_ns / 1e6:>12.4f}"
                f"{r.peak_aux_bytes / 2**20:>15.3f}{r.counters['messages_materialized']:>14d}"
            )
        lines.append("by latency: " + " < ".join(self.latency_ranking))
        lines.append("by peak memory: " + " < ".join(self.memory_ranking))
        return "\n".join(lines)


def comparison_abstractions(model: str, op: str = "add", include_push: bool = False) -> tuple[str, ...]:
    legal = legal_abstractions(model, op)
    wanted = COMPARED_ABSTRACTIONS + (("push",) if include_push else ())
    return tuple(a for a in wanted if a in legal)


def compare_abstractions(
    cfg: BenchConfig, inputs: Optional[BenchInputs] = None, include_push: bool = False
) -> Comparison:
    inputs = inputs or load_inputs(cfg)
    reports = [
        run_benchmark(replace(cfg, abstraction=a), inputs)
        for a in comparison_abstractions(cfg.model, cfg.reduce_op, include_push)
    ]
    by_latency = sorted(reports, key=lambda r: r.mean_ns)
    by_memory = sorted(reports, key=lambda r: r.peak_aux_bytes)
    return Comparison(
        reports,
        [r.layer["abstraction"] for r in by_latency],
        [r.layer["abstraction"] for r in by_memory],
    )


def sweep(prop: str, values, base: BenchConfig, include_push: bool = False) -> list[BenchReport]:
    """One report per value (per abstraction when ``base.abstraction`` is None)."""
    if prop not in SWEEPABLE:
        raise ValueError(f"cannot sweep {prop!r}; expected one of {', '.join(SWEEPABLE)}")
    reports: list[BenchReport] = []
    for value in values:
        if prop == "feature_len":
            cfg = replace(base, feature_len=int(value))
        else:
            if base.synth is None:
                raise ValueError(f"sweeping {prop} needs a synthetic graph source")
            family = {"density": "erdos_renyi", "exponent": "chung_lu_powerlaw", "rewire_p": "watts_strogatz"}[prop]
            if base.synth.family != family:
                raise ValueError(f"sweeping {prop} needs the {family} family, got {base.synth.family}")
            cfg = replace(base, synth=base.synth.with_value(prop, float(value)))
        tag = {"property": prop, "value": value}
        inputs = load_inputs(cfg)
        abstractions = (
            (cfg.abstraction,)
            if cfg.abstraction is not None
            else comparison_abstractions(cfg.model, cfg.reduce_op, include_push)
        )
        for a in abstractions:
            reports.append(run_benchmark(replace(cfg, abstraction=a), inputs, sweep=tag))
    return reports
