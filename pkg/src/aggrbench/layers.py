"""Single-layer inference for GCN, GIN, GAT and PDN on top of the aggregation kernels.

Every model is expressed as per-edge scalars + one aggregation + the dense
Combination transform:

    GCN  aggregate(X W) with symmetric degree normalization over a self-loop augmented graph
    GIN  ((1 + eps) X + sum of neighbors) W       (aggregation first)
    GAT  aggregate(X W) with single-head softmax attention per destination
    PDN  aggregate(X W) with weights sigmoid(v . e_uv + b) from edge features
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .features import FEATURE_DTYPE, ShapeError, as_features, matmul, random_features, read_features, write_binary
from .kernels import ABSTRACTIONS, CostCounters, ReduceOp, aggregate, as_op
from .memory import track_alloc, track_free
from .topology import CooGraph, GraphViews, from_edge_list

MODELS = ("gcn", "gin", "gat", "pdn")
GAT_ABSTRACTIONS = ("scatter", "reduce")
LEAKY_SLOPE = 0.2
DEFAULT_EDGE_DIM = 4


class UnsupportedCombination(ValueError):
    """Model/abstraction/operator pairing that the layer cannot run."""


def legal_abstractions(model: str, op: str = "add") -> tuple[str, ...]:
    if model == "gat":
        return GAT_ABSTRACTIONS
    if as_op(op) is not ReduceOp.ADD:
        # pull/push are sparse-dense products: weighted add only
        return ("scatter", "reduce")
    return ABSTRACTIONS


@dataclass(frozen=True)
class LayerSpec:
    model: str
    abstraction: str
    in_dim: int
    out_dim: int = 8
    reduce_op: str = "add"
    eps: float = 0.0
    edge_dim: int = DEFAULT_EDGE_DIM

    def __post_init__(self):
        if self.model not in MODELS:
            raise UnsupportedCombination(f"unknown model {self.model!r}; expected one of {', '.join(MODELS)}")
        if self.abstraction not in ABSTRACTIONS:
            raise UnsupportedCombination(
                f"unknown abstraction {self.abstraction!r}; expected one of {', '.join(ABSTRACTIONS)}"
            )
        as_op(self.reduce_op)
        if self.model != "gcn" and self.reduce_op != "add":
            raise UnsupportedCombination(f"{self.model} aggregates with add; only gcn takes another operator")
        if self.abstraction not in legal_abstractions(self.model, self.reduce_op):
            if self.model == "gat":
                raise UnsupportedCombination(
                    f"gat supports only scatter and reduce abstractions, not {self.abstraction}"
                )
            raise UnsupportedCombination(f"{self.abstraction} supports only op=add, not {self.reduce_op}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise UnsupportedCombination("in_dim and out_dim must be positive")
        if self.model == "pdn" and self.edge_dim < 1:
            raise UnsupportedCombination("pdn needs edge features of length >= 1")


@dataclass
class LayerParams:
    """Learned tensors for one layer. Only the ones the model uses need to be set."""

    weight: np.ndarray
    att_src: Optional[np.ndarray] = None
    att_dst: Optional[np.ndarray] = None
    edge_map: Optional[np.ndarray] = None
    edge_bias: float = 0.0

    @classmethod
    def seeded(cls, spec: LayerSpec, seed: int) -> "LayerParams":
        scale = np.float32(1.0 / np.sqrt(spec.in_dim))
        w = random_features(spec.in_dim, spec.out_dim, seed) * scale
        att = random_features(2, spec.out_dim, seed + 1)
        edge_map = random_features(1, spec.edge_dim, seed + 2)[0]
        return cls(w, att[0].copy(), att[1].copy(), edge_map, 0.0)

    def as_arrays(self) -> dict[str, np.ndarray]:
        out = {"weight": self.weight}
        if self.att_src is not None:
            out["att_src"] = self.att_src.reshape(1, -1)
        if self.att_dst is not None:
            out["att_dst"] = self.att_dst.reshape(1, -1)
        if self.edge_map is not None:
            out["edge_map"] = self.edge_map.reshape(1, -1)
        out["edge_bias"] = np.array([[self.edge_bias]], dtype=FEATURE_DTYPE)
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "LayerParams":
        def vec(key):
            return None if key not in arrays else np.asarray(arrays[key], dtype=FEATURE_DTYPE).reshape(-1)

        bias = arrays.get("edge_bias")
        return cls(
            as_features(arrays["weight"], name="weight"),
            vec("att_src"),
            vec("att_dst"),
            vec("edge_map"),
            0.0 if bias is None else float(np.asarray(bias).reshape(-1)[0]),
        )


GraphLike = Union[CooGraph, GraphViews]


def _views(g: GraphLike) -> GraphViews:
    return g if isinstance(g, GraphViews) else GraphViews.build(g)


# ---------------------------------------------------------------------------
# Per-edge scalars
# ---------------------------------------------------------------------------


def add_self_loops(g: CooGraph) -> CooGraph:
    n = g.num_vertices
    loops = np.arange(n, dtype=np.int64)
    pairs = np.stack([np.concatenate([g.src, loops]), np.concatenate([g.dst, loops])], axis=1)
    return from_edge_list(pairs, n)


def gcn_normalization(aug: CooGraph) -> np.ndarray:
    """(d_u d_v)^-1/2 per edge, with d the in-degree of the (already augmented) graph."""
    deg = aug.in_degrees().astype(np.float64)
    prod = deg[aug.src] * deg[aug.dst]
    return (1.0 / np.sqrt(prod)).astype(np.float32)


def gcn_edge_weights(g: CooGraph) -> tuple[CooGraph, np.ndarray]:
    """Self-loop augmented graph and its symmetric normalization weights."""
    aug = add_self_loops(g)
    return aug, gcn_normalization(aug)


def gat_edge_weights(
    g: CooGraph,
    x,
    att_src: np.ndarray,
    att_dst: np.ndarray,
    weight: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Attention coefficients: softmax over each destination's in-edges of
    LeakyReLU(a_src . z_u + a_dst . z_v), with z = x W (or x when ``weight`` is None).
    """
    z = as_features(x, rows=g.num_vertices)
    if weight is not None:
        z = matmul(z, weight)
    a_s = np.asarray(att_src, dtype=np.float64).reshape(-1)
    a_d = np.asarray(att_dst, dtype=np.float64).reshape(-1)
    if a_s.shape[0] != z.shape[1] or a_d.shape[0] != z.shape[1]:
        raise ShapeError(f"attention vectors must have length {z.shape[1]}")
    z64 = z.astype(np.float64)
    s_src = z64 @ a_s
    s_dst = z64 @ a_d
    return _edge_softmax(g, s_src[g.src] + s_dst[g.dst])


def _edge_softmax(g: CooGraph, raw: np.ndarray) -> np.ndarray:
    score = np.where(raw > 0, raw, LEAKY_SLOPE * raw)
    if score.size == 0:
        return np.zeros(0, dtype=np.float32)
    top = np.full(g.num_vertices, -np.inf)
    np.maximum.at(top, g.dst, score)
    ex = np.exp(score - top[g.dst])
    denom = np.zeros(g.num_vertices)
    np.add.at(denom, g.dst, ex)
    return (ex / denom[g.dst]).astype(np.float32)


def pdn_edge_weights(g: CooGraph, edge_features, edge_map: np.ndarray, bias: float = 0.0) -> np.ndarray:
    """sigmoid(v . e_uv + b) per edge; ``edge_features`` rows follow ``g``'s edge order."""
    ef = np.asarray(edge_features, dtype=np.float64)
    if ef.ndim != 2 or ef.shape[1] == 0:
        raise ShapeError("edge features must be a 2-D matrix with at least one column")
    if ef.shape[0] != g.num_edges:
        raise ShapeError(f"edge features have {ef.shape[0]} rows, graph has {g.num_edges} edges")
    v = np.asarray(edge_map, dtype=np.float64).reshape(-1)
    if v.shape[0] != ef.shape[1]:
        raise ShapeError(f"edge map has length {v.shape[0]}, edge features have {ef.shape[1]} columns")
    t = ef @ v + bias
    # numerically stable logistic
    out = np.where(t >= 0, 1.0 / (1.0 + np.exp(-np.abs(t))), np.exp(-np.abs(t)) / (1.0 + np.exp(-np.abs(t))))
    return out.astype(np.float32)


def gin_aggregate(g: GraphLike, x, eps: float, abstraction: str, threads: int = 1) -> tuple[np.ndarray, CostCounters]:
    """(1 + eps) x + unweighted neighbor sum, before any Combination."""
    views = _views(g)
    x = as_features(x, rows=views.num_vertices)
    agg, counters = aggregate(views, x, abstraction, "add", use_edge_weight=False, threads=threads)
    agg += np.float32(1.0 + eps) * x
    return agg, counters


# ---------------------------------------------------------------------------
# Layer
# ---------------------------------------------------------------------------


@dataclass
class PreparedLayer:
    """A layer bound to a graph. Topology work (format conversion, self-loop
    augmentation) happens once here; calling it runs one timed forward pass.
    """

    spec: LayerSpec
    graph: CooGraph
    params: LayerParams
    edge_features: Optional[np.ndarray] = None
    threads: int = 1
    views: GraphViews = field(init=False)

    def __post_init__(self):
        spec = self.spec
        if self.params.weight.shape != (spec.in_dim, spec.out_dim):
            raise ShapeError(
                f"weight has shape {self.params.weight.shape}, expected ({spec.in_dim}, {spec.out_dim})"
            )
        base = self.graph
        if spec.model == "gcn":
            base = add_self_loops(self.graph)
        self.views = GraphViews.build(base)
        if spec.model == "gat" and (self.params.att_src is None or self.params.att_dst is None):
            raise ShapeError("gat needs att_src and att_dst parameters")
        if spec.model == "pdn":
            if self.params.edge_map is None:
                raise ShapeError("pdn needs an edge_map parameter")
            if self.edge_features is None:
                raise ShapeError("pdn needs edge features")
            ef = np.asarray(self.edge_features, dtype=FEATURE_DTYPE)
            if ef.ndim != 2 or ef.shape[1] == 0:
                raise ShapeError("edge features must have at least one column")
            if ef.shape[0] != self.views.num_edges:
                raise ShapeError(f"edge features have {ef.shape[0]} rows, graph has {self.views.num_edges} edges")
            self.edge_features = ef

    def __call__(self, x) -> tuple[np.ndarray, CostCounters]:
        spec = self.spec
        x = as_features(x, rows=self.views.num_vertices, name="x")
        if x.shape[1] != spec.in_dim:
            raise ShapeError(f"x has {x.shape[1]} columns, layer expects {spec.in_dim}")
        if spec.model == "gin":
            agg, counters = gin_aggregate(self.views, x, spec.eps, spec.abstraction, self.threads)
            track_alloc(agg.shape[0] * spec.out_dim * 4, "output")
            out = matmul(agg, self.params.weight)
            track_free(agg.nbytes)
            return out, counters

        track_alloc(x.shape[0] * spec.out_dim * 4, "transformed")
        z = matmul(x, self.params.weight)
        coo = self.views.coo
        track_alloc(coo.num_edges * 4, "edge_weights")
        if spec.model == "gcn":
            w = gcn_normalization(coo)
        elif spec.model == "gat":
            w = gat_edge_weights(coo, z, self.params.att_src, self.params.att_dst)
        else:
            w = pdn_edge_weights(coo, self.edge_features, self.params.edge_map, self.params.edge_bias)
        out, counters = aggregate(self.views, z, spec.abstraction, spec.reduce_op, edge_weights=w, threads=self.threads)
        track_free(w.nbytes)
        track_free(z.nbytes)
        return out, counters


def forward_layer(
    spec: LayerSpec,
    g: CooGraph,
    x,
    w: np.ndarray,
    params: Optional[LayerParams] = None,
    edge_features: Optional[np.ndarray] = None,
    threads: int = 1,
) -> np.ndarray:
    """One layer of inference. ``w`` overrides ``params.weight``; attention and
    edge-map parameters default to zeros when ``params`` is omitted.
    """
    if params is None:
        params = LayerParams(
            np.asarray(w, dtype=FEATURE_DTYPE),
            np.zeros(spec.out_dim, dtype=FEATURE_DTYPE),
            np.zeros(spec.out_dim, dtype=FEATURE_DTYPE),
            np.zeros(spec.edge_dim, dtype=FEATURE_DTYPE),
            0.0,
        )
    else:
        params = LayerParams(np.asarray(w, dtype=FEATURE_DTYPE), params.att_src, params.att_dst, params.edge_map, params.edge_bias)
    if spec.model == "pdn" and edge_features is None:
        raise ShapeError("pdn needs edge features")
    out, _ = PreparedLayer(spec, g, params, edge_features, threads)(x)
    return out


# ---------------------------------------------------------------------------
# Parameter files: a "key=path" manifest, one binary feature-format matrix per key
# ---------------------------------------------------------------------------


def save_params(params: LayerParams, manifest: str | os.PathLike) -> None:
    manifest = Path(manifest)
    lines = []
    for key, arr in params.as_arrays().items():
        target = manifest.with_name(f"{manifest.stem}.{key}.bin")
        write_binary(arr, target)
        lines.append(f"{key}={target.name}\n")
    manifest.write_text("".join(lines), encoding="ascii")


def load_params(manifest: str | os.PathLike) -> LayerParams:
    """Read a manifest; relative paths resolve against the manifest's directory."""
    manifest = Path(manifest)
    arrays = {}
    for lineno, raw in enumerate(manifest.read_text(encoding="ascii").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, path = line.partition("=")
        if not sep or not key.strip() or not path.strip():
            raise ValueError(f"{manifest}:{lineno}: expected key=path")
        target = Path(path.strip())
        if not target.is_absolute():
            target = manifest.parent / target
        arrays[key.strip()] = read_features(target)
    if "weight" not in arrays:
        raise ValueError(f"{manifest}: no 'weight' entry")
    return LayerParams.from_arrays(arrays)
