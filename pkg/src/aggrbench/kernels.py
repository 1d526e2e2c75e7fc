"""The four Aggregation abstractions and a dense brute-force oracle.

Edge-centric:
    scatter  - COO (source-sorted): materialize one message per edge, then gather
               them into the destinations.
    push     - CSC: walk source columns and broadcast each source row into an
               N x F partial-sum output.
Vertex-centric:
    reduce   - CSR (destination-major): combine each destination's incoming
               source rows with add/max/mean, one row at a time.
    pull     - CSR: sparse-dense product, row by row.

Every kernel returns ``(output, CostCounters)``. Messages are ``w_e * x[src]``
rounded to float32; add/mean accumulate in float64 and round once on output.
Empty neighborhoods produce zero rows for every operator.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass
from typing import Optional

import numba
import numpy as np
from numba import prange

from .features import FEATURE_DTYPE, ShapeError, as_features
from .memory import track_alloc, track_free
from .topology import CooGraph, CscGraph, CsrGraph, GraphValidationError, GraphViews


class ReduceOp(str, enum.Enum):
    ADD = "add"
    MAX = "max"
    MEAN = "mean"


_OP_CODE = {ReduceOp.ADD: 0, ReduceOp.MAX: 1, ReduceOp.MEAN: 2}

ABSTRACTIONS = ("scatter", "reduce", "pull", "push")


class ContractError(ValueError):
    """Kernel called with an input that breaks its layout contract."""


@dataclass
class CostCounters:
    """Exact element counts for one aggregation.

    feature_reads/feature_writes count float elements of X, messages, partial
    sums and output touched by the traversal. partial_sum_elements is the peak
    size of the accumulator the abstraction needs.
    """

    messages_materialized: int = 0
    feature_reads: int = 0
    feature_writes: int = 0
    partial_sum_elements: int = 0
    edges_traversed: int = 0

    def combine(self, other: "CostCounters") -> "CostCounters":
        """Counters of two stages run back to back over the same edge set."""
        return CostCounters(
            self.messages_materialized + other.messages_materialized,
            self.feature_reads + other.feature_reads,
            self.feature_writes + other.feature_writes,
            max(self.partial_sum_elements, other.partial_sum_elements),
            max(self.edges_traversed, other.edges_traversed),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CostCounters":
        return cls(**d)


def as_op(op) -> ReduceOp:
    try:
        return ReduceOp(op)
    except ValueError:
        raise ValueError(f"unknown reduce operator {op!r}; expected one of add, max, mean") from None


# ---------------------------------------------------------------------------
# Thread control
# ---------------------------------------------------------------------------


def _use_parallel(threads: int) -> bool:
    if threads <= 1:
        return False
    numba.set_num_threads(min(int(threads), numba.config.NUMBA_NUM_THREADS))
    return True


# ---------------------------------------------------------------------------
# Compiled loops. Each has a sequential and a parallel twin; the parallel ones
# split work so every output element is still accumulated in the same order.
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _scatter_seq(src, x, w, has_w, msgs):
    F = x.shape[1]
    for e in range(src.shape[0]):
        u = src[e]
        if has_w:
            we = w[e]
            for f in range(F):
                msgs[e, f] = x[u, f] * we
        else:
            for f in range(F):
                msgs[e, f] = x[u, f]


@numba.njit(cache=True, parallel=True)
def _scatter_par(src, x, w, has_w, msgs):
    F = x.shape[1]
    for e in prange(src.shape[0]):
        u = src[e]
        if has_w:
            we = w[e]
            for f in range(F):
                msgs[e, f] = x[u, f] * we
        else:
            for f in range(F):
                msgs[e, f] = x[u, f]


@numba.njit(cache=True)
def _gather_seq(dst, msgs, op, acc, cnt):
    F = msgs.shape[1]
    for e in range(dst.shape[0]):
        v = dst[e]
        first = cnt[v] == 0
        for f in range(F):
            m = msgs[e, f]
            if op == 1:
                if first or m > acc[v, f]:
                    acc[v, f] = m
            else:
                acc[v, f] += m
        cnt[v] += 1


@numba.njit(cache=True, parallel=True)
def _gather_par(dst, msgs, op, acc, cnt):
    for e in range(dst.shape[0]):
        cnt[dst[e]] += 1
    N, F = acc.shape
    for f in prange(F):
        seen = np.zeros(N, dtype=np.bool_)
        for e in range(dst.shape[0]):
            v = dst[e]
            m = msgs[e, f]
            if op == 1:
                if not seen[v] or m > acc[v, f]:
                    acc[v, f] = m
                seen[v] = True
            else:
                acc[v, f] += m


@numba.njit(cache=True)
def _finish(acc, cnt, op, out):
    N, F = acc.shape
    for v in range(N):
        c = cnt[v]
        for f in range(F):
            if c == 0:
                out[v, f] = 0.0
            elif op == 2:
                out[v, f] = acc[v, f] / c
            else:
                out[v, f] = acc[v, f]


@numba.njit(cache=True)
def _reduce_row(ptr, idx, x, w, has_w, op, v, acc, out):
    F = x.shape[1]
    lo = ptr[v]
    hi = ptr[v + 1]
    if lo == hi:
        for f in range(F):
            out[v, f] = 0.0
        return
    for f in range(F):
        acc[f] = 0.0
    for j in range(lo, hi):
        u = idx[j]
        if op == 1:
            for f in range(F):
                m = x[u, f] * w[j] if has_w else x[u, f]
                if j == lo or m > acc[f]:
                    acc[f] = m
        elif has_w:
            # no message buffer here, so the product can stay in double
            wj = np.float64(w[j])
            for f in range(F):
                acc[f] += wj * x[u, f]
        else:
            for f in range(F):
                acc[f] += x[u, f]
    for f in range(F):
        if op == 2:
            out[v, f] = acc[f] / (hi - lo)
        else:
            out[v, f] = acc[f]


@numba.njit(cache=True)
def _reduce_seq(ptr, idx, x, w, has_w, op, out):
    acc = np.zeros(x.shape[1], dtype=np.float64)
    for v in range(ptr.shape[0] - 1):
        _reduce_row(ptr, idx, x, w, has_w, op, v, acc, out)


@numba.njit(cache=True, parallel=True)
def _reduce_par(ptr, idx, x, w, has_w, op, out, nchunks):
    N = ptr.shape[0] - 1
    step = (N + nchunks - 1) // nchunks
    for c in prange(nchunks):
        acc = np.zeros(x.shape[1], dtype=np.float64)
        for v in range(c * step, min(N, (c + 1) * step)):
            _reduce_row(ptr, idx, x, w, has_w, op, v, acc, out)


@numba.njit(cache=True)
def _pull_seq(ptr, idx, x, w, has_w, out):
    N = ptr.shape[0] - 1
    F = x.shape[1]
    row = np.zeros(F, dtype=np.float64)
    for v in range(N):
        row[:] = 0.0
        for j in range(ptr[v], ptr[v + 1]):
            a = np.float64(w[j]) if has_w else 1.0
            u = idx[j]
            for f in range(F):
                row[f] += a * x[u, f]
        for f in range(F):
            out[v, f] = row[f]


@numba.njit(cache=True, parallel=True)
def _pull_par(ptr, idx, x, w, has_w, out, nchunks):
    N = ptr.shape[0] - 1
    F = x.shape[1]
    step = (N + nchunks - 1) // nchunks
    for c in prange(nchunks):
        row = np.zeros(F, dtype=np.float64)
        for v in range(c * step, min(N, (c + 1) * step)):
            row[:] = 0.0
            for j in range(ptr[v], ptr[v + 1]):
                a = np.float64(w[j]) if has_w else 1.0
                u = idx[j]
                for f in range(F):
                    row[f] += a * x[u, f]
            for f in range(F):
                out[v, f] = row[f]


@numba.njit(cache=True)
def _push_seq(ptr, idx, x, w, has_w, acc):
    N = ptr.shape[0] - 1
    F = x.shape[1]
    for u in range(N):
        for j in range(ptr[u], ptr[u + 1]):
            a = np.float64(w[j]) if has_w else 1.0
            v = idx[j]
            for f in range(F):
                acc[v, f] += a * x[u, f]


@numba.njit(cache=True, parallel=True)
def _push_par(ptr, idx, x, w, has_w, acc):
    N = ptr.shape[0] - 1
    F = x.shape[1]
    for f in prange(F):
        for u in range(N):
            xu = np.float64(x[u, f])
            for j in range(ptr[u], ptr[u + 1]):
                a = np.float64(w[j]) if has_w else 1.0
                acc[idx[j], f] += a * xu


# ---------------------------------------------------------------------------
# Public kernels
# ---------------------------------------------------------------------------

_NO_WEIGHTS = np.zeros(0, dtype=np.float32)


def _resolve_weights(graph_weights, weights, use_edge_weight: bool, m: int):
    w = weights if weights is not None else (graph_weights if use_edge_weight else None)
    if w is None:
        return _NO_WEIGHTS, False
    w = np.ascontiguousarray(w, dtype=np.float32)
    if w.shape != (m,):
        raise ShapeError(f"expected {m} edge weights, got shape {w.shape}")
    return w, True


def _check_compressed(g) -> None:
    if g.ptr.shape[0] != g.num_vertices + 1 or g.ptr[-1] != g.idx.shape[0]:
        raise GraphValidationError("compressed graph pointer array is inconsistent; call validate()")


def scatter_messages(
    g: CooGraph,
    x,
    use_edge_weight: bool = True,
    weights: Optional[np.ndarray] = None,
    threads: int = 1,
) -> tuple[np.ndarray, CostCounters]:
    """Copy each edge's source row (times its weight) into an E x F message buffer."""
    if g.sorted_by != "source":
        raise ContractError("scatter expects a COO edge list sorted by source vertex")
    x = as_features(x, rows=g.num_vertices)
    w, has_w = _resolve_weights(g.weights, weights, use_edge_weight, g.num_edges)
    E, F = g.num_edges, x.shape[1]
    track_alloc(E * F * 4, "messages")
    msgs = np.empty((E, F), dtype=FEATURE_DTYPE)
    (_scatter_par if _use_parallel(threads) else _scatter_seq)(g.src, x, w, has_w, msgs)
    return msgs, CostCounters(
        messages_materialized=E * F,
        feature_reads=E * F,
        feature_writes=E * F,
        partial_sum_elements=0,
        edges_traversed=E,
    )


def gather_reduce(msgs, g: CooGraph, op="add", threads: int = 1) -> tuple[np.ndarray, CostCounters]:
    """Reduce edge messages into their destination vertices, in edge-list order."""
    op = as_op(op)
    msgs = np.ascontiguousarray(msgs, dtype=FEATURE_DTYPE)
    if msgs.ndim != 2 or msgs.shape[0] != g.num_edges:
        raise ShapeError(f"message buffer has shape {msgs.shape}, expected ({g.num_edges}, F)")
    N, F = g.num_vertices, msgs.shape[1]
    aux = N * F * 8 + N * 8
    track_alloc(aux, "partial_sums")
    acc = np.zeros((N, F), dtype=np.float64)
    cnt = np.zeros(N, dtype=np.int64)
    track_alloc(N * F * 4, "output")
    out = np.empty((N, F), dtype=FEATURE_DTYPE)
    code = _OP_CODE[op]
    (_gather_par if _use_parallel(threads) else _gather_seq)(g.dst, msgs, code, acc, cnt)
    _finish(acc, cnt, code, out)
    del acc, cnt
    track_free(aux)
    E = g.num_edges
    return out, CostCounters(
        messages_materialized=0,
        feature_reads=E * F,
        feature_writes=E * F + N * F,
        partial_sum_elements=N * F,
        edges_traversed=E,
    )


def scatter_aggregate(
    g: CooGraph, x, op="add", weights: Optional[np.ndarray] = None, use_edge_weight: bool = True, threads: int = 1
) -> tuple[np.ndarray, CostCounters]:
    """Scatter-based aggregation: ``gather_reduce(scatter_messages(g, x), g, op)``."""
    msgs, c1 = scatter_messages(g, x, use_edge_weight=use_edge_weight, weights=weights, threads=threads)
    out, c2 = gather_reduce(msgs, g, op, threads=threads)
    track_free(msgs.nbytes)
    return out, c1.combine(c2)


def reduce_aggregate(
    g: CsrGraph, x, op="add", weights: Optional[np.ndarray] = None, use_edge_weight: bool = True, threads: int = 1
) -> tuple[np.ndarray, CostCounters]:
    """Reduce-based aggregation over CSR rows; only one F-wide accumulator is live per worker."""
    op = as_op(op)
    _check_compressed(g)
    x = as_features(x, rows=g.num_vertices)
    w, has_w = _resolve_weights(g.weights, weights, use_edge_weight, g.num_edges)
    N, E, F = g.num_vertices, g.num_edges, x.shape[1]
    track_alloc(N * F * 4, "output")
    out = np.empty((N, F), dtype=FEATURE_DTYPE)
    par = _use_parallel(threads)
    workers = numba.get_num_threads() if par else 1
    row_acc = F * 8 * workers
    track_alloc(row_acc, "partial_sums")
    if par:
        _reduce_par(g.ptr, g.idx, x, w, has_w, _OP_CODE[op], out, workers)
    else:
        _reduce_seq(g.ptr, g.idx, x, w, has_w, _OP_CODE[op], out)
    track_free(row_acc)
    active = E > 0
    return out, CostCounters(
        messages_materialized=0,
        feature_reads=E * F,
        feature_writes=N * F,
        partial_sum_elements=F if active else 0,
        edges_traversed=E,
    )


def pull_spmm(
    g: CsrGraph, x, weights: Optional[np.ndarray] = None, use_edge_weight: bool = True, threads: int = 1
) -> tuple[np.ndarray, CostCounters]:
    """Pull-based ``A_hat @ X``: each destination row pulls its sources' features."""
    _check_compressed(g)
    x = as_features(x, rows=g.num_vertices)
    w, has_w = _resolve_weights(g.weights, weights, use_edge_weight, g.num_edges)
    N, E, F = g.num_vertices, g.num_edges, x.shape[1]
    track_alloc(N * F * 4, "output")
    out = np.empty((N, F), dtype=FEATURE_DTYPE)
    par = _use_parallel(threads)
    workers = numba.get_num_threads() if par else 1
    row_acc = F * 8 * workers
    track_alloc(row_acc, "partial_sums")
    if par:
        _pull_par(g.ptr, g.idx, x, w, has_w, out, workers)
    else:
        _pull_seq(g.ptr, g.idx, x, w, has_w, out)
    track_free(row_acc)
    return out, CostCounters(
        messages_materialized=0,
        feature_reads=E * F,
        feature_writes=N * F,
        partial_sum_elements=F if E > 0 else 0,
        edges_traversed=E,
    )


def push_spmm(
    g: CscGraph, x, weights: Optional[np.ndarray] = None, use_edge_weight: bool = True, threads: int = 1
) -> tuple[np.ndarray, CostCounters]:
    """Push-based ``A_hat @ X``: each source column broadcasts its row into an N x F partial sum."""
    _check_compressed(g)
    x = as_features(x, rows=g.num_vertices)
    w, has_w = _resolve_weights(g.weights, weights, use_edge_weight, g.num_edges)
    N, E, F = g.num_vertices, g.num_edges, x.shape[1]
    track_alloc(N * F * 8, "partial_sums")
    acc = np.zeros((N, F), dtype=np.float64)
    (_push_par if _use_parallel(threads) else _push_seq)(g.ptr, g.idx, x, w, has_w, acc)
    track_alloc(N * F * 4, "output")
    out = acc.astype(FEATURE_DTYPE)
    del acc
    track_free(N * F * 8)
    sources = int(np.count_nonzero(np.diff(g.ptr)))
    return out, CostCounters(
        messages_materialized=0,
        feature_reads=sources * F,
        feature_writes=E * F,
        partial_sum_elements=N * F,
        edges_traversed=E,
    )


def aggregate(
    views: GraphViews,
    x,
    abstraction: str,
    op="add",
    edge_weights: Optional[np.ndarray] = None,
    use_edge_weight: bool = True,
    threads: int = 1,
) -> tuple[np.ndarray, CostCounters]:
    """Run one abstraction on prepared graph views.

    ``edge_weights`` is given in COO edge order and permuted to the format the
    abstraction traverses. When it is None the graphs' own weights are used,
    unless ``use_edge_weight`` is False. pull/push only implement weighted add.
    """
    op = as_op(op)
    uw = use_edge_weight
    if abstraction == "scatter":
        return scatter_aggregate(views.coo, x, op, weights=edge_weights, use_edge_weight=uw, threads=threads)
    if abstraction in ("reduce", "pull"):
        w = None if edge_weights is None else np.asarray(edge_weights, dtype=np.float32)[views.csr.edge_ids]
        if abstraction == "reduce":
            return reduce_aggregate(views.csr, x, op, weights=w, use_edge_weight=uw, threads=threads)
        _require_add(op, abstraction)
        return pull_spmm(views.csr, x, weights=w, use_edge_weight=uw, threads=threads)
    if abstraction == "push":
        _require_add(op, abstraction)
        w = None if edge_weights is None else np.asarray(edge_weights, dtype=np.float32)[views.csc.edge_ids]
        return push_spmm(views.csc, x, weights=w, use_edge_weight=uw, threads=threads)
    raise ValueError(f"unknown abstraction {abstraction!r}; expected one of {', '.join(ABSTRACTIONS)}")


def _require_add(op: ReduceOp, abstraction: str) -> None:
    if op is not ReduceOp.ADD:
        raise ContractError(f"{abstraction} computes a sparse-dense product and only supports op=add")


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------


def dense_oracle(
    g: CooGraph, x, op="add", weights: Optional[np.ndarray] = None, use_edge_weight: bool = True
) -> np.ndarray:
    """Float64 ground truth from an explicit N x N adjacency.

    add/mean use the duplicate-summed weighted adjacency (mean divides by the
    in-edge count); max scans every edge entering each destination.
    """
    op = as_op(op)
    x64 = np.asarray(x, dtype=np.float64)
    N = g.num_vertices
    w = weights if weights is not None else (g.weights if use_edge_weight else None)
    w64 = np.ones(g.num_edges) if w is None else np.asarray(w, dtype=np.float64)
    src, dst = np.asarray(g.src), np.asarray(g.dst)
    if op is ReduceOp.MAX:
        out = np.zeros((N, x64.shape[1]))
        if g.num_edges:
            order = np.argsort(dst, kind="stable")
            vals = x64[src[order]] * w64[order, None]
            d = dst[order]
            starts = np.r_[0, np.nonzero(np.diff(d))[0] + 1]
            out[d[starts]] = np.maximum.reduceat(vals, starts, axis=0)
        return out
    adj = np.zeros((N, N))
    np.add.at(adj, (dst, src), w64)
    out = adj @ x64
    if op is ReduceOp.MEAN:
        deg = np.bincount(dst, minlength=N).astype(np.float64)
        out = np.divide(out, deg[:, None], out=np.zeros_like(out), where=deg[:, None] > 0)
    return out
