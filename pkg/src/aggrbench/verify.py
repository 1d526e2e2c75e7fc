"""Cross-abstraction equivalence checks.

Small graphs are checked against the dense float64 oracle, larger ones
pairwise against the reduce result. max must agree exactly. add and mean must
agree to a relative tolerance of 1e-4 element-wise, measured against the sum
of absolute terms feeding each element: without sign cancellation that is
|reference| itself, and with it single-precision messages cannot do better.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .kernels import aggregate, as_op, dense_oracle, ReduceOp
from .topology import CooGraph, GraphValidationError, GraphViews, csc_to_coo, csr_to_coo

DENSE_LIMIT = 4096
RTOL = 1e-4


@dataclass
class Check:
    op: str
    abstraction: str
    reference: str
    passed: bool
    max_rel_error: float = 0.0
    mismatches: int = 0
    first_mismatch: Optional[list] = None


@dataclass
class VerificationResult:
    num_vertices: int
    num_edges: int
    mode: str
    checks: list = field(default_factory=list)
    structural_errors: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.structural_errors and all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "num_vertices": self.num_vertices,
            "num_edges": self.num_edges,
            "mode": self.mode,
            "structural_errors": list(self.structural_errors),
            "checks": [asdict(c) for c in self.checks],
        }


def compare(out, ref, op, scale=None) -> tuple[bool, float, int, Optional[list]]:
    """Element-wise comparison of a float32 result with a reference.

    ``scale`` is what the add/mean error is relative to (default ``|ref|``).
    Returns (passed, max relative error, mismatch count, first mismatch index).
    """
    op = as_op(op)
    out = np.asarray(out)
    ref = np.asarray(ref)
    if out.shape != ref.shape:
        return False, float("inf"), int(max(out.size, ref.size)), None
    if op is ReduceOp.MAX:
        bad = out != ref.astype(np.float32)
        rel = 0.0
    else:
        diff = np.abs(out.astype(np.float64) - ref.astype(np.float64))
        scale = np.abs(ref.astype(np.float64)) if scale is None else np.asarray(scale, dtype=np.float64)
        bad = diff > RTOL * scale
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(diff == 0, 0.0, diff / scale)
        rel = float(r.max()) if r.size else 0.0
    n_bad = int(np.count_nonzero(bad))
    first = [int(i) for i in np.argwhere(bad)[0]] if n_bad else None
    return n_bad == 0, rel, n_bad, first


def _edge_key(src, dst) -> np.ndarray:
    order = np.lexsort((src, dst))
    return np.stack([np.asarray(dst)[order], np.asarray(src)[order]])


def check_views(views: GraphViews) -> list[dict]:
    """Validate the compressed forms and check they hold the same edges as the COO list."""
    errors = []
    coo_key = _edge_key(views.coo.src, views.coo.dst)
    for name, view, back in (("csr", views.csr, csr_to_coo), ("csc", views.csc, csc_to_coo)):
        try:
            view.validate()
            g = back(view)
        except GraphValidationError as exc:
            errors.append({"format": name, **exc.as_dict()})
            continue
        key = _edge_key(g.src, g.dst)
        if key.shape != coo_key.shape or not np.array_equal(key, coo_key):
            errors.append({"format": name, "error": "validation", "field": view._ptr_name, "index": None,
                           "message": f"{name} does not describe the same edges as the COO list"})
    return errors


def _magnitude(views: GraphViews, x, op, weights, dense: bool, threads: int) -> np.ndarray:
    # the same aggregation over |w| and |x|: the sum of absolute terms per element
    w = weights if weights is not None else views.coo.weights
    w = None if w is None else np.abs(np.asarray(w, dtype=np.float32))
    ax = np.abs(np.asarray(x, dtype=np.float32))
    if dense:
        return dense_oracle(views.coo, ax, op, weights=w)
    return aggregate(views, ax, "reduce", op, edge_weights=w, threads=threads)[0]


def verify_views(
    views: GraphViews,
    x,
    ops: Sequence[str] = ("add", "mean", "max"),
    weights: Optional[np.ndarray] = None,
    threads: int = 1,
    dense_limit: int = DENSE_LIMIT,
) -> VerificationResult:
    """Run every legal abstraction for each op and compare the results.

    ``weights`` are in COO order of ``views.coo``; None uses the graph's own.
    """
    N = views.num_vertices
    mode = "dense_oracle" if N <= dense_limit else "cross_check"
    result = VerificationResult(N, views.num_edges, mode)
    result.structural_errors = check_views(views)
    if result.structural_errors:
        return result
    for op in ops:
        op = as_op(op)
        abstractions = ("scatter", "reduce") if op is not ReduceOp.ADD else ("scatter", "reduce", "pull", "push")
        outs = {a: aggregate(views, x, a, op, edge_weights=weights, threads=threads)[0] for a in abstractions}
        if mode == "dense_oracle":
            ref_name = "dense"
            ref = dense_oracle(views.coo, x, op, weights=weights)
            targets = abstractions
        else:
            ref_name = "reduce"
            ref = outs["reduce"]
            targets = tuple(a for a in abstractions if a != "reduce")
        scale = None
        if op is not ReduceOp.MAX:
            scale = _magnitude(views, x, op, weights, mode == "dense_oracle", threads)
        for a in targets:
            ok, rel, n_bad, first = compare(outs[a], ref, op, scale)
            result.checks.append(Check(op.value, a, ref_name, ok, rel, n_bad, first))
    return result


def verify_graph(
    g: CooGraph,
    x,
    ops: Sequence[str] = ("add", "mean", "max"),
    weights: Optional[np.ndarray] = None,
    threads: int = 1,
    dense_limit: int = DENSE_LIMIT,
) -> VerificationResult:
    if weights is not None and g.sorted_by != "source":
        raise ValueError("explicit weights need a source-sorted graph so their order is unambiguous")
    return verify_views(GraphViews.build(g), x, ops, weights, threads, dense_limit)
