"""Graph storage formats: COO edge lists and destination/source-major compressed forms.

CSR rows are destination vertices and list incoming sources (pull direction).
CSC columns are source vertices and list outgoing destinations (push direction).
All arrays are frozen (read-only) after construction.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional, Sequence

import numpy as np

SortOrder = Literal["source", "destination", "unsorted"]

INDEX_DTYPE = np.int64
WEIGHT_DTYPE = np.float32


class GraphValidationError(ValueError):
    """Structural problem in a graph or edge-list input.

    ``field`` names the offending array (or ``"line"`` for file input) and
    ``index`` the first bad position, when one exists.
    """

    def __init__(self, message: str, field: str | None = None, index: int | None = None):
        super().__init__(message)
        self.field = field
        self.index = index

    def as_dict(self) -> dict:
        return {"error": "validation", "field": self.field, "index": self.index, "message": str(self)}


def _frozen(a, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True).reshape(-1)
    out.flags.writeable = False
    return out


def _check_ids(ids: np.ndarray, n: int, name: str) -> None:
    if ids.size == 0:
        return
    bad = np.nonzero((ids < 0) | (ids >= n))[0]
    if bad.size:
        i = int(bad[0])
        raise GraphValidationError(
            f"{name}[{i}] = {int(ids[i])} is out of range for {n} vertices", name, i
        )


def _check_weights(weights: Optional[np.ndarray], m: int) -> None:
    if weights is None:
        return
    if weights.shape[0] != m:
        raise GraphValidationError(
            f"weights has length {weights.shape[0]}, expected {m}", "weights"
        )
    bad = np.nonzero(~np.isfinite(weights))[0]
    if bad.size:
        raise GraphValidationError("weights must be finite", "weights", int(bad[0]))


@dataclass(frozen=True, eq=False)
class CooGraph:
    num_vertices: int
    src: np.ndarray
    dst: np.ndarray
    weights: Optional[np.ndarray] = None
    sorted_by: SortOrder = "unsorted"

    def __post_init__(self):
        object.__setattr__(self, "src", _frozen(self.src, INDEX_DTYPE))
        object.__setattr__(self, "dst", _frozen(self.dst, INDEX_DTYPE))
        if self.weights is not None:
            object.__setattr__(self, "weights", _frozen(self.weights, WEIGHT_DTYPE))
        self.validate()

    def validate(self) -> None:
        n = int(self.num_vertices)
        if n < 0:
            raise GraphValidationError("num_vertices must be non-negative", "num_vertices")
        if self.src.shape != self.dst.shape:
            raise GraphValidationError("src and dst lengths differ", "dst")
        _check_ids(self.src, n, "src")
        _check_ids(self.dst, n, "dst")
        _check_weights(self.weights, self.num_edges)
        if self.sorted_by in ("source", "destination"):
            key = self.src if self.sorted_by == "source" else self.dst
            bad = np.nonzero(np.diff(key) < 0)[0]
            if bad.size:
                raise GraphValidationError(
                    f"edge list claims sorted_by={self.sorted_by} but breaks order at edge {int(bad[0]) + 1}",
                    "src" if self.sorted_by == "source" else "dst",
                    int(bad[0]) + 1,
                )
        elif self.sorted_by != "unsorted":
            raise GraphValidationError(f"unknown sort order {self.sorted_by!r}", "sorted_by")

    @property
    def num_edges(self) -> int:
        return int(self.src.shape[0])

    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.src.tolist(), self.dst.tolist()))

    def in_degrees(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.num_vertices)

    def out_degrees(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.num_vertices)


@dataclass(frozen=True, eq=False)
class _Compressed:
    num_vertices: int
    ptr: np.ndarray
    idx: np.ndarray
    weights: Optional[np.ndarray] = None
    # COO position of each entry; lets per-edge data computed in COO order be permuted.
    edge_ids: Optional[np.ndarray] = field(default=None, repr=False)

    _ptr_name = "ptr"
    _idx_name = "idx"

    def __post_init__(self):
        object.__setattr__(self, "ptr", _frozen(self.ptr, INDEX_DTYPE))
        object.__setattr__(self, "idx", _frozen(self.idx, INDEX_DTYPE))
        if self.weights is not None:
            object.__setattr__(self, "weights", _frozen(self.weights, WEIGHT_DTYPE))
        if self.edge_ids is not None:
            object.__setattr__(self, "edge_ids", _frozen(self.edge_ids, INDEX_DTYPE))
        self.validate()

    def validate(self) -> None:
        n = int(self.num_vertices)
        p, name = self.ptr, self._ptr_name
        if p.shape[0] != n + 1:
            raise GraphValidationError(f"{name} has length {p.shape[0]}, expected {n + 1}", name)
        if p[0] != 0:
            raise GraphValidationError(f"{name}[0] must be 0, got {int(p[0])}", name, 0)
        bad = np.nonzero(np.diff(p) < 0)[0]
        if bad.size:
            i = int(bad[0]) + 1
            raise GraphValidationError(f"{name} decreases at position {i}", name, i)
        if p[n] != self.idx.shape[0]:
            raise GraphValidationError(
                f"{name}[{n}] = {int(p[n])} but there are {self.idx.shape[0]} entries", name, n
            )
        _check_ids(self.idx, n, self._idx_name)
        _check_weights(self.weights, self.num_edges)
        if self.edge_ids is not None and self.edge_ids.shape[0] != self.num_edges:
            raise GraphValidationError("edge_ids length differs from entry count", "edge_ids")

    @property
    def num_edges(self) -> int:
        return int(self.idx.shape[0])

    def degrees(self) -> np.ndarray:
        return np.diff(self.ptr)


class CsrGraph(_Compressed):
    """Destination-major compressed adjacency: row v lists the sources of edges (u, v)."""

    _ptr_name = "row_ptr"
    _idx_name = "col_idx"

    @property
    def row_ptr(self) -> np.ndarray:
        return self.ptr

    @property
    def col_idx(self) -> np.ndarray:
        return self.idx


class CscGraph(_Compressed):
    """Source-major compressed adjacency: column u lists the destinations of edges (u, v)."""

    _ptr_name = "col_ptr"
    _idx_name = "row_idx"

    @property
    def col_ptr(self) -> np.ndarray:
        return self.ptr

    @property
    def row_idx(self) -> np.ndarray:
        return self.idx


def from_edge_list(
    pairs: Iterable[Sequence[int]],
    num_vertices: int,
    weights: Optional[Sequence[float]] = None,
) -> CooGraph:
    """Build a source-sorted COO graph.

    Sorting is stable with ties broken by destination, so duplicate edges keep
    their input order (and their weights stay attached).
    """
    arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=INDEX_DTYPE)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GraphValidationError("edge list must be a sequence of (source, destination) pairs", "edges")
    src, dst = arr[:, 0], arr[:, 1]
    for name, ids in (("source", src), ("destination", dst)):
        bad = np.nonzero((ids < 0) | (ids >= num_vertices))[0]
        if bad.size:
            e = int(bad[0])
            raise GraphValidationError(
                f"edge {e} ({int(src[e])}, {int(dst[e])}): {name} id out of range for {num_vertices} vertices",
                "edges",
                e,
            )
    w = None if weights is None else np.asarray(weights, dtype=WEIGHT_DTYPE)
    if w is not None and w.shape[0] != src.shape[0]:
        raise GraphValidationError(
            f"got {w.shape[0]} weights for {src.shape[0]} edges", "weights"
        )
    order = np.lexsort((dst, src))  # lexsort is stable
    return CooGraph(
        num_vertices,
        src[order],
        dst[order],
        None if w is None else w[order],
        sorted_by="source",
    )


def sort_by_source(g: CooGraph) -> CooGraph:
    if g.sorted_by == "source":
        return g
    return from_edge_list(np.stack([g.src, g.dst], axis=1), g.num_vertices, g.weights)


def symmetrize(g: CooGraph) -> CooGraph:
    """Add the reverse of every non-self-loop edge; reciprocal pairs are not duplicated."""
    fwd = set(zip(g.src.tolist(), g.dst.tolist()))
    extra = [(v, u) for (u, v) in zip(g.src.tolist(), g.dst.tolist()) if u != v and (v, u) not in fwd]
    seen: set = set()
    rev = [e for e in extra if not (e in seen or seen.add(e))]
    pairs = np.concatenate([np.stack([g.src, g.dst], axis=1), np.asarray(rev, dtype=INDEX_DTYPE).reshape(-1, 2)])
    w = None
    if g.weights is not None:
        lookup = {}
        for u, v, x in zip(g.src.tolist(), g.dst.tolist(), g.weights.tolist()):
            lookup.setdefault((u, v), x)
        w = np.concatenate([g.weights, np.asarray([lookup[(v, u)] for (u, v) in rev], dtype=WEIGHT_DTYPE)])
    return from_edge_list(pairs, g.num_vertices, w)


def _compress(major: np.ndarray, minor: np.ndarray, n: int):
    order = np.lexsort((np.arange(major.shape[0]), minor, major))
    counts = np.bincount(major, minlength=n)
    ptr = np.zeros(n + 1, dtype=INDEX_DTYPE)
    np.cumsum(counts, out=ptr[1:])
    return ptr, minor[order], order


def coo_to_csr(g: CooGraph) -> CsrGraph:
    ptr, idx, order = _compress(g.dst, g.src, g.num_vertices)
    w = None if g.weights is None else g.weights[order]
    return CsrGraph(g.num_vertices, ptr, idx, w, edge_ids=order)


def coo_to_csc(g: CooGraph) -> CscGraph:
    ptr, idx, order = _compress(g.src, g.dst, g.num_vertices)
    w = None if g.weights is None else g.weights[order]
    return CscGraph(g.num_vertices, ptr, idx, w, edge_ids=order)


def csr_to_coo(g: CsrGraph) -> CooGraph:
    dst = np.repeat(np.arange(g.num_vertices, dtype=INDEX_DTYPE), g.degrees())
    return CooGraph(g.num_vertices, g.col_idx, dst, g.weights, sorted_by="destination")


def csc_to_coo(g: CscGraph) -> CooGraph:
    src = np.repeat(np.arange(g.num_vertices, dtype=INDEX_DTYPE), g.degrees())
    return CooGraph(g.num_vertices, src, g.row_idx, g.weights, sorted_by="source")


@dataclass(frozen=True, eq=False)
class GraphViews:
    """A COO graph together with its CSR and CSC forms, built once."""

    coo: CooGraph
    csr: CsrGraph
    csc: CscGraph

    @classmethod
    def build(cls, g: CooGraph) -> "GraphViews":
        g = sort_by_source(g)
        return cls(g, coo_to_csr(g), coo_to_csc(g))

    @property
    def num_vertices(self) -> int:
        return self.coo.num_vertices

    @property
    def num_edges(self) -> int:
        return self.coo.num_edges


# ---------------------------------------------------------------------------
# Edge-list text format
# ---------------------------------------------------------------------------


def parse_edge_list(lines: Iterable[str], num_vertices: Optional[int] = None) -> CooGraph:
    """Parse ``<source> <destination> [weight]`` lines; ``#`` starts a comment line.

    Either every edge line carries a weight or none does. The vertex count is
    ``num_vertices`` if given, else a ``# vertices N`` comment, else 1 + max id.
    """
    src: list[int] = []
    dst: list[int] = []
    wts: list[float] = []
    weighted: Optional[bool] = None
    hint: Optional[int] = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            words = line[1:].split()
            if hint is None and len(words) == 2 and words[0] == "vertices" and words[1].isdigit():
                hint = int(words[1])
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphValidationError(
                f"line {lineno}: expected '<source> <destination> [weight]', got {line!r}", "line", lineno
            )
        try:
            u, v = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else None
        except ValueError:
            raise GraphValidationError(f"line {lineno}: cannot parse {line!r}", "line", lineno) from None
        if u < 0 or v < 0:
            raise GraphValidationError(f"line {lineno}: negative vertex id", "line", lineno)
        has_w = w is not None
        if weighted is None:
            weighted = has_w
        elif weighted != has_w:
            raise GraphValidationError(
                f"line {lineno}: mixes weighted and unweighted edges", "line", lineno
            )
        src.append(u)
        dst.append(v)
        if has_w:
            wts.append(w)
    inferred = 1 + max(max(src, default=-1), max(dst, default=-1))
    if num_vertices is not None:
        n = int(num_vertices)
    else:
        n = inferred if hint is None else max(hint, inferred)
    if n < inferred:
        raise GraphValidationError(
            f"vertex id {inferred - 1} does not fit in {n} vertices", "num_vertices"
        )
    pairs = np.stack([np.asarray(src, dtype=INDEX_DTYPE), np.asarray(dst, dtype=INDEX_DTYPE)], axis=1)
    return from_edge_list(pairs, n, wts if weighted else None)


def read_edge_list(path: str | os.PathLike, num_vertices: Optional[int] = None) -> CooGraph:
    with open(path, "r", encoding="ascii") as fh:
        return parse_edge_list(fh, num_vertices)


def format_edge_list(g: CooGraph) -> str:
    if g.weights is None:
        rows = (f"{u} {v}\n" for u, v in zip(g.src.tolist(), g.dst.tolist()))
    else:
        rows = (
            f"{u} {v} {w!r}\n"
            for u, v, w in zip(g.src.tolist(), g.dst.tolist(), g.weights.astype(np.float64).tolist())
        )
    return f"# vertices {g.num_vertices}\n" + "".join(rows)


def write_edge_list(g: CooGraph, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_edge_list(g))
