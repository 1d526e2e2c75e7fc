"""Structural statistics: density, degree skew, power-law tail exponent, transitivity."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numba
import numpy as np
from scipy.special import zeta

from .topology import CooGraph

MIN_TAIL_SAMPLES = 10
# thresholds above the lowest one need a larger tail, or KS latches onto a handful of hubs
MIN_SCAN_TAIL = 50


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    d_min: int
    n_tail: int
    ks_distance: float


@dataclass(frozen=True)
class GraphStats:
    num_vertices: int
    num_edges: int
    density: float
    max_in_degree: int
    mean_in_degree: float
    load_imbalance: float
    powerlaw_exponent_mle: Optional[float]
    powerlaw_dmin: Optional[int]
    global_clustering_coefficient: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GraphStats":
        return cls(**d)


def discrete_mle(degrees: np.ndarray, d_min: int) -> Optional[float]:
    """Discrete power-law exponent MLE (continuous approximation with a half-unit shift).

    Returns None when fewer than 10 values are >= d_min.
    """
    d = np.asarray(degrees, dtype=np.float64)
    d = d[d >= d_min]
    if d.size < MIN_TAIL_SAMPLES:
        return None
    s = np.log(d / (d_min - 0.5)).sum()
    if s <= 0:
        return None
    return float(1.0 + d.size / s)


def _ks_distance(tail: np.ndarray, alpha: float, d_min: int) -> float:
    # tail is sorted; compare empirical P(D < x) with the fitted discrete CDF at each support point
    support = np.unique(tail)
    emp = np.searchsorted(tail, support, side="left") / tail.size
    model = 1.0 - zeta(alpha, support) / zeta(alpha, d_min)
    return float(np.abs(emp - model).max())


def fit_powerlaw(degrees: np.ndarray, d_min: Optional[int] = None, lower: int = 2) -> Optional[PowerLawFit]:
    """Fit the tail exponent of a degree sequence.

    With ``d_min`` fixed, only the MLE runs. Otherwise every observed degree
    >= ``lower`` is tried as the threshold and the one minimizing the
    Kolmogorov-Smirnov distance wins (Clauset, Shalizi & Newman).
    """
    deg = np.sort(np.asarray(degrees, dtype=np.int64))
    if d_min is not None:
        alpha = discrete_mle(deg, d_min)
        if alpha is None:
            return None
        tail = deg[deg >= d_min]
        return PowerLawFit(alpha, int(d_min), int(tail.size), _ks_distance(tail, alpha, d_min))

    best: Optional[PowerLawFit] = None
    for i, cand in enumerate(np.unique(deg[deg >= lower])):
        tail = deg[np.searchsorted(deg, cand):]
        if tail.size < (MIN_TAIL_SAMPLES if i == 0 else MIN_SCAN_TAIL):
            break
        alpha = discrete_mle(tail, int(cand))
        if alpha is None or alpha <= 1.0:
            continue
        ks = _ks_distance(tail, alpha, int(cand))
        if best is None or ks < best.ks_distance:
            best = PowerLawFit(alpha, int(cand), int(tail.size), ks)
    return best


@numba.njit(cache=True)
def _count_triangles(ptr, idx):
    # ptr/idx: oriented adjacency (low rank -> high rank), each list sorted
    n = ptr.shape[0] - 1
    mark = np.full(n, -1, dtype=np.int64)
    total = 0
    for u in range(n):
        for j in range(ptr[u], ptr[u + 1]):
            mark[idx[j]] = u
        for j in range(ptr[u], ptr[u + 1]):
            v = idx[j]
            for k in range(ptr[v], ptr[v + 1]):
                if mark[idx[k]] == u:
                    total += 1
    return total


def undirected_simple_edges(g: CooGraph) -> tuple[np.ndarray, np.ndarray]:
    """Distinct unordered pairs (a < b) of the undirected projection, self-loops dropped."""
    keep = g.src != g.dst
    a = np.minimum(g.src[keep], g.dst[keep])
    b = np.maximum(g.src[keep], g.dst[keep])
    if a.size == 0:
        return a, b
    key = np.unique(a * g.num_vertices + b)
    return key // g.num_vertices, key % g.num_vertices


def transitivity(g: CooGraph) -> float:
    """Global clustering coefficient of the undirected projection: 3 * triangles / connected triples."""
    n = g.num_vertices
    a, b = undirected_simple_edges(g)
    if a.size == 0:
        return 0.0
    deg = np.bincount(a, minlength=n) + np.bincount(b, minlength=n)
    triples = int((deg * (deg - 1) // 2).sum())
    if triples == 0:
        return 0.0
    # orient by (degree, id) so every triangle is counted exactly once
    rank = np.lexsort((np.arange(n), deg))
    pos = np.empty(n, dtype=np.int64)
    pos[rank] = np.arange(n)
    lo = np.where(pos[a] < pos[b], a, b)
    hi = np.where(pos[a] < pos[b], b, a)
    order = np.lexsort((hi, lo))
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(lo, minlength=n), out=ptr[1:])
    tri = _count_triangles(ptr, np.ascontiguousarray(hi[order]))
    return float(3 * tri / triples)


def compute_stats(g: CooGraph, powerlaw_dmin: Optional[int] = None) -> GraphStats:
    n, m = g.num_vertices, g.num_edges
    density = m / (n * (n - 1)) if n > 1 else 0.0
    indeg = g.in_degrees()
    max_in = int(indeg.max()) if n else 0
    mean_in = m / n if n else 0.0
    imbalance = max_in / mean_in if m > 0 else 0.0
    fit = fit_powerlaw(indeg, d_min=powerlaw_dmin) if m > 0 else None
    return GraphStats(
        num_vertices=n,
        num_edges=m,
        density=float(density),
        max_in_degree=max_in,
        mean_in_degree=float(mean_in),
        load_imbalance=float(imbalance),
        powerlaw_exponent_mle=None if fit is None else fit.exponent,
        powerlaw_dmin=None if fit is None else fit.d_min,
        global_clustering_coefficient=transitivity(g),
    )
