"""Seeded random graphs for the density, power-law and clustering sweeps.

Randomness is counter-based: each source row (or lattice edge) draws from its
own Philox stream keyed by ``(seed, family, index)``, so output does not depend
on the order rows are generated in.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .topology import INDEX_DTYPE, CooGraph, from_edge_list

FAMILIES = ("erdos_renyi", "chung_lu_powerlaw", "watts_strogatz")
FAMILY_ALIASES = {
    "er": "erdos_renyi",
    "erdos_renyi": "erdos_renyi",
    "cl": "chung_lu_powerlaw",
    "chung_lu": "chung_lu_powerlaw",
    "powerlaw": "chung_lu_powerlaw",
    "chung_lu_powerlaw": "chung_lu_powerlaw",
    "ws": "watts_strogatz",
    "watts_strogatz": "watts_strogatz",
}
_STREAM_TAG = {"erdos_renyi": 1, "chung_lu_powerlaw": 2, "watts_strogatz": 3}
DEFAULT_MEAN_DEGREE = 20.0


def _stream(seed: int, family: str, index: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, (_STREAM_TAG[family] << 48) | index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _assemble(n: int, sources: list, targets: list) -> CooGraph:
    if sources:
        src = np.concatenate(sources)
        dst = np.concatenate(targets)
    else:
        src = dst = np.zeros(0, dtype=INDEX_DTYPE)
    return from_edge_list(np.stack([src, dst], axis=1), n)


def gen_erdos_renyi(n: int, density: float, seed: int) -> CooGraph:
    """Directed G(n, p): each ordered pair u != v independently with probability ``density``."""
    if not (0.0 < density <= 1.0):
        raise ValueError(f"density must be in (0, 1], got {density}")
    if n < 1:
        raise ValueError("n must be positive")
    others = np.arange(n - 1, dtype=INDEX_DTYPE)
    sources, targets = [], []
    for u in range(n):
        hit = others[_stream(seed, "erdos_renyi", u).random(n - 1) < density]
        hit[hit >= u] += 1
        sources.append(np.full(hit.shape[0], u, dtype=INDEX_DTYPE))
        targets.append(hit)
    return _assemble(n, sources, targets)


def chung_lu_weights(n: int, exponent: float, mean_degree: float) -> np.ndarray:
    """Expected degrees proportional to (i+1)^(-1/(exponent-1)), mean ``mean_degree``,
    each capped at sqrt(sum of weights)."""
    if exponent <= 1.0:
        raise ValueError(f"power-law exponent must be > 1, got {exponent}")
    if mean_degree <= 0:
        raise ValueError("mean degree must be positive")
    w = (np.arange(n, dtype=np.float64) + 1.0) ** (-1.0 / (exponent - 1.0))
    target = n * mean_degree
    # rescale and cap until the capped sequence keeps the target mean
    for _ in range(100):
        w *= target / w.sum()
        capped = np.minimum(w, np.sqrt(w.sum()))
        if np.allclose(capped, w, rtol=1e-12, atol=0.0):
            break
        w = capped
    return w


def gen_chung_lu_powerlaw(n: int, exponent: float, mean_degree: float, seed: int) -> CooGraph:
    """Directed Chung-Lu graph: edge (u, v), u != v, with probability min(1, w_u w_v / sum w)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    w = chung_lu_weights(n, exponent, mean_degree)
    total = w.sum()
    cols = np.arange(n, dtype=INDEX_DTYPE)
    sources, targets = [], []
    for u in range(n):
        p = np.minimum(1.0, w[u] * w / total)
        p[u] = 0.0
        hit = cols[_stream(seed, "chung_lu_powerlaw", u).random(n) < p]
        sources.append(np.full(hit.shape[0], u, dtype=INDEX_DTYPE))
        targets.append(hit)
    return _assemble(n, sources, targets)


def gen_watts_strogatz(n: int, k: int, p: float, seed: int) -> CooGraph:
    """Ring lattice of even degree ``k`` with each edge rewired with probability ``p``.

    Lattice edges (u, u+j) are visited for j = 1..k/2, u = 0..n-1; a rewired
    edge keeps u and gets a uniform new endpoint that is neither u nor already
    adjacent. The result is emitted in both directions.
    """
    if k % 2 or k < 2:
        raise ValueError(f"k must be a positive even number, got {k}")
    if k >= n:
        raise ValueError(f"k must be smaller than n ({k} >= {n})")
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"rewire probability must be in [0, 1], got {p}")
    adj = [set() for _ in range(n)]
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)
    if p > 0.0:
        for j in range(1, k // 2 + 1):
            for u in range(n):
                v = (u + j) % n
                rng = _stream(seed, "watts_strogatz", (j - 1) * n + u)
                if rng.random() >= p or len(adj[u]) >= n - 1 or v not in adj[u]:
                    continue
                while True:
                    w = int(rng.integers(n))
                    if w != u and w not in adj[u]:
                        break
                adj[u].discard(v)
                adj[v].discard(u)
                adj[u].add(w)
                adj[w].add(u)
    sources = [np.full(len(nb), u, dtype=INDEX_DTYPE) for u, nb in enumerate(adj)]
    targets = [np.fromiter(sorted(nb), dtype=INDEX_DTYPE, count=len(nb)) for nb in adj]
    return _assemble(n, sources, targets)


@dataclass(frozen=True)
class SynthSpec:
    family: str
    num_vertices: int = 10000
    density: Optional[float] = None
    exponent: Optional[float] = None
    mean_degree: float = DEFAULT_MEAN_DEGREE
    k: Optional[int] = None
    p: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        fam = FAMILY_ALIASES.get(self.family)
        if fam is None:
            raise ValueError(f"unknown family {self.family!r}; expected one of {', '.join(FAMILIES)}")
        object.__setattr__(self, "family", fam)
        if fam == "erdos_renyi":
            if self.density is None or not (0.0 < self.density <= 1.0):
                raise ValueError(f"density must be in (0, 1], got {self.density}")
        elif fam == "chung_lu_powerlaw":
            if self.exponent is None or self.exponent <= 1.0:
                raise ValueError(f"power-law exponent must be > 1, got {self.exponent}")
        else:
            if self.k is None or self.k % 2 or self.k < 2 or self.k >= self.num_vertices:
                raise ValueError(f"k must be an even number in [2, n), got {self.k}")
            if self.p is None or not (0.0 <= self.p <= 1.0):
                raise ValueError(f"rewire probability must be in [0, 1], got {self.p}")

    def to_dict(self) -> dict:
        return asdict(self)

    def with_value(self, prop: str, value) -> "SynthSpec":
        d = self.to_dict()
        d[{"rewire_p": "p"}.get(prop, prop)] = value
        return SynthSpec(**d)


def generate(spec: SynthSpec) -> CooGraph:
    if spec.family == "erdos_renyi":
        return gen_erdos_renyi(spec.num_vertices, spec.density, spec.seed)
    if spec.family == "chung_lu_powerlaw":
        return gen_chung_lu_powerlaw(spec.num_vertices, spec.exponent, spec.mean_degree, spec.seed)
    return gen_watts_strogatz(spec.num_vertices, spec.k, spec.p, spec.seed)
