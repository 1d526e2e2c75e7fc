import numpy as np
from hypothesis import HealthCheck, settings, strategies as st

from aggrbench.topology import from_edge_list

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_coo(rng, n, density, weighted=False, self_loops=True, duplicates=True):
    """Random directed multigraph with roughly density * n * n edges."""
    m = int(rng.binomial(n * n, density)) if n else 0
    src = rng.integers(0, max(n, 1), m)
    dst = rng.integers(0, max(n, 1), m)
    if not self_loops:
        keep = src != dst
        src, dst = src[keep], dst[keep]
    if not duplicates and src.size:
        _, first = np.unique(src * n + dst, return_index=True)
        src, dst = src[np.sort(first)], dst[np.sort(first)]
    w = rng.uniform(0.25, 2.0, src.size).astype(np.float32) if weighted else None
    return from_edge_list(np.stack([src, dst], axis=1), n, w)


@st.composite
def graphs(draw, max_n=40, weighted=None):
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(0, 4 * n))
    src = draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m))
    dst = draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m))
    use_w = draw(st.booleans()) if weighted is None else weighted
    w = None
    if use_w:
        w = draw(st.lists(st.floats(0.125, 4.0, width=32), min_size=m, max_size=m))
    pairs = np.array(list(zip(src, dst)), dtype=np.int64).reshape(-1, 2)
    return from_edge_list(pairs, n, w)


TRIANGLE = [(0, 1), (1, 2), (2, 0)]
STAR = [(1, 0), (2, 0), (3, 0), (4, 0)]
