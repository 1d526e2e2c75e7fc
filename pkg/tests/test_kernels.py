import numpy as np
import pytest
from hypothesis import given, strategies as st

from aggrbench.features import random_features
from aggrbench.kernels import (
    ABSTRACTIONS,
    ContractError,
    CostCounters,
    aggregate,
    dense_oracle,
    gather_reduce,
    pull_spmm,
    push_spmm,
    reduce_aggregate,
    scatter_aggregate,
    scatter_messages,
)
from aggrbench.memory import AllocationLimitExceeded, tracking
from aggrbench.topology import CooGraph, GraphViews, coo_to_csc, coo_to_csr, from_edge_list

from conftest import STAR, TRIANGLE, graphs, random_coo

X3 = np.array([[1], [2], [3]], dtype=np.float32)


def _legal(op):
    return ABSTRACTIONS if op == "add" else ("scatter", "reduce")


def test_scatter_messages_triangle():
    g = from_edge_list(TRIANGLE, 3)
    msgs, c = scatter_messages(g, X3)
    assert msgs.tolist() == [[1], [2], [3]]
    assert c.messages_materialized == 3
    w = from_edge_list(TRIANGLE, 3, [2, 2, 2])
    assert scatter_messages(w, X3)[0].tolist() == [[2], [4], [6]]


def test_scatter_messages_empty():
    msgs, c = scatter_messages(from_edge_list([], 3), X3)
    assert msgs.shape == (0, 1) and c.messages_materialized == 0


def test_scatter_requires_source_order():
    g = CooGraph(3, [2, 0, 1], [0, 1, 2])
    with pytest.raises(ContractError):
        scatter_messages(g, X3)


def test_gather_triangle():
    g = from_edge_list(TRIANGLE, 3)
    msgs, _ = scatter_messages(g, X3)
    assert gather_reduce(msgs, g, "add")[0].tolist() == [[3], [1], [2]]


def test_mean_max_examples():
    g = from_edge_list([(0, 2), (1, 2)], 3)
    x = np.array([[2], [4], [0]], dtype=np.float32)
    for a in ("scatter", "reduce"):
        v = GraphViews.build(g)
        assert aggregate(v, x, a, "mean")[0].tolist() == [[0], [0], [3]]
        assert aggregate(v, x, a, "max")[0].tolist() == [[0], [0], [4]]


def test_max_of_negatives_and_empty_rows():
    g = from_edge_list([(0, 2), (1, 2)], 4)
    x = np.array([[-2], [-4], [0], [9]], dtype=np.float32)
    for a in ("scatter", "reduce"):
        out = aggregate(GraphViews.build(g), x, a, "max")[0]
        assert out.ravel().tolist() == [0, 0, -2, 0]


def test_reduce_and_pull_examples():
    tri = coo_to_csr(from_edge_list(TRIANGLE, 3))
    assert reduce_aggregate(tri, X3)[0].tolist() == [[3], [1], [2]]
    assert pull_spmm(tri, X3)[0].tolist() == [[3], [1], [2]]
    star = coo_to_csr(from_edge_list(STAR, 5))
    x = np.arange(5, dtype=np.float32).reshape(-1, 1)
    assert reduce_aggregate(star, x)[0].ravel().tolist() == [10, 0, 0, 0, 0]
    assert reduce_aggregate(star, x, "mean")[0].ravel().tolist() == [2.5, 0, 0, 0, 0]


def test_pull_push_self_loops_and_duplicates():
    loops = from_edge_list([(0, 0), (1, 1)], 2)
    x = np.array([[5], [7]], dtype=np.float32)
    assert pull_spmm(coo_to_csr(loops), x)[0].tolist() == [[5], [7]]
    assert push_spmm(coo_to_csc(loops), x)[0].tolist() == [[5], [7]]
    dup = from_edge_list([(0, 1), (0, 1)], 2)
    x = np.array([[5], [0]], dtype=np.float32)
    assert pull_spmm(coo_to_csr(dup), x)[0].tolist() == [[0], [10]]
    assert push_spmm(coo_to_csc(dup), x)[0].tolist() == [[0], [10]]
    assert push_spmm(coo_to_csc(from_edge_list(TRIANGLE, 3)), X3)[0].tolist() == [[3], [1], [2]]


def test_oracle_examples():
    assert dense_oracle(from_edge_list(TRIANGLE, 3), X3).tolist() == [[3], [1], [2]]
    assert not dense_oracle(from_edge_list([], 3), X3).any()
    g = from_edge_list([(0, 0)], 1, [2.0])
    assert dense_oracle(g, [[3]]).tolist() == [[6]]


def test_pull_push_reject_other_ops():
    v = GraphViews.build(from_edge_list(TRIANGLE, 3))
    for a in ("pull", "push"):
        with pytest.raises(ContractError):
            aggregate(v, X3, a, "max")


def test_unknown_abstraction():
    with pytest.raises(ValueError):
        aggregate(GraphViews.build(from_edge_list(TRIANGLE, 3)), X3, "gather")


def _check(out, ref, op, rtol, scale=None):
    if op == "max":
        assert np.array_equal(out, ref.astype(np.float32))
    elif scale is None:
        np.testing.assert_allclose(out, ref, rtol=rtol, atol=0)
    else:
        assert np.all(np.abs(out.astype(np.float64) - ref) <= rtol * scale)


@pytest.mark.parametrize("threads", [1, 4])
@given(g=graphs(), f=st.sampled_from([1, 3, 8]), seed=st.integers(0, 1000))
def test_equivalence_nonnegative_inputs(threads, g, f, seed):
    # no sign cancellation: plain relative tolerance against the oracle
    x = np.abs(random_features(g.num_vertices, f, seed))
    v = GraphViews.build(g)
    for op in ("add", "mean", "max"):
        ref = dense_oracle(g, x, op)
        for a in _legal(op):
            out, c = aggregate(v, x, a, op, threads=threads)
            _check(out, ref, op, 1e-4)
            assert c.edges_traversed == g.num_edges


@given(g=graphs(), f=st.sampled_from([1, 3, 8]), seed=st.integers(0, 1000))
def test_equivalence_mixed_signs(g, f, seed):
    # with cancellation the error is bounded relative to the sum of absolute terms
    x = random_features(g.num_vertices, f, seed)
    v = GraphViews.build(g)
    w = None if g.weights is None else np.abs(g.weights)
    for op in ("add", "mean", "max"):
        ref = dense_oracle(g, x, op)
        scale = dense_oracle(g, np.abs(x), op, weights=w)
        for a in _legal(op):
            _check(aggregate(v, x, a, op)[0], ref, op, 1e-4, scale)


def test_vertex_centric_paths_survive_cancellation():
    # reduce, pull and push form products in double, so only the final rounding remains
    g = from_edge_list([(0, 2), (1, 2)], 3, [0.3, 1.0])
    x = np.array([[1 / 3], [-0.1], [0]], dtype=np.float32)
    ref = dense_oracle(g, x)
    assert 0 < ref[2, 0] < 1e-8
    v = GraphViews.build(g)
    for a in ("reduce", "pull", "push"):
        np.testing.assert_allclose(aggregate(v, x, a)[0], ref, rtol=1e-6, atol=0)
    # scatter rounds each message to single precision first, so its relative error here is large
    scatter = aggregate(v, x, "scatter")[0][2, 0]
    assert abs(scatter - ref[2, 0]) > 1e-4 * ref[2, 0]
    assert abs(scatter - ref[2, 0]) <= 1e-4 * dense_oracle(g, np.abs(x))[2, 0]


@given(g=graphs(), seed=st.integers(0, 1000))
def test_mean_is_add_divided_by_in_degree(g, seed):
    x = random_features(g.num_vertices, 4, seed)
    v = GraphViews.build(g)
    deg = g.in_degrees().astype(np.float64)[:, None]
    for a in ("scatter", "reduce"):
        s = aggregate(v, x, a, "add")[0].astype(np.float64)
        m = aggregate(v, x, a, "mean")[0]
        expect = np.divide(s, deg, out=np.zeros_like(s), where=deg > 0)
        np.testing.assert_allclose(m, expect, rtol=1e-6, atol=0)
        assert not m[deg[:, 0] == 0].any()


@given(g=graphs(weighted=True), seed=st.integers(0, 1000), perm_seed=st.integers(0, 1000))
def test_edge_permutation_invariance(g, seed, perm_seed):
    x = random_features(g.num_vertices, 5, seed)
    perm = np.random.default_rng(perm_seed).permutation(g.num_edges)
    h = from_edge_list(np.stack([g.src[perm], g.dst[perm]], axis=1), g.num_vertices, g.weights[perm])
    vg, vh = GraphViews.build(g), GraphViews.build(h)
    for op in ("add", "mean", "max"):
        for a in _legal(op):
            a1, a2 = aggregate(vg, x, a, op)[0], aggregate(vh, x, a, op)[0]
            if op == "max":
                assert np.array_equal(a1, a2)
            else:
                np.testing.assert_allclose(a1, a2, rtol=1e-5, atol=0)


@given(g=graphs(), seed=st.integers(0, 100))
def test_sequential_and_parallel_agree(g, seed):
    x = random_features(g.num_vertices, 6, seed)
    v = GraphViews.build(g)
    for op in ("add", "mean", "max"):
        for a in _legal(op):
            seq = aggregate(v, x, a, op, threads=1)[0]
            par = aggregate(v, x, a, op, threads=4)[0]
            assert np.array_equal(seq, par)


@given(g=graphs())
def test_counter_identities(g):
    F = 7
    x = random_features(g.num_vertices, F, 0)
    v = GraphViews.build(g)
    N, E = g.num_vertices, g.num_edges
    c = aggregate(v, x, "scatter")[1]
    assert c.messages_materialized == E * F
    for a in ("reduce", "pull"):
        c = aggregate(v, x, a)[1]
        assert c.messages_materialized == 0 and c.partial_sum_elements <= F
    assert aggregate(v, x, "push")[1].partial_sum_elements == N * F
    for a in ABSTRACTIONS:
        c = aggregate(v, x, a)[1]
        assert all(val >= 0 for val in c.to_dict().values())


def test_kernels_do_not_mutate_inputs():
    g = random_coo(np.random.default_rng(1), 30, 0.2, weighted=True)
    x = random_features(30, 4, 1)
    before = x.copy()
    v = GraphViews.build(g)
    for a in ABSTRACTIONS:
        out = aggregate(v, x, a)[0]
        assert out is not x
    assert np.array_equal(x, before)


def test_explicit_edge_weights_follow_coo_order():
    g = random_coo(np.random.default_rng(4), 25, 0.2)
    w = np.random.default_rng(5).uniform(0.5, 2, g.num_edges).astype(np.float32)
    x = random_features(25, 3, 0)
    ref = dense_oracle(g, x, weights=w)
    scale = dense_oracle(g, np.abs(x), weights=w)
    v = GraphViews.build(g)
    for a in ABSTRACTIONS:
        _check(aggregate(v, x, a, edge_weights=w)[0], ref, "add", 1e-4, scale)


def test_allocation_tracking_and_limit():
    g = random_coo(np.random.default_rng(0), 100, 0.1)
    x = random_features(100, 8, 0)
    E = g.num_edges
    with tracking() as t:
        scatter_aggregate(g, x)
    assert t.peak_bytes >= E * 8 * 4
    assert t.live_bytes == 100 * 8 * 4  # only the output survives
    with pytest.raises(AllocationLimitExceeded) as info:
        with tracking(limit_bytes=1000):
            scatter_aggregate(g, x)
    assert info.value.attempted_bytes == E * 8 * 4


def test_cost_counters_serialize():
    c = CostCounters(1, 2, 3, 4, 5)
    assert CostCounters.from_dict(c.to_dict()) == c
