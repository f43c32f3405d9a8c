import numpy as np
import pytest

import oracles
from conftest import make_graph, random_connected_graph
from ggd import ConfigError, CorruptionError
from ggd.perturb import drop_edges, drop_feature_dims, shuffle_features


# ------------------------------------------------------------- corruption

def test_shuffle_identity_perm_hook():
    x = np.arange(12, dtype=np.float32).reshape(4, 3)
    out, perm = shuffle_features(x, None, perm=np.arange(4))
    assert np.array_equal(out, x)
    assert np.array_equal(perm, np.arange(4))


def test_shuffle_two_rows_hits_both_orders():
    x = np.array([[1.0], [2.0]], dtype=np.float32)
    seen = set()
    for seed in range(40):
        rng = np.random.default_rng(seed)
        out, _ = shuffle_features(x, rng)
        seen.add(tuple(out.ravel().tolist()))
    assert seen == {(1.0, 2.0), (2.0, 1.0)}


def test_shuffle_preserves_row_multiset_bitwise():
    rng = np.random.default_rng(77)
    x = rng.standard_normal((50, 7)).astype(np.float32)
    out, perm = shuffle_features(x, rng)
    assert np.array_equal(out, x[perm])
    order_a = np.lexsort(x.T)
    order_b = np.lexsort(out.T)
    assert np.array_equal(x[order_a], out[order_b])


def test_shuffle_needs_two_rows():
    with pytest.raises(CorruptionError):
        shuffle_features(np.ones((1, 3), np.float32), np.random.default_rng(0))


# ------------------------------------------------------------- drop edges

def test_drop_edges_p0_is_identity():
    rng = np.random.default_rng(1)
    g = random_connected_graph(20, 30, rng)
    g2 = drop_edges(g, 0.0, rng)
    assert oracles.edge_set(g.row_ptr, g.col_idx) == \
        oracles.edge_set(g2.row_ptr, g2.col_idx)


def test_drop_edges_near_one_removes_almost_all():
    rng = np.random.default_rng(2)
    g = random_connected_graph(200, 400, rng)
    g2 = drop_edges(g, 0.999, rng)
    assert g2.num_nodes == g.num_nodes
    assert g2.nnz < 0.05 * g.nnz


def test_drop_edges_subgraph_and_symmetric():
    rng = np.random.default_rng(3)
    g = random_connected_graph(40, 80, rng)
    g2 = drop_edges(g, 0.4, rng)
    parent = oracles.edge_set(g.row_ptr, g.col_idx)
    child = oracles.edge_set(g2.row_ptr, g2.col_idx)
    assert child <= parent
    assert all((v, u) in child for (u, v) in child)


def test_drop_edges_keeps_self_loops():
    g = make_graph([(0, 0), (1, 1), (0, 1)], 2)
    rng = np.random.default_rng(4)
    g2 = drop_edges(g, 0.999, rng)
    child = oracles.edge_set(g2.row_ptr, g2.col_idx)
    assert {(0, 0), (1, 1)} <= child


def test_drop_edges_binomial_concentration():
    # 1000 undirected pairs at p=0.5: kept count within 4 sigma of 500
    edges = [(i, 1000 + i) for i in range(1000)]
    g = make_graph(edges, 2000)
    rng = np.random.default_rng(5)
    g2 = drop_edges(g, 0.5, rng)
    kept_pairs = g2.nnz // 2
    sigma = np.sqrt(1000 * 0.25)
    assert abs(kept_pairs - 500) <= 4 * sigma


def test_drop_edges_validates_p():
    g = make_graph([(0, 1)], 2)
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigError):
        drop_edges(g, 1.0, rng)
    with pytest.raises(ConfigError):
        drop_edges(g, -0.1, rng)


# ----------------------------------------------------------- drop columns

def test_drop_feature_dims_p0():
    rng = np.random.default_rng(6)
    x = rng.random((5, 8), dtype=np.float32)
    out = drop_feature_dims(x, 0.0, rng)
    assert np.array_equal(out, x)


def test_drop_feature_dims_leaves_one_column():
    rng = np.random.default_rng(7)
    x = np.ones((4, 10), dtype=np.float32)
    out = drop_feature_dims(x, 0.95, rng)  # floor(0.95 * 10) = 9
    nonzero_cols = np.flatnonzero(np.abs(out).sum(axis=0))
    assert len(nonzero_cols) == 1


def test_drop_feature_dims_exact_count_and_bitwise_rest():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((6, 100)).astype(np.float32) + 1.0
    out = drop_feature_dims(x, 0.2, rng)
    zeroed = np.flatnonzero(np.abs(out).sum(axis=0) == 0)
    assert len(zeroed) == 20
    keep = np.setdiff1d(np.arange(100), zeroed)
    assert np.array_equal(out[:, keep], x[:, keep])
    assert not np.shares_memory(out, x)


def test_drop_feature_dims_validates_p():
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigError):
        drop_feature_dims(np.ones((2, 2), np.float32), 1.0, rng)
