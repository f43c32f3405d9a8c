import numpy as np
import pytest

import oracles
from conftest import make_graph, random_connected_graph
from ggd import ConfigError, RngState, TrainConfig, minibatch_train, train
from ggd.probe import sbm_generate
from ggd.sampler import block_sym_normalize, sample_blocks


def star(num_leaves=5):
    return make_graph([(0, i) for i in range(1, num_leaves + 1)],
                      num_leaves + 1)


# --------------------------------------------------------------- sampling

def test_saturating_fanout_covers_khop_neighborhood():
    rng = np.random.default_rng(0)
    g = random_connected_graph(40, 50, rng)
    seeds = np.array([3, 17, 29])
    stack = sample_blocks(g, seeds, [64, 64], RngState(1).stream("sample"))
    got = set(stack.input_ids.tolist())
    ref = oracles.khop_neighborhood(g.row_ptr, g.col_idx, seeds, 2)
    assert got == ref


def test_star_center_fanout_one():
    stack = sample_blocks(star(), np.array([0]), [1],
                          RngState(2).stream("sample"))
    blk = stack.blocks[0]
    assert np.array_equal(blk.dst_ids, [0])
    row = blk.src_ids[blk.col_idx[blk.row_ptr[0]:blk.row_ptr[1]]]
    non_self = [v for v in row.tolist() if v != 0]
    assert len(non_self) == 1  # exactly one sampled leaf
    assert 0 in row.tolist()   # self edge always present


def test_sampled_edges_exist_in_parent():
    rng = np.random.default_rng(3)
    g = random_connected_graph(60, 120, rng)
    parent = oracles.edge_set(g.row_ptr, g.col_idx)
    parent |= {(i, i) for i in range(60)}
    stack = sample_blocks(g, np.arange(0, 60, 7), [3, 3],
                          RngState(4).stream("sample"))
    for blk in stack.blocks:
        for d in range(blk.num_dst):
            dst = int(blk.dst_ids[d])
            for e in range(int(blk.row_ptr[d]), int(blk.row_ptr[d + 1])):
                src = int(blk.src_ids[blk.col_idx[e]])
                assert (dst, src) in parent


def test_fanout_bounds_and_no_replacement():
    rng = np.random.default_rng(5)
    g = random_connected_graph(50, 200, rng)
    stack = sample_blocks(g, np.arange(10), [4], RngState(6).stream("sample"))
    blk = stack.blocks[0]
    for d in range(blk.num_dst):
        cols = blk.col_idx[blk.row_ptr[d]:blk.row_ptr[d + 1]]
        ids = blk.src_ids[cols].tolist()
        non_self = [v for v in ids if v != int(blk.dst_ids[d])]
        assert len(non_self) <= 4
        assert len(set(ids)) == len(ids)  # without replacement


def test_dst_subset_of_src_and_seeds_last():
    rng = np.random.default_rng(7)
    g = random_connected_graph(30, 40, rng)
    seeds = np.array([1, 5, 9])
    stack = sample_blocks(g, seeds, [2, 2], RngState(8).stream("sample"))
    assert np.array_equal(stack.blocks[-1].dst_ids, seeds)
    for blk in stack.blocks:
        assert set(blk.dst_ids.tolist()) <= set(blk.src_ids.tolist())
    # blocks chain: earlier block feeds the later one
    assert set(stack.blocks[1].src_ids.tolist()) == \
        set(stack.blocks[0].dst_ids.tolist())


def test_sampling_reproducible():
    rng = np.random.default_rng(9)
    g = random_connected_graph(25, 30, rng)
    s1 = sample_blocks(g, np.array([0, 4]), [3, 3],
                       RngState(10).stream("sample"))
    s2 = sample_blocks(g, np.array([0, 4]), [3, 3],
                       RngState(10).stream("sample"))
    for b1, b2 in zip(s1.blocks, s2.blocks):
        assert np.array_equal(b1.src_ids, b2.src_ids)
        assert np.array_equal(b1.dst_ids, b2.dst_ids)
        assert np.array_equal(b1.row_ptr, b2.row_ptr)
        assert np.array_equal(b1.col_idx, b2.col_idx)


def test_block_normalize_uses_sampled_degrees():
    stack = sample_blocks(star(3), np.array([0]), [3],
                          RngState(11).stream("sample"))
    blk = stack.blocks[0]
    block_sym_normalize(blk)
    # saturated star center: row degree 4 (3 leaves + self); leaf cols have
    # in-block degree 1 except the center itself
    w = blk.weights
    assert np.all(np.isfinite(w)) and np.all(w > 0)
    assert len(w) == blk.row_ptr[-1]


# -------------------------------------------------------- minibatch train

def test_single_saturating_batch_equals_full_batch():
    rng = RngState(12)
    g, x, _ = sbm_generate(400, 4, 0.05, 0.005, 12, 0.3, rng.stream("sbm"))
    cfg = TrainConfig(hidden=16, epochs=1, patience=None, seed=5, num_conv=2)
    _, tr_full = train(g, x, cfg)
    p_mb, tr_mb = minibatch_train(g, x, cfg, batch_size=g.num_nodes,
                                  fanouts=[g.num_nodes, g.num_nodes])
    rel = abs(tr_mb.losses[0] - tr_full.losses[0]) / abs(tr_full.losses[0])
    assert rel <= 1e-9
    assert len(tr_mb.losses) == 1  # one batch, one epoch, one step


def test_prefetch_depth_does_not_change_results():
    rng = RngState(13)
    g, x, _ = sbm_generate(300, 3, 0.06, 0.006, 10, 0.3, rng.stream("sbm"))
    cfg = TrainConfig(hidden=8, epochs=3, patience=None, seed=6)
    p0, t0 = minibatch_train(g, x, cfg, batch_size=64, fanouts=[8])
    p2, t2 = minibatch_train(g, x, cfg, batch_size=64, fanouts=[8],
                             prefetch_depth=2)
    assert t0.losses == t2.losses
    for (_, a), (_, b) in zip(p0.named(), p2.named()):
        assert np.array_equal(a, b)


def test_minibatch_reduces_loss():
    rng = RngState(14)
    g, x, _ = sbm_generate(400, 4, 0.05, 0.005, 12, 0.3, rng.stream("sbm"))
    cfg = TrainConfig(hidden=16, epochs=20, patience=None, seed=7)
    _, trace = minibatch_train(g, x, cfg, batch_size=128, fanouts=[10])
    assert trace.losses[-1] < trace.losses[0]


def test_minibatch_validation():
    rng = RngState(15)
    g, x, _ = sbm_generate(100, 2, 0.1, 0.01, 8, 0.2, rng.stream("sbm"))
    with pytest.raises(ConfigError):
        minibatch_train(g, x, TrainConfig(augment=True), 32, [8])
    with pytest.raises(ConfigError):
        minibatch_train(g, x, TrainConfig(), 1, [8])
    with pytest.raises(ConfigError):
        minibatch_train(g, x, TrainConfig(num_conv=2), 32, [8])  # wrong arity
    with pytest.raises(ConfigError):
        minibatch_train(g, x, TrainConfig(), 32, [8], prefetch_depth=-1)
