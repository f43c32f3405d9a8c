import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import make_graph, random_connected_graph
from ggd import RngState, ShapeError
from ggd.graph_store import add_self_loops, sym_normalize
from ggd.tensor_ops import (
    AdamState,
    adam_step,
    add,
    bce_with_logits,
    csr_matmul_dense,
    csr_row_sums,
    matmul,
    prelu,
    prelu_backward,
    scale,
    sigmoid,
    transpose,
    xavier_uniform,
)


# ---------------------------------------------------------------- RngState

def test_rng_streams_are_independent():
    r = RngState(123)
    a1 = r.stream("init").random(8)
    # drawing from another stream must not shift the first one
    r.stream("corrupt").random(1000)
    a2 = RngState(123).stream("init").random(8)
    assert np.array_equal(a1, a2)


def test_rng_stream_reproducible_across_instances():
    a = RngState(7).stream("init").random(16)
    b = RngState(7).stream("init").random(16)
    assert np.array_equal(a, b)
    c = RngState(8).stream("init").random(16)
    assert not np.array_equal(a, c)


def test_rng_seed_range_checked():
    with pytest.raises(ValueError):
        RngState(-1)
    with pytest.raises(ValueError):
        RngState(2 ** 64)
    RngState(2 ** 64 - 1)  # boundary accepted


# ---------------------------------------------------------------- xavier

def test_xavier_fan_3_3_bound_is_one():
    w = xavier_uniform(3, 3, RngState(0).stream("init"))
    assert w.shape == (3, 3)
    assert np.abs(w).max() < 1.0  # a = sqrt(6/6) = 1


def test_xavier_cora_dims_bound():
    # fan_in 1433, fan_out 512 -> a = sqrt(6/1945)
    a = math.sqrt(6.0 / 1945.0)
    assert abs(a - 0.05554) < 5e-5
    w = xavier_uniform(1433, 512, RngState(0).stream("init"))
    assert np.abs(w).max() < a
    assert np.abs(w).max() > 0.95 * a  # the bound is actually approached


def test_xavier_sample_std_matches_uniform_moment():
    w = xavier_uniform(100, 100, RngState(3).stream("init"))
    a = math.sqrt(6.0 / 200.0)
    expected = a / math.sqrt(3.0)
    assert abs(float(w.std()) - expected) < 0.10 * expected


def test_xavier_bitwise_reproducible():
    w1 = xavier_uniform(17, 5, RngState(42).stream("init"))
    w2 = xavier_uniform(17, 5, RngState(42).stream("init"))
    assert np.array_equal(w1, w2)


def test_xavier_rejects_bad_fans():
    with pytest.raises(ShapeError):
        xavier_uniform(0, 3, RngState(0).stream("init"))


# ---------------------------------------------------------------- matmul

def test_matmul_identity():
    rng = np.random.default_rng(0)
    m = rng.random((3, 4), dtype=np.float32)
    assert np.allclose(matmul(np.eye(3, dtype=np.float32), m), m)


def test_matmul_matches_triple_loop_oracle():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((17, 13)).astype(np.float32)
    b = rng.standard_normal((13, 5)).astype(np.float32)
    ref = oracles.naive_matmul(a, b)
    assert oracles.max_rel_err(matmul(a, b), ref) <= 1e-5


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        matmul(np.zeros((2, 3), np.float32), np.zeros((4, 2), np.float32))


def test_matmul_dtype_rules():
    a32 = np.ones((2, 2), np.float32)
    a64 = np.ones((2, 2), np.float64)
    assert matmul(a32, a32).dtype == np.float32
    assert matmul(a64, a32).dtype == np.float64
    assert matmul(a32, a64).dtype == np.float64


def test_add_scale_transpose():
    rng = np.random.default_rng(1)
    m = rng.random((4, 3), dtype=np.float32)
    assert np.all(add(m, -m) == 0)
    assert np.allclose(scale(m, 2.0), 2 * m)
    t = transpose(m)
    assert t.shape == (3, 4) and t.flags.c_contiguous
    with pytest.raises(ShapeError):
        add(m, m.T)


# ---------------------------------------------------------------- spmm

def test_spmm_identity_operator():
    n = 6
    g = add_self_loops(make_graph([], n))
    gn = sym_normalize(g)  # isolated nodes + self loop -> weight 1
    rng = np.random.default_rng(2)
    m = rng.random((n, 3), dtype=np.float32)
    out = csr_matmul_dense(gn.row_ptr, gn.col_idx, gn.weights, m, n)
    assert np.allclose(out, m, atol=1e-7)


def test_spmm_constant_vector_eigen():
    # K3 with self loops, normalized: rows sum to 1, so [3,3,3] is fixed
    g = sym_normalize(add_self_loops(make_graph([(0, 1), (1, 2), (0, 2)], 3)))
    v = np.full((3, 1), 3.0, dtype=np.float32)
    out = csr_matmul_dense(g.row_ptr, g.col_idx, g.weights, v, 3)
    assert np.allclose(out, v, atol=1e-6)


def test_spmm_matches_dense_oracle_many_trials():
    """Spec invariant: >= 100 seeded trials, graphs <= 64 nodes, <= 16 dims."""
    worst = 0.0
    for trial in range(100):
        rng = np.random.default_rng(1000 + trial)
        n = int(rng.integers(2, 65))
        d = int(rng.integers(1, 17))
        g = sym_normalize(add_self_loops(
            random_connected_graph(n, int(rng.integers(0, 3 * n)), rng)))
        m = rng.standard_normal((n, d)).astype(np.float32)
        dense = oracles.dense_from_csr(g.row_ptr, g.col_idx, g.weights, n, n)
        ref = dense @ m.astype(np.float64)
        got = csr_matmul_dense(g.row_ptr, g.col_idx, g.weights, m, n)
        worst = max(worst, oracles.max_rel_err(got, ref))
    assert worst <= 1e-5


def test_spmm_rectangular_block_shape():
    # 2 dst rows gathering from 4 src rows
    row_ptr = np.array([0, 2, 3], dtype=np.int64)
    col_idx = np.array([0, 3, 1], dtype=np.int64)
    w = np.array([0.5, 2.0, 1.0], dtype=np.float64)
    m = np.arange(8, dtype=np.float32).reshape(4, 2)
    got = csr_matmul_dense(row_ptr, col_idx, w, m, 2)
    ref = oracles.dense_from_csr(row_ptr, col_idx, w, 2, 4) @ m.astype(np.float64)
    assert np.allclose(got, ref)


def test_csr_row_sums_with_empty_rows():
    row_ptr = np.array([0, 2, 2, 3], dtype=np.int64)
    vals = np.array([1.5, 2.5, -1.0])
    out = csr_row_sums(row_ptr, vals, 3)
    assert np.allclose(out, [4.0, 0.0, -1.0])


# ---------------------------------------------------------------- prelu

def test_prelu_relu_and_identity_slopes():
    x = np.array([-1.0, 2.0], dtype=np.float32)
    assert np.array_equal(prelu(x, 0.0), np.array([0.0, 2.0], np.float32))
    assert np.array_equal(prelu(x, 1.0), x)


def test_prelu_gradients_match_fd():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((5, 4))  # f64 so FD is clean
    g = rng.standard_normal((5, 4))
    slope = 0.25
    gx, gslope = prelu_backward(g, x, slope)
    fd_x = oracles.central_fd(lambda v: float((prelu(v, slope) * g).sum()), x)
    assert oracles.max_rel_err(gx, fd_x) <= 1e-4
    fd_s = oracles.central_fd(
        lambda s: float((prelu(x, float(s[0])) * g).sum()),
        np.array([slope]))
    assert abs(gslope - fd_s[0]) <= 1e-4 * max(1.0, abs(fd_s[0]))


def test_prelu_backward_shape_check():
    with pytest.raises(ShapeError):
        prelu_backward(np.zeros((2, 2)), np.zeros((3, 2)), 0.25)


# ---------------------------------------------------------------- sigmoid

def test_sigmoid_matches_reference_and_is_stable():
    x = np.array([-1000.0, -5.0, 0.0, 5.0, 1000.0])
    out = sigmoid(x)
    assert np.all(np.isfinite(out))
    assert out[2] == 0.5
    assert np.allclose(out[1:4], 1 / (1 + np.exp(-x[1:4])))
    assert out[0] == 0.0 and out[4] == 1.0


# ---------------------------------------------------------------- bce

def test_bce_zero_logit_is_ln2():
    loss, grad = bce_with_logits(np.array([0.0], np.float32),
                                 np.array([1.0], np.float32))
    assert abs(loss - math.log(2.0)) < 1e-12
    assert np.allclose(grad, [-0.5])


def test_bce_saturated_positive():
    loss, _ = bce_with_logits(np.array([50.0], np.float32),
                              np.array([1.0], np.float32))
    assert loss < 1e-20


def test_bce_matches_arbitrary_precision_oracle():
    rng = np.random.default_rng(4)
    logits = (rng.standard_normal(64) * 3).astype(np.float32)
    targets = rng.integers(0, 2, 64).astype(np.float32)
    loss, grad = bce_with_logits(logits, targets)
    ref_loss, ref_grad = oracles.bce_mpmath(logits, targets)
    assert abs(loss - ref_loss) <= 1e-6 * max(1.0, abs(ref_loss))
    assert oracles.max_rel_err(grad, ref_grad) <= 1e-6


@settings(deadline=None, max_examples=40)
@given(st.lists(st.floats(min_value=-1e4, max_value=1e4), min_size=1,
                max_size=8),
       st.integers(min_value=0, max_value=255))
def test_bce_finite_over_wide_logit_range(vals, ybits):
    logits = np.array(vals, dtype=np.float64)
    targets = np.array([(ybits >> i) & 1 for i in range(len(vals))],
                       dtype=np.float64)
    loss, grad = bce_with_logits(logits, targets)
    assert math.isfinite(loss)
    assert np.all(np.isfinite(grad))


def test_bce_shape_check():
    with pytest.raises(ShapeError):
        bce_with_logits(np.zeros(3, np.float32), np.zeros(4, np.float32))


# ---------------------------------------------------------------- adam

def test_adam_first_step_magnitude_near_lr():
    p = np.array([10.0])
    st_ = AdamState.for_param(p, lr=1e-3)
    adam_step(st_, p, np.array([123.456]))
    # bias-corrected first step is lr * g / (|g| + ~0)
    assert abs((10.0 - p[0]) - 1e-3) < 1e-9


def test_adam_zero_grad_is_noop_but_counts():
    p = np.array([1.0, -2.0], dtype=np.float32)
    st_ = AdamState.for_param(p, lr=0.1)
    adam_step(st_, p, np.zeros(2, np.float32))
    assert np.array_equal(p, np.array([1.0, -2.0], np.float32))
    assert st_.t == 1


def test_adam_three_steps_match_hand_recurrence():
    grads = [0.3, -1.2, 0.05]
    p = np.array([0.7])
    st_ = AdamState.for_param(p, lr=0.01)
    got = []
    for g in grads:
        adam_step(st_, p, np.array([g]))
        got.append(float(p[0]))
    ref = oracles.adam_scalar_reference(0.7, grads, lr=0.01)
    assert np.allclose(got, ref, atol=1e-10)


def test_adam_preserves_dtype():
    p = np.ones(3, np.float32)
    st_ = AdamState.for_param(p, lr=0.1)
    adam_step(st_, p, np.full(3, 0.5, np.float32))
    assert p.dtype == np.float32


def test_adam_shape_check():
    p = np.ones(3)
    st_ = AdamState.for_param(p, lr=0.1)
    with pytest.raises(ShapeError):
        adam_step(st_, p, np.ones(4))
