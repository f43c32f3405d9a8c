"""GraphSage-style neighborhood sampling and mini-batch training.

Each hop draws min(fanout, degree) distinct neighbors per frontier node
uniformly without replacement and always includes a self loop, producing one
bipartite block per conv layer (rows = destinations, columns = local indices
into the sorted source frontier). Per-block symmetric normalization uses the
sampled degrees, so saturating fanouts reproduce the full-graph operator
exactly. Negatives shuffle features within the batch's input frontier, drawn
from the same corruption stream full-batch training uses.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass

import numpy as np

from .discriminate import (TrainConfig, TrainTrace, aggregate,
                           aggregate_backward, gd_loss)
from .encoder import (EncoderParams, ForwardCache, _act_backward,
                      _act_forward, _proj_backward, _proj_forward, init_params)
from .errors import ConfigError, IdRangeError, NumericError, ShapeError
from .graph_store import CsrGraph, row_normalize
from .tensor_ops import (AdamState, RngState, adam_step, csr_matmul_dense,
                         matmul)


@dataclass
class Block:
    """One sampled bipartite hop: edges from source frontier to destinations."""

    src_ids: np.ndarray          # global ids, strictly sorted
    dst_ids: np.ndarray          # global ids, row order of this block
    row_ptr: np.ndarray          # int64, per destination row
    col_idx: np.ndarray          # local indices into src_ids
    weights: np.ndarray | None = None
    t_row_ptr: np.ndarray | None = None   # transpose CSR for the backward pass
    t_col_idx: np.ndarray | None = None
    t_weights: np.ndarray | None = None

    @property
    def num_src(self) -> int:
        return len(self.src_ids)

    @property
    def num_dst(self) -> int:
        return len(self.dst_ids)


@dataclass
class BlockStack:
    """Blocks ordered input-to-output; blocks[-1] has the seed batch as rows."""

    blocks: list[Block]
    seeds: np.ndarray

    @property
    def input_ids(self) -> np.ndarray:
        return self.blocks[0].src_ids


def _gather_edges(g: CsrGraph, nodes: np.ndarray
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(row index into nodes, neighbor global id, counts) for all adjacency."""
    starts = g.row_ptr[nodes]
    counts = (g.row_ptr[nodes + 1] - starts).astype(np.int64)
    total = int(counts.sum())
    rows = np.repeat(np.arange(len(nodes), dtype=np.int64), counts)
    # flat indices: per-row arange offset to each row's CSR start
    prefix = np.concatenate([[0], np.cumsum(counts)[:-1]])
    flat = np.arange(total, dtype=np.int64) - np.repeat(prefix, counts) \
        + np.repeat(starts, counts)
    return rows, g.col_idx[flat], counts


def _sample_hop(g: CsrGraph, dst_ids: np.ndarray, fanout: int,
                rng: np.random.Generator) -> Block:
    rows, neigh, counts = _gather_edges(g, dst_ids)
    if len(rows):
        # uniform without replacement: keep the fanout smallest random keys
        # per row (rows stay grouped and random keys order each group)
        keys = rng.random(len(rows))
        order = np.lexsort((keys, rows))
        rows_s, neigh_s = rows[order], neigh[order]
        prefix = np.concatenate([[0], np.cumsum(counts)[:-1]])
        pos = np.arange(len(rows)) - np.repeat(prefix, counts)
        keep = pos < fanout
        rows_s, neigh_s = rows_s[keep], neigh_s[keep]
    else:
        rows_s = np.empty(0, dtype=np.int64)
        neigh_s = np.empty(0, dtype=np.int64)
    # self loops always included
    rows_all = np.concatenate([rows_s, np.arange(len(dst_ids), dtype=np.int64)])
    cols_global = np.concatenate([neigh_s, dst_ids])
    src_ids = np.unique(cols_global)
    cols_local = np.searchsorted(src_ids, cols_global)
    order = np.lexsort((cols_local, rows_all))
    rows_all, cols_local = rows_all[order], cols_local[order]
    if len(rows_all):
        keep = np.ones(len(rows_all), dtype=bool)
        keep[1:] = (rows_all[1:] != rows_all[:-1]) | \
                   (cols_local[1:] != cols_local[:-1])
        rows_all, cols_local = rows_all[keep], cols_local[keep]
    row_ptr = np.zeros(len(dst_ids) + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows_all, minlength=len(dst_ids)), out=row_ptr[1:])
    return Block(src_ids=src_ids, dst_ids=np.asarray(dst_ids, dtype=np.int64),
                 row_ptr=row_ptr, col_idx=cols_local)


def sample_blocks(g: CsrGraph, seeds: np.ndarray, fanouts: list[int],
                  rng: np.random.Generator) -> BlockStack:
    """One block per hop, sampled outward from the seed batch.

    fanouts[i] belongs to conv layer i; sampling walks from the seeds through
    the fanouts in reverse so blocks chain: src of block i+1 == dst of block i.
    """
    seeds = np.asarray(seeds, dtype=np.int64)
    if len(seeds) == 0:
        raise ConfigError("empty seed batch")
    if seeds.min() < 0 or seeds.max() >= g.num_nodes:
        raise IdRangeError("seed id out of range")
    if any(f < 1 for f in fanouts):
        raise ConfigError(f"fanouts must be >= 1, got {fanouts}")
    frontier = seeds
    reverse = []
    for fanout in reversed(fanouts):
        block = _sample_hop(g, frontier, int(fanout), rng)
        reverse.append(block)
        frontier = block.src_ids
    return BlockStack(blocks=reverse[::-1], seeds=seeds)


def block_sym_normalize(block: Block) -> None:
    """Weight sampled edge (i, j) by 1/sqrt(d_dst(i) * d_src(j)) in place.

    d_dst counts a destination's sampled in-edges (self loop included),
    d_src counts a source's appearances across the block; at saturation both
    equal the self-looped full-graph degrees. Also builds the transpose CSR
    used by the backward pass.
    """
    d_dst = np.diff(block.row_ptr).astype(np.float64)
    d_src = np.bincount(block.col_idx, minlength=block.num_src).astype(np.float64)
    if np.any(d_dst == 0) or np.any(d_src == 0):
        raise ShapeError("block has an isolated row or column")
    rows = np.repeat(np.arange(block.num_dst, dtype=np.int64),
                     np.diff(block.row_ptr))
    w = 1.0 / np.sqrt(d_dst[rows] * d_src[block.col_idx])
    block.weights = w
    order = np.lexsort((rows, block.col_idx))
    t_rows = block.col_idx[order]
    block.t_col_idx = rows[order]
    block.t_weights = w[order]
    t_row_ptr = np.zeros(block.num_src + 1, dtype=np.int64)
    np.cumsum(np.bincount(t_rows, minlength=block.num_src), out=t_row_ptr[1:])
    block.t_row_ptr = t_row_ptr


def _block_spmm(block: Block, m: np.ndarray) -> np.ndarray:
    if m.shape[0] != block.num_src:
        raise ShapeError(f"block spmm rows {m.shape[0]} vs {block.num_src}")
    return csr_matmul_dense(block.row_ptr, block.col_idx, block.weights, m,
                            block.num_dst)


def _block_spmm_t(block: Block, m: np.ndarray) -> np.ndarray:
    if m.shape[0] != block.num_dst:
        raise ShapeError(f"block spmm^T rows {m.shape[0]} vs {block.num_dst}")
    return csr_matmul_dense(block.t_row_ptr, block.t_col_idx, block.t_weights,
                            m, block.num_src)


def encode_forward_blocks(blocks: list[Block], z_in: np.ndarray,
                          params: EncoderParams
                          ) -> tuple[np.ndarray, ForwardCache]:
    """Forward pass through sampled blocks; mirrors the full-graph encoder."""
    if len(blocks) != len(params.conv):
        raise ShapeError(f"{len(blocks)} blocks for {len(params.conv)} conv layers")
    cache = ForwardCache(operator=blocks)
    h = z_in
    for block, layer in zip(blocks, params.conv):
        v = _block_spmm(block, h)
        p = matmul(v, layer.weight)
        h = _act_forward(p, params.activation, layer.slope)
        cache.conv_v.append(v)
        cache.conv_p.append(p)
        cache.conv_h.append(h)
    return _proj_forward(h, params, cache), cache


def encode_backward_blocks(grad_h: np.ndarray, cache: ForwardCache,
                           params: EncoderParams,
                           grads: dict | None = None) -> dict:
    """Backward through blocks; the adjoint of a block spmm is its transpose."""
    accumulate = grads is not None
    if grads is None:
        grads = {}
    grad = _proj_backward(grad_h, params, cache, grads, accumulate)
    blocks = cache.operator
    for i in reversed(range(len(params.conv))):
        layer = params.conv[i]
        p = cache.conv_p[i]
        gp, gs = _act_backward(grad, p, cache.conv_h[i], params.activation,
                               layer.slope)
        if params.activation == "prelu":
            val = np.array([gs], dtype=p.dtype)
            if accumulate:
                grads[f"conv{i}.slope"] += val
            else:
                grads[f"conv{i}.slope"] = val
        dw = matmul(cache.conv_v[i].T, gp)
        if accumulate:
            grads[f"conv{i}.weight"] += dw
        else:
            grads[f"conv{i}.weight"] = dw
        if i > 0:
            dv = matmul(gp, layer.weight.T)
            grad = _block_spmm_t(blocks[i], dv)
    return grads


def _batched(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


class _Prefetcher:
    """Single producer thread sampling ahead of the consumer.

    The sampling stream is owned by the producer and consumed strictly in
    batch order, so results are identical for any queue depth.
    """

    def __init__(self, make_batches, depth: int):
        self._queue = queue.Queue(maxsize=depth)
        self._thread = threading.Thread(
            target=self._run, args=(make_batches,), daemon=True)
        self._thread.start()

    def _run(self, make_batches):
        try:
            for item in make_batches():
                self._queue.put(item)
            self._queue.put(None)
        except BaseException as exc:   # surfaced on the consumer side
            self._queue.put(exc)

    def __iter__(self):
        while True:
            item = self._queue.get()
            if item is None:
                break
            if isinstance(item, BaseException):
                raise item
            yield item


def minibatch_train(g: CsrGraph, x: np.ndarray, cfg: TrainConfig,
                    batch_size: int, fanouts: list[int],
                    prefetch_depth: int = 0
                    ) -> tuple[EncoderParams, TrainTrace]:
    """Group-discrimination training over sampled blocks.

    Per batch: sample and normalize a block stack, gather the input
    frontier's features, shuffle them within the frontier for the negative
    branch, run the siamese encoder through the blocks, aggregate the seed
    rows, take the BCE over 2B samples, and apply one Adam step. The epoch
    loss is the batch-size-weighted mean. Augmentation is not defined for
    sampled blocks and must be disabled.
    """
    cfg.validate()
    if cfg.augment:
        raise ConfigError("augmentation is not supported with mini-batching")
    if batch_size < 2:
        raise ConfigError(f"batch_size must be >= 2, got {batch_size}")
    if len(fanouts) != cfg.num_conv:
        raise ConfigError(
            f"{len(fanouts)} fanouts for {cfg.num_conv} conv layers")
    if prefetch_depth < 0:
        raise ConfigError(f"prefetch_depth must be >= 0, got {prefetch_depth}")

    rng = RngState(cfg.seed)
    params = init_params(x.shape[1], cfg.hidden, cfg.num_conv, cfg.num_proj,
                         cfg.activation, rng.stream("init"),
                         linear_agg=cfg.aggregation == "linear")
    r_corrupt = rng.stream("corrupt")
    r_batch = rng.stream("batch_order")
    r_sample = rng.stream("sample")
    adam = {name: AdamState.for_param(p, cfg.lr) for name, p in params.named()}
    z = row_normalize(x)

    trace = TrainTrace()
    best_loss = np.inf
    best_params = None
    stale = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = r_batch.permutation(g.num_nodes)

        def batches(order=order):
            for seeds in _batched(order, batch_size):
                stack = sample_blocks(g, seeds, fanouts, r_sample)
                for block in stack.blocks:
                    block_sym_normalize(block)
                yield stack

        stacks = _Prefetcher(batches, prefetch_depth) if prefetch_depth \
            else batches()
        loss_sum = 0.0
        count = 0
        for stack in stacks:
            frontier = stack.input_ids
            z_pos = z[frontier]
            perm = r_corrupt.permutation(len(frontier))
            z_neg = z_pos[perm]
            h_pos, c_pos = encode_forward_blocks(stack.blocks, z_pos, params)
            h_neg, c_neg = encode_forward_blocks(stack.blocks, z_neg, params)
            lp = aggregate(h_pos, cfg.aggregation, params.agg_weight)
            ln = aggregate(h_neg, cfg.aggregation, params.agg_weight)
            loss, (gp, gn) = gd_loss(lp, ln)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss {loss} at epoch {epoch}")
            dh_pos, gw_pos = aggregate_backward(gp, h_pos, cfg.aggregation,
                                                params.agg_weight)
            dh_neg, gw_neg = aggregate_backward(gn, h_neg, cfg.aggregation,
                                                params.agg_weight)
            grads = encode_backward_blocks(dh_pos, c_pos, params)
            encode_backward_blocks(dh_neg, c_neg, params, grads)
            if params.agg_weight is not None:
                grads["agg.weight"] = gw_pos + gw_neg
            for name, p in params.named():
                adam_step(adam[name], p, grads[name])
            loss_sum += loss * len(stack.seeds)
            count += len(stack.seeds)
        epoch_loss = loss_sum / count
        trace.losses.append(epoch_loss)
        trace.seconds.append(time.perf_counter() - t0)
        if epoch_loss < best_loss:
            best_loss = epoch_loss
            trace.best_epoch = epoch
            stale = 0
            if cfg.patience is not None:
                best_params = params.copy()
        else:
            stale += 1
            if cfg.patience is not None and stale >= cfg.patience:
                break
    if cfg.patience is not None and best_params is not None:
        return best_params, trace
    return params, trace
