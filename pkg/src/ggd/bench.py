"""Scaling benchmark: per-epoch GD cost versus a pairwise-contrast pass.

The GD side times real training epochs (lean config: one conv layer, no
projector, sum aggregation) at a fixed average degree, so cost grows with
the node count. The reference side times one full N x N dot-product
InfoNCE-style pass over embeddings of the same width: similarity matrix,
row-softmax cross-entropy against the diagonal, and the gradient w.r.t. the
embeddings, with no parameter updates. Including the backward mirrors what
one training epoch of a pairwise method must pay per epoch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .discriminate import TrainConfig, train
from .probe import random_graph


@dataclass(frozen=True)
class BenchConfig:
    sizes: tuple[int, ...] = (1024, 2048, 4096, 8192)
    hidden: int = 256
    feat_dim: int = 16
    avg_degree: float = 8.0
    epochs: int = 4            # first epoch discarded as warm-up
    seed: int = 0


def _bench_train_config(cfg: BenchConfig) -> TrainConfig:
    return TrainConfig(lr=1e-3, epochs=cfg.epochs, patience=None,
                       hidden=cfg.hidden, num_conv=1, num_proj=0,
                       aggregation="sum", activation="prelu", seed=cfg.seed)


def time_gd_epoch(n: int, cfg: BenchConfig) -> float:
    """Median steady-state seconds per full-batch GD epoch at size n."""
    rng = np.random.Generator(np.random.Philox(key=cfg.seed + n))
    g = random_graph(n, cfg.avg_degree, rng)
    x = rng.random((n, cfg.feat_dim), dtype=np.float64).astype(np.float32)
    _, trace = train(g, x, _bench_train_config(cfg))
    return float(np.median(trace.seconds[1:]))


def pairwise_reference_pass(h: np.ndarray) -> tuple[float, np.ndarray]:
    """One N x N InfoNCE-style forward and embedding gradient.

    loss = mean_i [logsumexp_j(h_i . h_j) - h_i . h_i]; returns the loss and
    d loss / d h. Cost is dominated by three N x N x D products plus N^2
    exponentials, quadratic in N by construction.
    """
    hd = h.astype(np.float64)
    n = hd.shape[0]
    sim = hd @ hd.T
    mx = sim.max(axis=1, keepdims=True)
    e = np.exp(sim - mx)
    denom = e.sum(axis=1, keepdims=True)
    loss = float(np.mean(np.log(denom) + mx[:, 0] - np.diag(sim)))
    p = e / denom
    np.fill_diagonal(p, p.diagonal() - 1.0)
    p /= n
    grad = p @ hd + p.T @ hd
    return loss, grad.astype(h.dtype)


def time_pairwise_pass(n: int, cfg: BenchConfig) -> float:
    rng = np.random.Generator(np.random.Philox(key=cfg.seed + 7 * n + 1))
    h = rng.standard_normal((n, cfg.hidden)).astype(np.float32)
    pairwise_reference_pass(h[: min(n, 256)])   # warm-up at small size
    times = []
    for _ in range(2):
        t0 = time.perf_counter()
        pairwise_reference_pass(h)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def fit_loglog(sizes, seconds) -> tuple[float, float]:
    """Least-squares slope and R^2 of log(seconds) against log(size)."""
    lx = np.log(np.asarray(sizes, dtype=np.float64))
    ly = np.log(np.asarray(seconds, dtype=np.float64))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    total = ly - ly.mean()
    r2 = 1.0 - float(resid @ resid) / float(total @ total)
    return float(slope), r2


def scaling_report(cfg: BenchConfig = BenchConfig()) -> dict:
    """Time both sides across cfg.sizes and fit log-log slopes."""
    rows = []
    for n in cfg.sizes:
        rows.append({
            "nodes": n,
            "gd_epoch_seconds": time_gd_epoch(n, cfg),
            "pairwise_pass_seconds": time_pairwise_pass(n, cfg),
        })
    gd_slope, gd_r2 = fit_loglog([r["nodes"] for r in rows],
                                 [r["gd_epoch_seconds"] for r in rows])
    pw_slope, pw_r2 = fit_loglog([r["nodes"] for r in rows],
                                 [r["pairwise_pass_seconds"] for r in rows])
    return {
        "rows": rows,
        "gd_slope": gd_slope, "gd_r2": gd_r2,
        "pairwise_slope": pw_slope, "pairwise_r2": pw_r2,
        "config": cfg,
    }
