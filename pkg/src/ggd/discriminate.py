"""Group discrimination: per-node logits, the BCE objective, and training.

Each embedding row collapses to one scalar logit; the positive group (true
topology) is labeled 1, the corrupted group 0, and a single binary
cross-entropy over all 2N samples replaces any pairwise contrast. One epoch
is one full-batch Adam step, so the per-epoch cost is linear in the node
count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .encoder import EncoderParams, encode_backward, encode_forward, init_params
from .errors import ConfigError, NumericError, ShapeError
from .graph_store import CsrGraph, add_self_loops, row_normalize, sym_normalize
from .perturb import drop_edges, drop_feature_dims, shuffle_features
from .tensor_ops import (AdamState, RngState, adam_step, bce_with_logits,
                         matmul)

AGGREGATIONS = ("sum", "mean", "min", "max", "linear")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for full-batch training."""

    lr: float = 1e-3
    epochs: int = 500
    patience: int | None = 20
    hidden: int = 512
    num_conv: int = 1
    num_proj: int = 1
    aggregation: str = "sum"
    activation: str = "prelu"
    seed: int = 0
    augment: bool = False
    drop_edge_p: float = 0.2
    drop_feat_p: float = 0.2

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.patience is not None and self.patience < 1:
            raise ConfigError(f"patience must be >= 1 or none, got {self.patience}")
        if self.hidden < 1:
            raise ConfigError(f"hidden must be >= 1, got {self.hidden}")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(f"unknown aggregation {self.aggregation!r}")
        if self.activation not in ("prelu", "relu", "lrelu"):
            raise ConfigError(f"unknown activation {self.activation!r}")


@dataclass
class TrainTrace:
    """Per-epoch loss and wall-clock history."""

    losses: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = 0

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,loss,seconds\n")
            for i, (l, s) in enumerate(zip(self.losses, self.seconds)):
                fh.write(f"{i},{l:.10g},{s:.6g}\n")


def aggregate(h: np.ndarray, mode: str,
              linear_w: np.ndarray | None = None) -> np.ndarray:
    """Collapse each embedding row to a scalar logit."""
    if mode == "sum":
        out = h.sum(axis=1, dtype=np.float64)
    elif mode == "mean":
        out = h.mean(axis=1, dtype=np.float64)
    elif mode == "min":
        return np.min(h, axis=1)
    elif mode == "max":
        return np.max(h, axis=1)
    elif mode == "linear":
        if linear_w is None:
            raise ConfigError("linear aggregation requires a weight vector")
        return matmul(h, linear_w.reshape(-1, 1)).reshape(-1)
    else:
        raise ConfigError(f"unknown aggregation {mode!r}")
    return out if h.dtype == np.float64 else out.astype(np.float32)


def aggregate_backward(grad: np.ndarray, h: np.ndarray, mode: str,
                       linear_w: np.ndarray | None = None
                       ) -> tuple[np.ndarray, np.ndarray | None]:
    """Gradient w.r.t. H (and the linear weight when applicable).

    min/max route each row's gradient to the first occurrence of the
    extremum, matching np.argmin/np.argmax tie-breaking.
    """
    if grad.shape != (h.shape[0],):
        raise ShapeError(f"aggregate grad shape {grad.shape} vs {h.shape}")
    if mode == "sum":
        return np.broadcast_to(grad[:, None], h.shape).astype(h.dtype, copy=True), None
    if mode == "mean":
        gh = np.broadcast_to(grad[:, None] / h.dtype.type(h.shape[1]), h.shape)
        return gh.astype(h.dtype, copy=True), None
    if mode in ("min", "max"):
        idx = np.argmin(h, axis=1) if mode == "min" else np.argmax(h, axis=1)
        gh = np.zeros_like(h)
        gh[np.arange(h.shape[0]), idx] = grad
        return gh, None
    if mode == "linear":
        gh = np.outer(grad, linear_w).astype(h.dtype)
        gw = matmul(h.T, grad.reshape(-1, 1)).reshape(-1)
        return gh, gw
    raise ConfigError(f"unknown aggregation {mode!r}")


def gd_loss(logits_pos: np.ndarray,
            logits_neg: np.ndarray) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """BCE over the concatenated groups, targets 1^N ++ 0^N, mean over 2N."""
    n = len(logits_pos)
    if n != len(logits_neg):
        raise ShapeError("group sizes differ")
    logits = np.concatenate([logits_pos, logits_neg])
    targets = np.concatenate([np.ones(n), np.zeros(n)]).astype(logits.dtype)
    loss, grad = bce_with_logits(logits, targets)
    return loss, (grad[:n], grad[n:])


def loss_and_grads(g_norm: CsrGraph, z_pos: np.ndarray, z_neg: np.ndarray,
                   params: EncoderParams, aggregation: str,
                   logit_scale: float = 1.0) -> tuple[float, dict]:
    """One siamese forward/backward; gradients summed positive then negative."""
    h_pos, cache_pos = encode_forward(g_norm, z_pos, params)
    h_neg, cache_neg = encode_forward(g_norm, z_neg, params)
    lp = aggregate(h_pos, aggregation, params.agg_weight) * logit_scale
    ln = aggregate(h_neg, aggregation, params.agg_weight) * logit_scale
    loss, (gp, gn) = gd_loss(lp, ln)
    gp = gp * logit_scale
    gn = gn * logit_scale
    dh_pos, gw_pos = aggregate_backward(gp, h_pos, aggregation, params.agg_weight)
    dh_neg, gw_neg = aggregate_backward(gn, h_neg, aggregation, params.agg_weight)
    grads = encode_backward(dh_pos, cache_pos, params)
    encode_backward(dh_neg, cache_neg, params, grads)
    if params.agg_weight is not None:
        grads["agg.weight"] = gw_pos + gw_neg
    return loss, grads


def _grad_norms(grads: dict) -> dict:
    return {k: float(np.linalg.norm(v)) for k, v in grads.items()}


def _train_impl(g: CsrGraph, x: np.ndarray, cfg: TrainConfig,
                logit_scale: float) -> tuple[EncoderParams, TrainTrace]:
    cfg.validate()
    rng = RngState(cfg.seed)
    params = init_params(x.shape[1], cfg.hidden, cfg.num_conv, cfg.num_proj,
                         cfg.activation, rng.stream("init"),
                         linear_agg=cfg.aggregation == "linear")
    r_corrupt = rng.stream("corrupt")
    r_edges = rng.stream("aug_edges")
    r_feats = rng.stream("aug_feats")
    adam = {name: AdamState.for_param(p, cfg.lr) for name, p in params.named()}

    if not cfg.augment:
        g_norm = sym_normalize(add_self_loops(g))
        z = row_normalize(x)

    trace = TrainTrace()
    best_loss = np.inf
    best_params = None
    stale = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        if cfg.augment:
            g_epoch = sym_normalize(add_self_loops(
                drop_edges(g, cfg.drop_edge_p, r_edges)))
            z_epoch = row_normalize(drop_feature_dims(x, cfg.drop_feat_p,
                                                      r_feats))
        else:
            g_epoch, z_epoch = g_norm, z
        z_neg, _ = shuffle_features(z_epoch, r_corrupt)
        loss, grads = loss_and_grads(g_epoch, z_epoch, z_neg, params,
                                     cfg.aggregation, logit_scale)
        if not np.isfinite(loss):
            raise NumericError(
                f"non-finite loss {loss} at epoch {epoch}; "
                f"grad norms {_grad_norms(grads)}")
        for name, p in params.named():
            adam_step(adam[name], p, grads[name])
        trace.losses.append(loss)
        trace.seconds.append(time.perf_counter() - t0)
        if loss < best_loss:
            best_loss = loss
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


def train(g: CsrGraph, x: np.ndarray,
          cfg: TrainConfig) -> tuple[EncoderParams, TrainTrace]:
    """Full-batch group-discrimination training.

    Per epoch: optional augmentation, corruption by row shuffle, siamese
    forward, per-row aggregation to logits, BCE over 2N samples, one Adam
    step. With patience set, returns the parameters of the best-loss epoch;
    otherwise the final parameters.
    """
    return _train_impl(g, x, cfg, logit_scale=1.0)


def train_dgi_constant_summary(g: CsrGraph, x: np.ndarray, cfg: TrainConfig,
                               epsilon: float) -> tuple[EncoderParams, TrainTrace]:
    """Training with logits epsilon * sum(h_i): the constant-summary probe.

    This is the pairwise objective with its summary vector frozen to
    epsilon * 1, exposing that the summary contributes nothing: epsilon = 0
    pins every logit at 0 (loss ln 2, zero gradients, parameters never move)
    and any epsilon > 0 trains essentially identically to sum aggregation.
    """
    if epsilon < 0:
        raise ConfigError(f"epsilon must be >= 0, got {epsilon}")
    cfg_sum = replace(cfg, aggregation="sum")
    return _train_impl(g, x, cfg_sum, logit_scale=float(epsilon))
