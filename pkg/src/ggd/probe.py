"""Evaluation probe, collapse diagnostics, and synthetic fixtures.

The probe is a multinomial logistic regression trained full-batch with Adam
from zero init, deterministic given its config. summary_stats reproduces the
constant-summary analysis: one conv layer at init, column-mean summary s,
and statistics of sigma(s).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncoderParams, init_params
from .errors import ConfigError, ShapeError
from .graph_store import (CsrGraph, LabeledSplit, add_self_loops, build_csr,
                          row_normalize, sym_normalize)
from .inference import EmbeddingSet
from .tensor_ops import (AdamState, adam_step, csr_matmul_dense, matmul,
                         prelu, sigmoid)


@dataclass(frozen=True)
class ProbeConfig:
    lr: float = 1e-2
    epochs: int = 1000
    l2: float = 1e-5
    seed: int = 0

    def validate(self) -> None:
        if self.lr <= 0 or self.epochs < 1 or self.l2 < 0:
            raise ConfigError(f"bad probe config {self}")


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def logistic_probe(h, split: LabeledSplit,
                   cfg: ProbeConfig = ProbeConfig()) -> dict[str, float]:
    """Train a softmax readout on the train split; report split accuracies.

    Inputs are divided by the mean L2 norm of the training rows, so the
    readout sees the same problem whatever scale the embeddings arrive at.
    Weights start at zero (the objective is convex, so no random init is
    needed) and train full-batch with Adam in float64; L2 applies to the
    weight matrix only. Accuracy is argmax agreement, first index on ties.
    """
    cfg.validate()
    x = np.asarray(h.h if isinstance(h, EmbeddingSet) else h, dtype=np.float64)
    split.validate(x.shape[0])
    for name in ("train", "val", "test"):
        if len(getattr(split, name)) == 0:
            raise ShapeError(f"empty {name} split")
    scale = float(np.mean(np.linalg.norm(x[split.train], axis=1)))
    if scale > 0:
        x = x / scale
    num_classes = split.num_classes
    xtr = x[split.train]
    ytr = split.labels[split.train]
    onehot = np.zeros((len(ytr), num_classes))
    onehot[np.arange(len(ytr)), ytr] = 1.0

    w = np.zeros((x.shape[1], num_classes))
    b = np.zeros(num_classes)
    st_w = AdamState.for_param(w, cfg.lr)
    st_b = AdamState.for_param(b, cfg.lr)
    n = len(ytr)
    for _ in range(cfg.epochs):
        p = _softmax(xtr @ w + b)
        delta = (p - onehot) / n
        gw = xtr.T @ delta + 2.0 * cfg.l2 * w
        gb = delta.sum(axis=0)
        adam_step(st_w, w, gw)
        adam_step(st_b, b, gb)

    out = {}
    for name in ("train", "val", "test"):
        idx = getattr(split, name)
        pred = np.argmax(x[idx] @ w + b, axis=1)
        out[name] = float(np.mean(pred == split.labels[idx]))
    return out


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    std: float
    range: float


def summary_stats(g: CsrGraph, x: np.ndarray, params: EncoderParams,
                  activation: str, outer: str = "sigmoid") -> SummaryStats:
    """Statistics of the summary vector from one conv layer, no projector.

    s is the column mean of H = act(spmm(g_norm, Z) @ W0); with
    outer="sigmoid" the statistics are taken over sigma(s), which is how the
    constant-summary pathology is usually (mis)read as a healthy signal.
    """
    if outer not in ("none", "sigmoid"):
        raise ConfigError(f"unknown outer {outer!r}")
    g_norm = sym_normalize(add_self_loops(g))
    z = row_normalize(x)
    v = csr_matmul_dense(g_norm.row_ptr, g_norm.col_idx, g_norm.weights, z,
                         g_norm.num_nodes)
    p = matmul(v, params.conv[0].weight)
    if activation == "sigmoid":
        h = sigmoid(p)
    elif activation == "prelu":
        h = prelu(p, float(params.conv[0].slope[0]))
    elif activation == "relu":
        h = prelu(p, 0.0)
    elif activation == "lrelu":
        h = prelu(p, 0.01)
    else:
        raise ConfigError(f"unknown activation {activation!r}")
    s = h.mean(axis=0, dtype=np.float64)
    if outer == "sigmoid":
        s = sigmoid(s)
    return SummaryStats(mean=float(s.mean()), std=float(s.std()),
                        range=float(s.max() - s.min()))


def summary_params(in_dim: int, hidden: int, activation: str,
                   rng: np.random.Generator) -> EncoderParams:
    """Fresh Xavier-init single-conv parameters for summary_stats."""
    act = activation if activation in ("prelu", "relu", "lrelu") else "prelu"
    params = init_params(in_dim, hidden, num_conv=1, num_proj=0,
                         activation=act, rng=rng)
    return params


def sbm_generate(n: int, k: int, p_in: float, p_out: float, feat_dim: int,
                 noise: float, rng: np.random.Generator,
                 proto_density: float = 0.5
                 ) -> tuple[CsrGraph, np.ndarray, LabeledSplit]:
    """Stochastic block model with class-indicative noisy binary features.

    Blocks are near-equal; each class gets a random binary prototype of the
    given density, node features are the prototype with each bit flipped
    independently with the noise probability, then L1 row-normalized.
    Splits are a seeded 10/10/80 shuffle.
    """
    if not (0.0 <= p_out < p_in <= 1.0):
        raise ConfigError(f"need 0 <= p_out < p_in <= 1, got {p_in}, {p_out}")
    if not (0.0 <= noise < 0.5):
        raise ConfigError(f"noise must be in [0, 0.5), got {noise}")
    if n < k or k < 2:
        raise ConfigError(f"need n >= k >= 2, got n={n}, k={k}")
    sizes = np.full(k, n // k, dtype=np.int64)
    sizes[:n % k] += 1
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    labels = np.repeat(np.arange(k, dtype=np.int64), sizes)

    srcs, dsts = [], []
    for a in range(k):
        for b in range(a, k):
            p = p_in if a == b else p_out
            na, nb = int(sizes[a]), int(sizes[b])
            mask = rng.random((na, nb)) < p
            if a == b:
                mask &= np.tri(na, na, k=-1, dtype=bool).T   # strict upper
            i, j = np.nonzero(mask)
            srcs.append(i + offsets[a])
            dsts.append(j + offsets[b])
    src = np.concatenate(srcs)
    dst = np.concatenate(dsts)
    g = build_csr(n, np.concatenate([src, dst]), np.concatenate([dst, src]))

    protos = (rng.random((k, feat_dim)) < proto_density)
    flips = rng.random((n, feat_dim)) < noise
    x = np.logical_xor(protos[labels], flips).astype(np.float32)
    x = row_normalize(x)

    order = rng.permutation(n)
    n_tr = max(1, n // 10)
    n_val = max(1, n // 10)
    split = LabeledSplit(labels=labels,
                         train=np.sort(order[:n_tr]),
                         val=np.sort(order[n_tr:n_tr + n_val]),
                         test=np.sort(order[n_tr + n_val:]))
    return g, x, split


def random_graph(n: int, avg_degree: float,
                 rng: np.random.Generator) -> CsrGraph:
    """Erdos-Renyi-style graph with roughly the requested average degree."""
    m = int(n * avg_degree / 2)
    src = rng.integers(0, n, size=m, dtype=np.int64)
    dst = rng.integers(0, n, size=m, dtype=np.int64)
    keep = src != dst
    src, dst = src[keep], dst[keep]
    return build_csr(n, np.concatenate([src, dst]), np.concatenate([dst, src]))


def cora_shape(rng: np.random.Generator, n: int = 2708, feat_dim: int = 1433,
               avg_degree: float = 4.0,
               density: float = 0.0125) -> tuple[CsrGraph, np.ndarray]:
    """Synthetic graph matching a citation network's dimensions.

    Random sparse binary features at the given density; the caller's
    pipeline row-normalizes them.
    """
    g = random_graph(n, avg_degree, rng)
    x = (rng.random((n, feat_dim)) < density).astype(np.float32)
    return g, x
