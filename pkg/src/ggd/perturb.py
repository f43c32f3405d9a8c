"""Corruption and augmentation.

Corruption produces the negative group: feature rows are shuffled so every
node keeps a real feature vector but sits in the wrong topological position.
Augmentation (edge dropout + feature-column masking) is resampled every epoch
and applied before corruption, so the negative branch shuffles the augmented
features.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, CorruptionError
from .graph_store import CsrGraph, build_csr, edge_array


def shuffle_features(x: np.ndarray, rng: np.random.Generator,
                     perm: np.ndarray | None = None
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Row-shuffle the feature matrix; returns (shuffled, permutation).

    A permutation may be injected for tests; otherwise one is drawn from rng.
    Fewer than two rows cannot be meaningfully corrupted.
    """
    if x.shape[0] < 2:
        raise CorruptionError(f"cannot shuffle {x.shape[0]} rows")
    if perm is None:
        perm = rng.permutation(x.shape[0])
    return x[perm], perm


def _check_prob(p: float, what: str) -> None:
    if not (0.0 <= p < 1.0):
        raise ConfigError(f"{what} must be in [0, 1), got {p}")


def drop_edges(g: CsrGraph, p: float, rng: np.random.Generator) -> CsrGraph:
    """Drop each undirected edge with probability p, both directions together.

    Self loops, if any, are never dropped. p = 0 returns an identical graph.
    """
    _check_prob(p, "edge drop probability")
    src, dst = edge_array(g)
    upper = src < dst
    loops = src == dst
    u, v = src[upper], dst[upper]
    keep = rng.random(len(u)) >= p
    u, v = u[keep], v[keep]
    new_src = np.concatenate([u, v, src[loops]])
    new_dst = np.concatenate([v, u, dst[loops]])
    weights = None
    if g.weights is not None:
        w_upper = g.weights[upper][keep]
        weights = np.concatenate([w_upper, w_upper, g.weights[loops]])
    return build_csr(g.num_nodes, new_src, new_dst, weights)


def drop_feature_dims(x: np.ndarray, p: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Zero floor(p * D) feature columns chosen without replacement, globally.

    Untouched columns are returned bitwise unchanged.
    """
    _check_prob(p, "feature drop probability")
    d = x.shape[1]
    k = int(np.floor(p * d))
    out = x.copy()
    if k:
        cols = rng.choice(d, size=k, replace=False)
        out[:, cols] = 0
    return out
