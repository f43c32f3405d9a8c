import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ggd import RngState, build_csr, sbm_generate


def make_graph(edges, num_nodes, symmetrize=True):
    """Small-graph helper: edges as (u, v) pairs, symmetrized by default."""
    if edges:
        src, dst = (np.array(p, dtype=np.int64) for p in zip(*edges))
    else:
        src = dst = np.zeros(0, dtype=np.int64)
    if symmetrize:
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
    return build_csr(num_nodes, src, dst)


def random_connected_graph(n, extra_edges, rng):
    """Random spanning tree plus extra random edges; every degree >= 1."""
    parents = rng.integers(0, np.arange(1, n))
    edges = list(zip(parents.tolist(), range(1, n)))
    for _ in range(extra_edges):
        u, v = rng.integers(0, n, size=2)
        if u != v:
            edges.append((int(u), int(v)))
    return make_graph(edges, n)


@pytest.fixture(scope="session")
def sbm_fixture():
    """The shared community-graph fixture used by the heavier checks."""
    rng = RngState(11)
    return sbm_generate(2000, 4, 0.02, 0.002, 32, 0.3, rng.stream("sbm"))
