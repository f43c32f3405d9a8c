"""Canonical CSR graphs, feature/label IO, and normalizations.

Graphs are undirected and stored as canonical CSR: both directions present,
rows sorted, columns sorted within each row, no duplicate edges. Edge weights
are float64 (the symmetric normalization contract is tighter than float32
resolution); node features and embeddings are float32 row-major.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import GraphError, IdRangeError, ParseError, ShapeError
from .tensor_ops import csr_row_sums

FEATURE_MAGIC = b"GGDF"
FEATURE_VERSION = 1
MAX_NODE_ID = 2**63 - 1

SPLIT_NAMES = ("train", "val", "test", "none")


@dataclass(frozen=True)
class CsrGraph:
    """Compressed sparse row adjacency. Treat instances as immutable."""

    num_nodes: int
    row_ptr: np.ndarray            # int64, len num_nodes + 1, monotone
    col_idx: np.ndarray            # int64, sorted within each row
    weights: np.ndarray | None = None  # float64, aligned with col_idx

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def row(self, i: int) -> np.ndarray:
        return self.col_idx[self.row_ptr[i]:self.row_ptr[i + 1]]

    def validate(self) -> None:
        rp, ci = self.row_ptr, self.col_idx
        if len(rp) != self.num_nodes + 1 or rp[0] != 0 or rp[-1] != len(ci):
            raise GraphError("row_ptr does not frame col_idx")
        if np.any(np.diff(rp) < 0):
            raise GraphError("row_ptr not monotone")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.num_nodes):
            raise GraphError("col_idx out of range")
        for i in range(self.num_nodes):
            r = self.row(i)
            if np.any(np.diff(r) <= 0):
                raise GraphError(f"row {i} not strictly sorted")
        if self.weights is not None and len(self.weights) != len(ci):
            raise GraphError("weights misaligned with col_idx")


def build_csr(num_nodes: int, src: np.ndarray, dst: np.ndarray,
              weights: np.ndarray | None = None) -> CsrGraph:
    """Canonicalize an edge array: sort by (src, dst) and drop duplicates.

    The first weight of a duplicate group is retained.
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if len(src) != len(dst):
        raise ShapeError("src/dst length mismatch")
    if len(src) and (src.min() < 0 or dst.min() < 0
                     or src.max() >= num_nodes or dst.max() >= num_nodes):
        raise GraphError("edge endpoint out of range")
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)[order]
    if len(src):
        keep = np.ones(len(src), dtype=bool)
        keep[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
        src, dst = src[keep], dst[keep]
        if weights is not None:
            weights = weights[keep]
    row_ptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=num_nodes), out=row_ptr[1:])
    g = CsrGraph(num_nodes=num_nodes, row_ptr=row_ptr, col_idx=dst,
                 weights=weights)
    for arr in (g.row_ptr, g.col_idx) + (() if weights is None else (weights,)):
        arr.flags.writeable = False
    return g


def edge_array(g: CsrGraph) -> tuple[np.ndarray, np.ndarray]:
    """(src, dst) arrays in storage order."""
    src = np.repeat(np.arange(g.num_nodes, dtype=np.int64), g.degrees)
    return src, g.col_idx.copy()


def _parse_int(token: str, lineno: int, what: str) -> int:
    try:
        value = int(token)
    except ValueError:
        raise ParseError(f"bad {what} {token!r}", lineno) from None
    if value < 0 or value > MAX_NODE_ID:
        raise IdRangeError(f"line {lineno}: {what} {value} out of range")
    return value


def load_edge_list(path: str | os.PathLike,
                   symmetrize: bool = True) -> tuple[CsrGraph, np.ndarray]:
    """Read a whitespace-delimited "src dst" text file.

    '#' starts a comment, blank lines are skipped. Node ids are remapped to a
    dense 0..N-1 range; the second return value maps new id -> original id.
    """
    src, dst = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"expected 'src dst', got {raw.strip()!r}",
                                 lineno)
            src.append(_parse_int(parts[0], lineno, "node id"))
            dst.append(_parse_int(parts[1], lineno, "node id"))
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    node_ids = np.unique(np.concatenate([src, dst]))
    src = np.searchsorted(node_ids, src)
    dst = np.searchsorted(node_ids, dst)
    if symmetrize:
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
    return build_csr(len(node_ids), src, dst), node_ids


def save_edge_list(path: str | os.PathLike, g: CsrGraph) -> None:
    """Write each undirected edge once (u <= v), plus self loops."""
    src, dst = edge_array(g)
    keep = src <= dst
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in zip(src[keep], dst[keep]):
            fh.write(f"{u} {v}\n")


def add_self_loops(g: CsrGraph) -> CsrGraph:
    """Insert (i, i) where missing. Idempotent; weights of new loops are 1."""
    src, dst = edge_array(g)
    has_loop = np.zeros(g.num_nodes, dtype=bool)
    loops = src == dst
    has_loop[src[loops]] = True
    missing = np.nonzero(~has_loop)[0]
    src = np.concatenate([src, missing])
    dst = np.concatenate([dst, missing])
    weights = None
    if g.weights is not None:
        weights = np.concatenate([g.weights,
                                  np.ones(len(missing), dtype=np.float64)])
    return build_csr(g.num_nodes, src, dst, weights)


def sym_normalize(g: CsrGraph) -> CsrGraph:
    """Weight edge (i, j) as 1/sqrt(d_i * d_j), d = row degree.

    Every node must have degree >= 1 (run add_self_loops first); a
    zero-degree row has no defined normalization.
    """
    deg = g.degrees.astype(np.float64)
    if np.any(deg == 0):
        bad = int(np.nonzero(deg == 0)[0][0])
        raise GraphError(f"node {bad} has degree 0; add self loops first")
    inv_sqrt = 1.0 / np.sqrt(deg)
    src, dst = edge_array(g)
    weights = inv_sqrt[src] * inv_sqrt[dst]
    out = CsrGraph(num_nodes=g.num_nodes, row_ptr=g.row_ptr,
                   col_idx=g.col_idx, weights=weights)
    weights.flags.writeable = False
    return out


def row_normalize(x: np.ndarray) -> np.ndarray:
    """L1 row normalization: each row with nonzero sum rescales to sum 1.

    Rows summing to exactly zero (all-zero rows in particular) pass through
    unchanged.
    """
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError(f"features must be 2-D, got {x.shape}")
    sums = x.sum(axis=1, dtype=np.float64)
    divisor = np.where(sums == 0.0, 1.0, sums)
    out = x.astype(np.float64) / divisor[:, None]
    return out.astype(x.dtype) if x.dtype != np.float64 else out


def save_features(path: str | os.PathLike, x: np.ndarray) -> None:
    """Write the dense f32 container: magic, version, u64 dims, row-major."""
    x = np.ascontiguousarray(x, dtype=np.float32)
    if x.ndim != 2:
        raise ShapeError(f"features must be 2-D, got {x.shape}")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<I", FEATURE_VERSION))
        fh.write(struct.pack("<QQ", x.shape[0], x.shape[1]))
        fh.write(x.astype("<f4", copy=False).tobytes())


def load_features(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_features(fh, str(path))


def read_features(fh, label: str = "<stream>") -> np.ndarray:
    """Read one dense f32 block from an open binary stream."""
    magic = fh.read(4)
    if magic != FEATURE_MAGIC:
        raise ParseError(f"{label}: bad magic {magic!r}")
    (version,) = struct.unpack("<I", fh.read(4))
    if version != FEATURE_VERSION:
        raise ParseError(f"{label}: unsupported version {version}")
    rows, cols = struct.unpack("<QQ", fh.read(16))
    if rows > MAX_NODE_ID or cols > MAX_NODE_ID:
        raise IdRangeError(f"{label}: dims {rows}x{cols} out of range")
    payload = fh.read(rows * cols * 4)
    if len(payload) != rows * cols * 4:
        raise ShapeError(
            f"{label}: header declares {rows}x{cols} but payload is short")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    return data.reshape(rows, cols)


def write_features_block(fh, x: np.ndarray) -> None:
    """Write one dense f32 block to an open binary stream."""
    x = np.ascontiguousarray(x, dtype=np.float32)
    fh.write(FEATURE_MAGIC)
    fh.write(struct.pack("<I", FEATURE_VERSION))
    fh.write(struct.pack("<QQ", x.shape[0], x.shape[1]))
    fh.write(x.astype("<f4", copy=False).tobytes())


@dataclass
class LabeledSplit:
    """Per-node class ids plus train/val/test index arrays."""

    labels: np.ndarray                 # int64, length num_nodes
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def validate(self, num_nodes: int | None = None) -> None:
        if num_nodes is not None and len(self.labels) != num_nodes:
            raise ShapeError(
                f"labels cover {len(self.labels)} nodes, graph has {num_nodes}")
        for name in ("train", "val", "test"):
            idx = getattr(self, name)
            if len(idx) and (idx.min() < 0 or idx.max() >= len(self.labels)):
                raise IdRangeError(f"{name} split index out of range")


def load_labels(path: str | os.PathLike,
                num_nodes: int | None = None) -> LabeledSplit:
    """Read "node_id class_id split" lines; every node exactly once."""
    rows = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(
                    f"expected 'node class split', got {raw.strip()!r}", lineno)
            node = _parse_int(parts[0], lineno, "node id")
            cls = _parse_int(parts[1], lineno, "class id")
            if parts[2] not in SPLIT_NAMES:
                raise ParseError(f"unknown split {parts[2]!r}", lineno)
            if node in rows:
                raise ParseError(f"node {node} listed twice", lineno)
            rows[node] = (cls, parts[2])
    n = num_nodes if num_nodes is not None else (max(rows) + 1 if rows else 0)
    if sorted(rows) != list(range(n)):
        raise ShapeError(f"labels must cover nodes 0..{n - 1} exactly once")
    labels = np.array([rows[i][0] for i in range(n)], dtype=np.int64)
    splits = {name: [] for name in SPLIT_NAMES}
    for i in range(n):
        splits[rows[i][1]].append(i)
    return LabeledSplit(
        labels=labels,
        train=np.array(splits["train"], dtype=np.int64),
        val=np.array(splits["val"], dtype=np.int64),
        test=np.array(splits["test"], dtype=np.int64),
    )


def save_labels(path: str | os.PathLike, split: LabeledSplit) -> None:
    names = np.full(len(split.labels), "none", dtype=object)
    names[split.train] = "train"
    names[split.val] = "val"
    names[split.test] = "test"
    with open(path, "w", encoding="utf-8") as fh:
        for i, (cls, name) in enumerate(zip(split.labels, names)):
            fh.write(f"{i} {cls} {name}\n")


def permute_graph_and_features(g: CsrGraph, x: np.ndarray,
                               perm: np.ndarray) -> tuple[CsrGraph, np.ndarray]:
    """Relabel node u as perm[u]; test utility for equivariance checks."""
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(g.num_nodes)):
        raise GraphError("perm is not a permutation of the node set")
    src, dst = edge_array(g)
    g2 = build_csr(g.num_nodes, perm[src], perm[dst], g.weights)
    x2 = np.empty_like(x)
    x2[perm] = x
    return g2, x2
