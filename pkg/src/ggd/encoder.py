"""Siamese GCN encoder with projector head and manual reverse-mode gradients.

A conv layer computes act(spmm(g_norm, H) @ W) with no bias; a projector
layer computes act(H @ W + b), the activation omitted on the final layer.
The same parameters serve the positive and corrupted branches. Backward
walks cached pre-activations in reverse; the spmm adjoint is spmm with the
same matrix because g_norm is symmetric.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError, ShapeError
from .graph_store import (CsrGraph, read_features,
                          permute_graph_and_features, write_features_block)
from .tensor_ops import (csr_matmul_dense, matmul, prelu, prelu_backward,
                         sigmoid, xavier_uniform)

__all__ = [
    "ACTIVATIONS", "ConvLayer", "ProjLayer", "EncoderParams", "ForwardCache",
    "init_params", "encode_forward", "encode_backward", "save_checkpoint",
    "load_checkpoint", "permute_graph_and_features",
]

ACTIVATIONS = ("prelu", "relu", "lrelu", "sigmoid")
_FIXED_SLOPES = {"relu": 0.0, "lrelu": 0.01}
PRELU_INIT_SLOPE = 0.25

CHECKPOINT_MAGIC = b"GGDP"
CHECKPOINT_VERSION = 1


@dataclass
class ConvLayer:
    weight: np.ndarray          # (in_dim, out_dim), no bias
    slope: np.ndarray           # shape (1,), trained only for prelu


@dataclass
class ProjLayer:
    weight: np.ndarray          # (dim, dim)
    bias: np.ndarray            # (dim,)
    slope: np.ndarray | None    # None on the final layer (no activation)


@dataclass
class EncoderParams:
    conv: list[ConvLayer]
    proj: list[ProjLayer]
    activation: str = "prelu"
    agg_weight: np.ndarray | None = None   # (hidden,), linear aggregation only

    @property
    def in_dim(self) -> int:
        return self.conv[0].weight.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.conv[-1].weight.shape[1]

    def named(self):
        """(name, array) pairs in a fixed order; slope omitted unless trained."""
        train_slope = self.activation == "prelu"
        for i, layer in enumerate(self.conv):
            yield f"conv{i}.weight", layer.weight
            if train_slope:
                yield f"conv{i}.slope", layer.slope
        for i, layer in enumerate(self.proj):
            yield f"proj{i}.weight", layer.weight
            yield f"proj{i}.bias", layer.bias
            if train_slope and layer.slope is not None:
                yield f"proj{i}.slope", layer.slope
        if self.agg_weight is not None:
            yield "agg.weight", self.agg_weight

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            conv=[ConvLayer(l.weight.copy(), l.slope.copy()) for l in self.conv],
            proj=[ProjLayer(l.weight.copy(), l.bias.copy(),
                            None if l.slope is None else l.slope.copy())
                  for l in self.proj],
            activation=self.activation,
            agg_weight=None if self.agg_weight is None else self.agg_weight.copy(),
        )

    def astype(self, dtype) -> "EncoderParams":
        """Shadow copy in another dtype (float64 for gradient checks)."""
        cast = lambda a: a.astype(dtype)
        return EncoderParams(
            conv=[ConvLayer(cast(l.weight), cast(l.slope)) for l in self.conv],
            proj=[ProjLayer(cast(l.weight), cast(l.bias),
                            None if l.slope is None else cast(l.slope))
                  for l in self.proj],
            activation=self.activation,
            agg_weight=None if self.agg_weight is None else cast(self.agg_weight),
        )


def _init_slope(activation: str, dtype) -> np.ndarray:
    if activation == "prelu":
        return np.full(1, PRELU_INIT_SLOPE, dtype=dtype)
    return np.full(1, _FIXED_SLOPES.get(activation, 0.0), dtype=dtype)


def init_params(in_dim: int, hidden: int, num_conv: int, num_proj: int,
                activation: str, rng: np.random.Generator,
                linear_agg: bool = False, dtype=np.float32) -> EncoderParams:
    """Xavier-uniform weights, zero biases, activation-specific slopes.

    Draw order is fixed (conv stack, projector stack, aggregation weight) so
    a given init stream always yields the same parameters.
    """
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    if num_conv < 1:
        raise ConfigError("need at least one conv layer")
    if num_proj < 0:
        raise ConfigError("num_proj must be >= 0")
    conv, proj = [], []
    d = in_dim
    for _ in range(num_conv):
        conv.append(ConvLayer(weight=xavier_uniform(d, hidden, rng, dtype),
                              slope=_init_slope(activation, dtype)))
        d = hidden
    for i in range(num_proj):
        last = i == num_proj - 1
        proj.append(ProjLayer(weight=xavier_uniform(hidden, hidden, rng, dtype),
                              bias=np.zeros(hidden, dtype=dtype),
                              slope=None if last else _init_slope(activation,
                                                                  dtype)))
    agg = None
    if linear_agg:
        agg = xavier_uniform(hidden, 1, rng, dtype).reshape(hidden)
    return EncoderParams(conv=conv, proj=proj, activation=activation,
                         agg_weight=agg)


def _act_forward(p: np.ndarray, activation: str,
                 slope: np.ndarray | None) -> np.ndarray:
    if activation == "sigmoid":
        return sigmoid(p)
    return prelu(p, float(slope[0]))


def _act_backward(grad: np.ndarray, p: np.ndarray, h: np.ndarray,
                  activation: str,
                  slope: np.ndarray | None) -> tuple[np.ndarray, float]:
    if activation == "sigmoid":
        return grad * h * (1.0 - h), 0.0
    return prelu_backward(grad, p, float(slope[0]))


@dataclass
class ForwardCache:
    """Activations retained for the backward pass."""

    operator: object                   # CsrGraph, or list[Block] for sampling
    conv_v: list = field(default_factory=list)   # spmm outputs per conv layer
    conv_p: list = field(default_factory=list)   # pre-activations per conv layer
    conv_h: list = field(default_factory=list)   # post-activations per conv layer
    proj_in: list = field(default_factory=list)  # projector layer inputs
    proj_p: list = field(default_factory=list)   # projector pre-activations


def _spmm_graph(g: CsrGraph, m: np.ndarray) -> np.ndarray:
    if m.shape[0] != g.num_nodes:
        raise ShapeError(f"spmm rows {m.shape[0]} vs graph {g.num_nodes}")
    if g.weights is None:
        raise ShapeError("spmm requires a weighted (normalized) graph")
    return csr_matmul_dense(g.row_ptr, g.col_idx, g.weights, m, g.num_nodes)


def _proj_forward(h: np.ndarray, params: EncoderParams,
                  cache: ForwardCache) -> np.ndarray:
    for layer in params.proj:
        cache.proj_in.append(h)
        p = matmul(h, layer.weight) + layer.bias
        cache.proj_p.append(p)
        h = p if layer.slope is None else _act_forward(p, params.activation,
                                                       layer.slope)
    return h


def encode_forward(g_norm: CsrGraph, z: np.ndarray,
                   params: EncoderParams) -> tuple[np.ndarray, ForwardCache]:
    """Full-graph forward pass; returns H and the cache for backward."""
    if z.shape[1] != params.in_dim:
        raise ShapeError(f"features dim {z.shape[1]} vs encoder {params.in_dim}")
    cache = ForwardCache(operator=g_norm)
    h = z
    for layer in params.conv:
        v = _spmm_graph(g_norm, h)
        p = matmul(v, layer.weight)
        h = _act_forward(p, params.activation, layer.slope)
        cache.conv_v.append(v)
        cache.conv_p.append(p)
        cache.conv_h.append(h)
    return _proj_forward(h, params, cache), cache


def _proj_backward(grad: np.ndarray, params: EncoderParams,
                   cache: ForwardCache, grads: dict,
                   accumulate: bool) -> np.ndarray:
    def put(name, value):
        if accumulate:
            grads[name] += value
        else:
            grads[name] = value

    for i in reversed(range(len(params.proj))):
        layer = params.proj[i]
        p = cache.proj_p[i]
        if layer.slope is None:
            gp = grad
        else:
            h = _act_forward(p, params.activation, layer.slope)
            gp, gs = _act_backward(grad, p, h, params.activation, layer.slope)
            if params.activation == "prelu":
                put(f"proj{i}.slope", np.array([gs], dtype=p.dtype))
        put(f"proj{i}.weight", matmul(cache.proj_in[i].T, gp))
        put(f"proj{i}.bias",
            gp.sum(axis=0, dtype=np.float64).astype(gp.dtype))
        grad = matmul(gp, layer.weight.T)
    return grad


def encode_backward(grad_h: np.ndarray, cache: ForwardCache,
                    params: EncoderParams,
                    grads: dict | None = None) -> dict:
    """Gradients of a scalar loss w.r.t. every trained parameter.

    Pass an existing grads dict to accumulate a second branch into it (the
    siamese loss sums positive and corrupted contributions).
    """
    accumulate = grads is not None
    if grads is None:
        grads = {}
    grad = _proj_backward(grad_h, params, cache, grads, accumulate)
    g_norm = cache.operator
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
            grad = _spmm_graph(g_norm, dv)   # adjoint = same matrix (symmetric)
    return grads


# -- checkpoint format ------------------------------------------------------
# GGDP, u32 version, u32 num_conv, u32 num_proj, u32 activation code,
# u32 has_agg, then per conv layer W and slope, per projector layer W, bias
# and (if present) slope, then the aggregation weight, each as a dense f32
# block. Slopes and biases are stored as 1-row matrices.

def save_checkpoint(path, params: EncoderParams) -> None:
    act_code = ACTIVATIONS.index(params.activation)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IIIII", CHECKPOINT_VERSION, len(params.conv),
                             len(params.proj), act_code,
                             0 if params.agg_weight is None else 1))
        for layer in params.conv:
            write_features_block(fh, layer.weight)
            write_features_block(fh, layer.slope.reshape(1, 1))
        for layer in params.proj:
            write_features_block(fh, layer.weight)
            write_features_block(fh, layer.bias.reshape(1, -1))
            if layer.slope is not None:
                write_features_block(fh, layer.slope.reshape(1, 1))
        if params.agg_weight is not None:
            write_features_block(fh, params.agg_weight.reshape(1, -1))


def load_checkpoint(path) -> EncoderParams:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ParseError(f"{path}: bad checkpoint magic {magic!r}")
        version, num_conv, num_proj, act_code, has_agg = struct.unpack(
            "<IIIII", fh.read(20))
        if version != CHECKPOINT_VERSION:
            raise ParseError(f"{path}: unsupported checkpoint version {version}")
        if act_code >= len(ACTIVATIONS):
            raise ParseError(f"{path}: unknown activation code {act_code}")
        conv = [ConvLayer(weight=read_features(fh, str(path)),
                          slope=read_features(fh, str(path)).reshape(1))
                for _ in range(num_conv)]
        proj = []
        for i in range(num_proj):
            w = read_features(fh, str(path))
            b = read_features(fh, str(path)).reshape(-1)
            slope = None
            if i < num_proj - 1:
                slope = read_features(fh, str(path)).reshape(1)
            proj.append(ProjLayer(weight=w, bias=b, slope=slope))
        agg = read_features(fh, str(path)).reshape(-1) if has_agg else None
    return EncoderParams(conv=conv, proj=proj,
                         activation=ACTIVATIONS[act_code], agg_weight=agg)
