"""Dense kernels, activations, losses and the optimizer.

Storage convention is float32; every reduction (matmul, spmm row sums, loss
means, per-column sums) accumulates in float64 before narrowing back. All
kernels preserve a float64 input dtype unchanged, which is what the
finite-difference shadow tests rely on.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .errors import ShapeError


class RngState:
    """Counter-based randomness root with independent named streams.

    Each stream is a Philox generator keyed by (seed, blake2s(name)), so
    drawing from one stream never perturbs another: toggling augmentation on
    or off leaves weight init and corruption sequences untouched.
    """

    def __init__(self, seed: int):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed out of u64 range: {seed}")
        self.seed = int(seed)

    def stream(self, name: str) -> np.random.Generator:
        tag = hashlib.blake2s(name.encode("utf-8"), digest_size=8).digest()
        key = (self.seed << 64) | int.from_bytes(tag, "little")
        return np.random.Generator(np.random.Philox(key=key))


def xavier_uniform(fan_in: int, fan_out: int, rng: np.random.Generator,
                   dtype=np.float32) -> np.ndarray:
    """W ~ U(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    if fan_in <= 0 or fan_out <= 0:
        raise ShapeError(f"bad fan dims ({fan_in}, {fan_out})")
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out)).astype(dtype)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a @ b with float64 accumulation, narrowed back to a's dtype."""
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims {a.shape} x {b.shape}")
    out = a.astype(np.float64, copy=False) @ b.astype(np.float64, copy=False)
    if a.dtype == np.float64 or b.dtype == np.float64:
        return out
    return out.astype(np.float32)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError(f"add shapes {a.shape} vs {b.shape}")
    return a + b


def scale(a: np.ndarray, c: float) -> np.ndarray:
    return a * c


def transpose(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.T)


def csr_row_sums(row_ptr: np.ndarray, values: np.ndarray,
                 num_rows: int) -> np.ndarray:
    """Per-row float64 sums of a CSR-aligned value array (fixed order)."""
    out = np.zeros(num_rows, dtype=np.float64)
    counts = np.diff(row_ptr)
    nonempty = counts > 0
    if values.size and nonempty.any():
        starts = row_ptr[:-1][nonempty]
        out[nonempty] = np.add.reduceat(values.astype(np.float64), starts)
    return out


def csr_matmul_dense(row_ptr: np.ndarray, col_idx: np.ndarray,
                     weights: np.ndarray, dense: np.ndarray,
                     num_rows: int) -> np.ndarray:
    """Sparse @ dense with float64 accumulation and fixed per-row order.

    out[i, :] = sum_e w_e * dense[col_e, :] over row i's entries in storage
    order. Rectangular operators are fine: the source dimension is taken
    from the dense operand. scipy's CSR kernel accumulates each row
    sequentially in float64, which the determinism contract requires.
    """
    mat = scipy.sparse.csr_matrix(
        (weights.astype(np.float64, copy=False), col_idx, row_ptr),
        shape=(num_rows, dense.shape[0]))
    out64 = mat @ dense.astype(np.float64, copy=False)
    if dense.dtype == np.float64:
        return out64
    return out64.astype(np.float32)


def prelu(x: np.ndarray, slope: float) -> np.ndarray:
    """max(0, x) + slope * min(0, x); slope 0 is ReLU, 1 is identity."""
    return np.where(x > 0, x, x * x.dtype.type(slope))


def prelu_backward(grad: np.ndarray, x: np.ndarray,
                   slope: float) -> tuple[np.ndarray, float]:
    """Gradients w.r.t. input and slope given the cached pre-activation x.

    d/dx is 1 on the positive side and slope elsewhere (slope convention at
    exactly 0); d/dslope is sum(min(0, x) * grad), accumulated in float64.
    """
    if grad.shape != x.shape:
        raise ShapeError(f"prelu_backward shapes {grad.shape} vs {x.shape}")
    gx = np.where(x > 0, grad, grad * x.dtype.type(slope))
    gslope = float(np.einsum("i,i->", np.minimum(x, 0).ravel(), grad.ravel(),
                             dtype=np.float64))
    return gx, gslope


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos].astype(np.float64)))
    ex = np.exp(x[~pos].astype(np.float64))
    out[~pos] = ex / (1.0 + ex)
    if x.dtype == np.float64:
        return out
    return out.astype(x.dtype)


def bce_with_logits(logits: np.ndarray,
                    targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy on raw logits plus its gradient.

    Uses the standard stable form max(x,0) - x*y + log1p(exp(-|x|)), exact at
    x = 0 and overflow-free over the whole float range. The gradient is
    (sigmoid(x) - y) / len(x).
    """
    if logits.shape != targets.shape or logits.ndim != 1:
        raise ShapeError(f"bce shapes {logits.shape} vs {targets.shape}")
    x = logits.astype(np.float64)
    y = targets.astype(np.float64)
    per = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    loss = float(per.mean())
    grad64 = (sigmoid(x) - y) / len(x)
    grad = grad64 if logits.dtype == np.float64 else grad64.astype(np.float32)
    return loss, grad


@dataclass
class AdamState:
    """Per-parameter Adam moments. One instance per parameter array."""

    lr: float
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_param(cls, param: np.ndarray, lr: float, **kw) -> "AdamState":
        return cls(lr=lr, m=np.zeros_like(param), v=np.zeros_like(param), **kw)


def adam_step(state: AdamState, param: np.ndarray,
              grad: np.ndarray) -> np.ndarray:
    """One in-place Adam update with bias correction, no weight decay."""
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise ShapeError(
            f"adam shapes param {param.shape} grad {grad.shape} m {state.m.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * grad * grad
    mhat = state.m / (1.0 - b1 ** state.t)
    vhat = state.v / (1.0 - b2 ** state.t)
    param -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return param
