"""Independent reference implementations the test suite checks against.

Everything in this file is deliberately naive: dense matrices, explicit
python loops, set arithmetic, or arbitrary-precision mpmath. Nothing here
imports the package under test, so an agreement between the two is evidence
rather than tautology.
"""

import mpmath
import numpy as np


def max_rel_err(got, ref):
    """max |got - ref| scaled by the largest reference magnitude."""
    got = np.asarray(got, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    denom = max(float(np.abs(ref).max()) if ref.size else 0.0, 1e-12)
    return float(np.abs(got - ref).max() / denom) if got.size else 0.0


def dense_from_csr(row_ptr, col_idx, weights, num_rows, num_cols):
    """Expand CSR arrays to a dense float64 matrix."""
    out = np.zeros((num_rows, num_cols), dtype=np.float64)
    for i in range(num_rows):
        for e in range(int(row_ptr[i]), int(row_ptr[i + 1])):
            w = 1.0 if weights is None else float(weights[e])
            out[i, int(col_idx[e])] += w
    return out


def edge_set(row_ptr, col_idx):
    pairs = set()
    for i in range(len(row_ptr) - 1):
        for e in range(int(row_ptr[i]), int(row_ptr[i + 1])):
            pairs.add((i, int(col_idx[e])))
    return pairs


def dense_sym_normalize(adj):
    """D^{-1/2} A D^{-1/2} for a dense adjacency whose degrees are positive."""
    deg = adj.sum(axis=1)
    dinv = 1.0 / np.sqrt(deg)
    return adj * dinv[:, None] * dinv[None, :]


def naive_matmul(a, b):
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m), dtype=np.float64)
    for i in range(n):
        for j in range(m):
            s = 0.0
            for l in range(k):
                s += float(a[i, l]) * float(b[l, j])
            out[i, j] = s
    return out


def bce_mpmath(logits, targets, dps=50):
    """Mean binary cross-entropy on logits at 50 decimal digits.

    Uses the algebraic identity -y log(sig(x)) - (1-y) log(1-sig(x))
    = log(1 + e^x) - x*y, which mpmath evaluates exactly enough at any
    magnitude thanks to its unbounded exponent range.
    """
    with mpmath.workdps(dps):
        n = len(logits)
        total = mpmath.mpf(0)
        grads = []
        for xv, yv in zip(logits, targets):
            x = mpmath.mpf(float(xv))
            y = mpmath.mpf(float(yv))
            total += mpmath.log(1 + mpmath.e ** x) - x * y
            sig = 1 / (1 + mpmath.e ** (-x))
            grads.append(float((sig - y) / n))
        return float(total / n), np.array(grads, dtype=np.float64)


def adam_scalar_reference(p0, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Hand-written scalar Adam recurrence; returns the param after each step."""
    p, m, v = float(p0), 0.0, 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        g = float(g)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        p = p - lr * mhat / (np.sqrt(vhat) + eps)
        out.append(p)
    return out


def softmax_probe_reference(h, labels, train_ids, eval_ids, num_classes,
                            lr, epochs, l2):
    """From-scratch softmax regression with Adam, float64 throughout.

    Mirrors the probe contract (zero init, full-batch, L2 on the weight
    matrix only) with independently written update code; returns accuracy
    on eval_ids.
    """
    xtr = h[train_ids].astype(np.float64)
    ytr = np.asarray(labels)[train_ids]
    n, d = xtr.shape
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), ytr] = 1.0
    w = np.zeros((d, num_classes))
    b = np.zeros(num_classes)
    mw = np.zeros_like(w); vw = np.zeros_like(w)
    mb = np.zeros_like(b); vb = np.zeros_like(b)
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, epochs + 1):
        logits = xtr @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        p = e / e.sum(axis=1, keepdims=True)
        delta = (p - onehot) / n
        gw = xtr.T @ delta + 2.0 * l2 * w
        gb = delta.sum(axis=0)
        mw = b1 * mw + (1 - b1) * gw; vw = b2 * vw + (1 - b2) * gw * gw
        mb = b1 * mb + (1 - b1) * gb; vb = b2 * vb + (1 - b2) * gb * gb
        w = w - lr * (mw / (1 - b1 ** t)) / (np.sqrt(vw / (1 - b2 ** t)) + eps)
        b = b - lr * (mb / (1 - b1 ** t)) / (np.sqrt(vb / (1 - b2 ** t)) + eps)
    he = h[eval_ids].astype(np.float64)
    pred = np.argmax(he @ w + b, axis=1)
    return float(np.mean(pred == np.asarray(labels)[eval_ids]))


def khop_neighborhood(row_ptr, col_idx, seeds, hops):
    """Set of nodes reachable from seeds in exactly <= hops steps (incl. seeds)."""
    frontier = set(int(s) for s in seeds)
    for _ in range(hops):
        nxt = set(frontier)
        for u in frontier:
            for e in range(int(row_ptr[u]), int(row_ptr[u + 1])):
                nxt.add(int(col_idx[e]))
        frontier = nxt
    return frontier


def count_components(num_nodes, row_ptr, col_idx):
    """Union-find connected-component count over an undirected CSR."""
    parent = list(range(num_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u in range(num_nodes):
        for e in range(int(row_ptr[u]), int(row_ptr[u + 1])):
            ra, rb = find(u), find(int(col_idx[e]))
            if ra != rb:
                parent[ra] = rb
    return len({find(u) for u in range(num_nodes)})


def central_fd(f, x, h=1e-4):
    """Central finite-difference gradient of scalar f at x, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def loglog_slope(xs, ys):
    """Least-squares slope of log(y) vs log(x), plain normal equations."""
    lx = np.log(np.asarray(xs, dtype=np.float64))
    ly = np.log(np.asarray(ys, dtype=np.float64))
    lx = lx - lx.mean()
    return float((lx * (ly - ly.mean())).sum() / (lx * lx).sum())
