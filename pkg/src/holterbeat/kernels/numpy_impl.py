"""Pure-numpy implementations of the hot kernels.

These are the reference semantics for the numba mirrors in
``numba_impl``; the equivalence tests compare the two paths. Convolutions
go through im2col + BLAS matmul, the rest through vectorized indexing.
All floating point work is float64.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


# ---------------------------------------------------------------------------
# 1-D convolution (cross-correlation, no kernel flip)

def _col_view(xp: np.ndarray, l_out: int, k: int, stride: int) -> np.ndarray:
    b, ci, _ = xp.shape
    s0, s1, s2 = xp.strides
    return as_strided(xp, (b, ci, l_out, k), (s0, s1, s2 * stride, s2))


def conv1d_forward(x, w, stride, pad):
    b, ci, l_in = x.shape
    co, _, k = w.shape
    l_out = (l_in + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad))) if pad else x
    cols = _col_view(xp, l_out, k, stride)
    cols = cols.transpose(0, 2, 1, 3).reshape(b * l_out, ci * k)
    out = cols @ w.reshape(co, ci * k).T
    return np.ascontiguousarray(out.reshape(b, l_out, co).transpose(0, 2, 1))


def conv1d_backward_input(gout, w, stride, pad, l_in):
    b, co, l_out = gout.shape
    _, ci, k = w.shape
    gxp = np.zeros((b, ci, l_in + 2 * pad))
    got = np.ascontiguousarray(gout.transpose(0, 2, 1))  # [b, l_out, co]
    for kk in range(k):
        contrib = got @ w[:, :, kk]  # [b, l_out, ci]
        gxp[:, :, kk : kk + l_out * stride : stride] += contrib.transpose(0, 2, 1)
    return np.ascontiguousarray(gxp[:, :, pad : pad + l_in])


def conv1d_backward_weights(x, gout, stride, pad, k):
    b, ci, l_in = x.shape
    _, co, l_out = gout.shape[0], gout.shape[1], gout.shape[2]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad))) if pad else x
    cols = _col_view(xp, l_out, k, stride)
    cols = cols.transpose(0, 2, 1, 3).reshape(b * l_out, ci * k)
    gmat = gout.transpose(1, 0, 2).reshape(co, b * l_out)
    return (gmat @ cols).reshape(co, ci, k)


# ---------------------------------------------------------------------------
# Pooling

def maxpool1d_forward(x, k, stride):
    b, c, l_in = x.shape
    l_out = (l_in - k) // stride + 1
    s0, s1, s2 = x.strides
    view = as_strided(x, (b, c, l_out, k), (s0, s1, s2 * stride, s2))
    local = np.argmax(view, axis=3)  # first max on ties
    out = np.take_along_axis(view, local[..., None], axis=3)[..., 0]
    argmax = local + stride * np.arange(l_out)[None, None, :]
    return np.ascontiguousarray(out), np.ascontiguousarray(argmax.astype(np.int64))


def maxpool1d_backward(gout, argmax, l_in):
    b, c, l_out = gout.shape
    gx = np.zeros((b, c, l_in))
    bi = np.arange(b)[:, None, None]
    ci = np.arange(c)[None, :, None]
    np.add.at(gx, (bi, ci, argmax), gout)
    return gx


def avgpool1d_forward(x, k, stride):
    b, c, l_in = x.shape
    l_out = (l_in - k) // stride + 1
    s0, s1, s2 = x.strides
    view = as_strided(x, (b, c, l_out, k), (s0, s1, s2 * stride, s2))
    return view.sum(axis=3) / k


def avgpool1d_backward(gout, k, stride, l_in):
    b, c, l_out = gout.shape
    gx = np.zeros((b, c, l_in))
    g = gout / k
    for kk in range(k):
        gx[:, :, kk : kk + l_out * stride : stride] += g
    return gx


# ---------------------------------------------------------------------------
# Centered moving mean with truncated windows at the edges.
#
# Anchoring the cumulative sum at x[0] keeps the filter exact on constant
# input (the deviations are exactly zero), which the detrend contract needs.

def moving_mean(x, half):
    n = x.shape[0]
    if n == 0:
        return x.copy()
    x0 = x[0]
    cs = np.empty(n + 1)
    cs[0] = 0.0
    np.cumsum(x - x0, out=cs[1:])
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    return x0 + (cs[hi] - cs[lo]) / (hi - lo)


# ---------------------------------------------------------------------------
# Peak extraction: plateau-centered local maxima above a threshold, then
# height-priority suppression within a minimum distance.

def _plateau_candidates(trace, threshold):
    n = trace.shape[0]
    cand_idx = []
    cand_h = []
    i = 0
    while i < n:
        v = trace[i]
        left = trace[i - 1] if i > 0 else -np.inf
        if v < threshold or v <= left:
            i += 1
            continue
        j = i
        while j + 1 < n and trace[j + 1] == v:
            j += 1
        right = trace[j + 1] if j + 1 < n else -np.inf
        if right < v:
            cand_idx.append((i + j) // 2)
            cand_h.append(v)
        i = j + 1
    return np.asarray(cand_idx, dtype=np.int64), np.asarray(cand_h)


def local_peaks(trace, threshold, min_dist):
    cand_idx, cand_h = _plateau_candidates(trace, threshold)
    if cand_idx.size == 0:
        return cand_idx
    order = np.argsort(-cand_h, kind="stable")  # ties keep index order
    n = trace.shape[0]
    blocked = np.zeros(n, dtype=np.bool_)
    keep = []
    for oi in order:
        p = cand_idx[oi]
        if blocked[p]:
            continue
        keep.append(p)
        lo = max(p - min_dist + 1, 0)
        hi = min(p + min_dist, n)
        blocked[lo:hi] = True
    keep = np.asarray(keep, dtype=np.int64)
    keep.sort()
    return keep


# ---------------------------------------------------------------------------
# Gradient/hessian histograms for the boosted trees.

def histogram_gh(binned, grad, hess, idx, n_bins):
    n_feat = binned.shape[1]
    hg = np.zeros((n_feat, n_bins))
    hh = np.zeros((n_feat, n_bins))
    cnt = np.zeros((n_feat, n_bins), dtype=np.int64)
    rows = binned[idx]
    g = grad[idx]
    h = hess[idx]
    for f in range(n_feat):
        col = rows[:, f]
        hg[f] = np.bincount(col, weights=g, minlength=n_bins)
        hh[f] = np.bincount(col, weights=h, minlength=n_bins)
        cnt[f] = np.bincount(col, minlength=n_bins)
    return hg, hh, cnt


# ---------------------------------------------------------------------------
# Forest traversal. Nodes of all trees are flattened into shared arrays;
# `offsets[t]` is the root index of tree t. feature < 0 marks a leaf.
# Rule: x[feature] < threshold goes left.

def predict_forest(x, feature, threshold, left, right, value, offsets):
    n = x.shape[0]
    raw = np.zeros(n)
    if n == 0:
        return raw
    rows = np.arange(n)
    for t in range(offsets.shape[0] - 1):
        node = np.full(n, offsets[t], dtype=np.int64)
        while True:
            f = feature[node]
            at_leaf = f < 0
            if at_leaf.all():
                break
            xv = x[rows, np.maximum(f, 0)]
            nxt = np.where(xv < threshold[node], left[node], right[node])
            node = np.where(at_leaf, node, nxt)
        raw += value[node]
    return raw
