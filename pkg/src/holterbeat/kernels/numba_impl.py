"""Numba-jitted mirrors of the kernels in ``numpy_impl``.

Same signatures, same semantics. fastmath stays off so results are
reproducible and comparable against the numpy path; loops accumulate in the
same element order as the numpy reference wherever that order is
observable (histograms, moving mean, forest traversal).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def conv1d_forward(x, w, stride, pad):
    # length-innermost loops over contiguous row views with the tap weight
    # hoisted: every output sample is independent, so LLVM vectorizes
    # without reassociation; the stride-1 branch keeps unit-stride loads
    b, ci, l_in = x.shape
    co, _, k = w.shape
    l_out = (l_in + 2 * pad - k) // stride + 1
    xp = np.zeros((b, ci, l_in + 2 * pad))
    xp[:, :, pad : pad + l_in] = x
    out = np.zeros((b, co, l_out))
    for bb in range(b):
        for oo in range(co):
            orow = out[bb, oo]
            for ii in range(ci):
                xrow = xp[bb, ii]
                for kk in range(k):
                    wv = w[oo, ii, kk]
                    if stride == 1:
                        xk = xrow[kk : kk + l_out]
                        for ll in range(l_out):
                            orow[ll] += wv * xk[ll]
                    else:
                        for ll in range(l_out):
                            orow[ll] += wv * xrow[ll * stride + kk]
    return out


@njit(cache=True)
def conv1d_backward_input(gout, w, stride, pad, l_in):
    b, co, l_out = gout.shape
    _, ci, k = w.shape
    gxp = np.zeros((b, ci, l_in + 2 * pad))
    for bb in range(b):
        for ii in range(ci):
            grow_x = gxp[bb, ii]
            for oo in range(co):
                grow_o = gout[bb, oo]
                for kk in range(k):
                    wv = w[oo, ii, kk]
                    if stride == 1:
                        gk = grow_x[kk : kk + l_out]
                        for ll in range(l_out):
                            gk[ll] += wv * grow_o[ll]
                    else:
                        for ll in range(l_out):
                            grow_x[ll * stride + kk] += wv * grow_o[ll]
    return np.ascontiguousarray(gxp[:, :, pad : pad + l_in])


@njit(cache=True)
def conv1d_backward_weights(x, gout, stride, pad, k):
    b, ci, l_in = x.shape
    co = gout.shape[1]
    l_out = gout.shape[2]
    xp = np.zeros((b, ci, l_in + 2 * pad))
    xp[:, :, pad : pad + l_in] = x
    gw = np.zeros((co, ci, k))
    for bb in range(b):
        for oo in range(co):
            grow = gout[bb, oo]
            for ii in range(ci):
                xrow = xp[bb, ii]
                for kk in range(k):
                    # fixed-order partial sums: deterministic and wide enough
                    # for the vectorizer
                    acc0 = 0.0
                    acc1 = 0.0
                    acc2 = 0.0
                    acc3 = 0.0
                    ll = 0
                    if stride == 1:
                        xk = xrow[kk : kk + l_out]
                        while ll + 4 <= l_out:
                            acc0 += grow[ll] * xk[ll]
                            acc1 += grow[ll + 1] * xk[ll + 1]
                            acc2 += grow[ll + 2] * xk[ll + 2]
                            acc3 += grow[ll + 3] * xk[ll + 3]
                            ll += 4
                        acc = (acc0 + acc1) + (acc2 + acc3)
                        while ll < l_out:
                            acc += grow[ll] * xk[ll]
                            ll += 1
                    else:
                        while ll + 4 <= l_out:
                            acc0 += grow[ll] * xrow[ll * stride + kk]
                            acc1 += grow[ll + 1] * xrow[(ll + 1) * stride + kk]
                            acc2 += grow[ll + 2] * xrow[(ll + 2) * stride + kk]
                            acc3 += grow[ll + 3] * xrow[(ll + 3) * stride + kk]
                            ll += 4
                        acc = (acc0 + acc1) + (acc2 + acc3)
                        while ll < l_out:
                            acc += grow[ll] * xrow[ll * stride + kk]
                            ll += 1
                    gw[oo, ii, kk] += acc
    return gw


@njit(cache=True)
def maxpool1d_forward(x, k, stride):
    b, c, l_in = x.shape
    l_out = (l_in - k) // stride + 1
    out = np.empty((b, c, l_out))
    argmax = np.empty((b, c, l_out), dtype=np.int64)
    for bb in range(b):
        for cc in range(c):
            for ll in range(l_out):
                start = ll * stride
                best = x[bb, cc, start]
                best_i = start
                for kk in range(1, k):
                    v = x[bb, cc, start + kk]
                    if v > best:  # first max wins ties
                        best = v
                        best_i = start + kk
                out[bb, cc, ll] = best
                argmax[bb, cc, ll] = best_i
    return out, argmax


@njit(cache=True)
def maxpool1d_backward(gout, argmax, l_in):
    b, c, l_out = gout.shape
    gx = np.zeros((b, c, l_in))
    for bb in range(b):
        for cc in range(c):
            for ll in range(l_out):
                gx[bb, cc, argmax[bb, cc, ll]] += gout[bb, cc, ll]
    return gx


@njit(cache=True)
def avgpool1d_forward(x, k, stride):
    b, c, l_in = x.shape
    l_out = (l_in - k) // stride + 1
    out = np.empty((b, c, l_out))
    for bb in range(b):
        for cc in range(c):
            for ll in range(l_out):
                start = ll * stride
                acc = 0.0
                for kk in range(k):
                    acc += x[bb, cc, start + kk]
                out[bb, cc, ll] = acc / k
    return out


@njit(cache=True)
def avgpool1d_backward(gout, k, stride, l_in):
    b, c, l_out = gout.shape
    gx = np.zeros((b, c, l_in))
    for bb in range(b):
        for cc in range(c):
            for ll in range(l_out):
                g = gout[bb, cc, ll] / k
                start = ll * stride
                for kk in range(k):
                    gx[bb, cc, start + kk] += g
    return gx


@njit(cache=True)
def moving_mean(x, half):
    n = x.shape[0]
    out = np.empty(n)
    if n == 0:
        return out
    x0 = x[0]
    cs = np.empty(n + 1)
    cs[0] = 0.0
    for i in range(n):
        cs[i + 1] = cs[i] + (x[i] - x0)
    for i in range(n):
        lo = i - half
        if lo < 0:
            lo = 0
        hi = i + half + 1
        if hi > n:
            hi = n
        out[i] = x0 + (cs[hi] - cs[lo]) / (hi - lo)
    return out


@njit(cache=True)
def _stable_order_desc(heights):
    # bottom-up stable merge sort, descending by height
    n = heights.shape[0]
    order = np.arange(n)
    buf = np.empty(n, dtype=np.int64)
    width = 1
    while width < n:
        lo = 0
        while lo < n:
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if heights[order[i]] >= heights[order[j]]:
                    buf[k] = order[i]
                    i += 1
                else:
                    buf[k] = order[j]
                    j += 1
                k += 1
            while i < mid:
                buf[k] = order[i]
                i += 1
                k += 1
            while j < hi:
                buf[k] = order[j]
                j += 1
                k += 1
            for m in range(lo, hi):
                order[m] = buf[m]
            lo += 2 * width
        width *= 2
    return order


@njit(cache=True)
def local_peaks(trace, threshold, min_dist):
    n = trace.shape[0]
    cand_idx = np.empty(n, dtype=np.int64)
    cand_h = np.empty(n)
    m = 0
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
            cand_idx[m] = (i + j) // 2
            cand_h[m] = v
            m += 1
        i = j + 1
    if m == 0:
        return cand_idx[:0]
    order = _stable_order_desc(cand_h[:m])
    blocked = np.zeros(n, dtype=np.bool_)
    keep = np.empty(m, dtype=np.int64)
    nk = 0
    for oi in order:
        p = cand_idx[oi]
        if blocked[p]:
            continue
        keep[nk] = p
        nk += 1
        lo = max(p - min_dist + 1, 0)
        hi = min(p + min_dist, n)
        blocked[lo:hi] = True
    out = keep[:nk].copy()
    out.sort()
    return out


@njit(cache=True)
def histogram_gh(binned, grad, hess, idx, n_bins):
    n_feat = binned.shape[1]
    hg = np.zeros((n_feat, n_bins))
    hh = np.zeros((n_feat, n_bins))
    cnt = np.zeros((n_feat, n_bins), dtype=np.int64)
    for f in range(n_feat):
        for t in range(idx.shape[0]):
            i = idx[t]
            b = binned[i, f]
            hg[f, b] += grad[i]
            hh[f, b] += hess[i]
            cnt[f, b] += 1
    return hg, hh, cnt


@njit(cache=True)
def predict_forest(x, feature, threshold, left, right, value, offsets):
    n = x.shape[0]
    raw = np.zeros(n)
    for t in range(offsets.shape[0] - 1):
        root = offsets[t]
        for i in range(n):
            node = root
            while feature[node] >= 0:
                if x[i, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            raw[i] += value[node]
    return raw
