"""Pure-Python/numpy versions of the hot kernels.

Same signatures and operation order as ``_ckernels.pyx``. Vector dot products
go through numpy here, so results agree with the compiled kernels to rounding,
not bit for bit.
"""

import math

import numpy as np


def spmv(indptr, indices, data, x):
    n = len(indptr) - 1
    y = np.zeros(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        y[i] = acc
    return y


def _softplus(x):
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def cbow_pair(syn0, syn1, ctx, target, negs, lr):
    """One negative-sampling CBOW update in place; returns the pre-update loss."""
    h = syn0[ctx].sum(axis=0) / len(ctx)
    outs = [target] + list(negs)
    grads = np.empty(len(outs))
    neu1e = np.zeros(syn0.shape[1])
    loss = 0.0
    for j, idx in enumerate(outs):
        f = float(h @ syn1[idx])
        if j == 0:
            loss += _softplus(-f)
            grads[j] = 1.0 - _sigmoid(f)
        else:
            loss += _softplus(f)
            grads[j] = -_sigmoid(f)
        neu1e += grads[j] * syn1[idx]
    for j, idx in enumerate(outs):
        syn1[idx] += (lr * grads[j]) * h
    step = (lr / len(ctx)) * neu1e
    for c in ctx:
        syn0[c] += step
    return loss


def cbow_epoch(tokens, offsets, order, window, negatives, syn0, syn1,
               lr0, lr_min, pos0, total):
    loss_sum = 0.0
    n_pairs = 0
    pos = pos0
    for p in order:
        s, e = offsets[p], offsets[p + 1]
        for t in range(s, e):
            lr = lr0 - (lr0 - lr_min) * (pos / total)
            if lr < lr_min:
                lr = lr_min
            pos += 1
            lo = max(s, t - window)
            hi = min(e, t + window + 1)
            if hi - lo <= 1:
                continue
            ctx = [tokens[c] for c in range(lo, hi) if c != t]
            loss_sum += cbow_pair(syn0, syn1, ctx, tokens[t], negatives[t], lr)
            n_pairs += 1
    return loss_sum, n_pairs


def svm_dcd_sweep(indptr, indices, data, y, alpha, w, qdiag, C, order):
    d = len(w) - 1
    viol = 0.0
    gain = 0.0
    for i in order:
        s, e = indptr[i], indptr[i + 1]
        idx = indices[s:e]
        x = data[s:e]
        G = y[i] * (float(x @ w[idx]) + w[d]) - 1.0
        a = alpha[i]
        if a == 0.0:
            pg = min(G, 0.0)
        elif a == C:
            pg = max(G, 0.0)
        else:
            pg = G
        if abs(pg) > viol:
            viol = abs(pg)
        if pg != 0.0:
            na = min(max(a - G / qdiag[i], 0.0), C)
            alpha[i] = na
            step = na - a
            gain += -G * step - 0.5 * qdiag[i] * step * step
            delta = step * y[i]
            w[idx] += delta * x
            w[d] += delta
    return viol, gain


def rmsprop_dense(theta, g, cache, lr, rho, eps):
    c = cache * rho + ((1.0 - rho) * g) * g
    cache[:] = c
    theta -= (lr * g) / (np.sqrt(c) + eps)


def rmsprop_rows(theta, rows, g, cache, lr, rho, eps):
    c = cache[rows] * rho + ((1.0 - rho) * g) * g
    cache[rows] = c
    theta[rows] -= (lr * g) / (np.sqrt(c) + eps)
