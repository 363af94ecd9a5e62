# Compiled hot loops. Keep in lockstep with _pykernels.py.
from libc.math cimport exp, log1p, fabs, sqrt

import numpy as np


cdef inline double _softplus(double x) noexcept nogil:
    return (x if x > 0.0 else 0.0) + log1p(exp(-fabs(x)))


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double z
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    z = exp(x)
    return z / (1.0 + z)


def spmv(const long long[::1] indptr, const long long[::1] indices,
         const double[::1] data, const double[::1] x):
    cdef Py_ssize_t n = indptr.shape[0] - 1, i
    cdef long long p
    cdef double acc
    y = np.zeros(n, dtype=np.float64)
    cdef double[::1] yv = y
    with nogil:
        for i in range(n):
            acc = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                acc = acc + data[p] * x[indices[p]]
            yv[i] = acc
    return y


cdef double _cbow_pair(double[:, ::1] syn0, double[:, ::1] syn1,
                       const long long[::1] tokens, Py_ssize_t lo, Py_ssize_t hi,
                       Py_ssize_t t, const long long[:, ::1] negatives,
                       double lr, double[::1] h, double[::1] neu1e,
                       double[::1] grads) noexcept nogil:
    cdef Py_ssize_t dim = syn0.shape[1], k = negatives.shape[1]
    cdef Py_ssize_t c, j, q, n_ctx = hi - lo - 1
    cdef long long row, idx
    cdef double f, loss = 0.0, scale
    for q in range(dim):
        h[q] = 0.0
        neu1e[q] = 0.0
    for c in range(lo, hi):
        if c == t:
            continue
        row = tokens[c]
        for q in range(dim):
            h[q] = h[q] + syn0[row, q]
    for q in range(dim):
        h[q] = h[q] / n_ctx
    for j in range(k + 1):
        idx = tokens[t] if j == 0 else negatives[t, j - 1]
        f = 0.0
        for q in range(dim):
            f = f + h[q] * syn1[idx, q]
        if j == 0:
            loss = loss + _softplus(-f)
            grads[j] = 1.0 - _sigmoid(f)
        else:
            loss = loss + _softplus(f)
            grads[j] = -_sigmoid(f)
        for q in range(dim):
            neu1e[q] = neu1e[q] + grads[j] * syn1[idx, q]
    for j in range(k + 1):
        idx = tokens[t] if j == 0 else negatives[t, j - 1]
        scale = lr * grads[j]
        for q in range(dim):
            syn1[idx, q] = syn1[idx, q] + scale * h[q]
    scale = lr / n_ctx
    for q in range(dim):
        neu1e[q] = scale * neu1e[q]
    for c in range(lo, hi):
        if c == t:
            continue
        row = tokens[c]
        for q in range(dim):
            syn0[row, q] = syn0[row, q] + neu1e[q]
    return loss


def cbow_epoch(const long long[::1] tokens, const long long[::1] offsets,
               const long long[::1] order, long long window,
               const long long[:, ::1] negatives,
               double[:, ::1] syn0, double[:, ::1] syn1,
               double lr0, double lr_min, long long pos0, long long total):
    cdef Py_ssize_t dim = syn0.shape[1], k = negatives.shape[1]
    cdef Py_ssize_t op, p, s, e, t, lo, hi
    cdef long long pos = pos0, n_pairs = 0
    cdef double lr, loss_sum = 0.0
    h_arr = np.zeros(dim)
    e_arr = np.zeros(dim)
    g_arr = np.zeros(k + 1)
    cdef double[::1] h = h_arr, neu1e = e_arr, grads = g_arr
    with nogil:
        for op in range(order.shape[0]):
            p = order[op]
            s = offsets[p]
            e = offsets[p + 1]
            for t in range(s, e):
                lr = lr0 - (lr0 - lr_min) * (<double>pos / <double>total)
                if lr < lr_min:
                    lr = lr_min
                pos += 1
                lo = t - window if t - window > s else s
                hi = t + window + 1 if t + window + 1 < e else e
                if hi - lo <= 1:
                    continue
                loss_sum = loss_sum + _cbow_pair(syn0, syn1, tokens, lo, hi, t,
                                                 negatives, lr, h, neu1e, grads)
                n_pairs += 1
    return loss_sum, n_pairs


def svm_dcd_sweep(const long long[::1] indptr, const long long[::1] indices,
                  const double[::1] data, const double[::1] y,
                  double[::1] alpha, double[::1] w, const double[::1] qdiag,
                  double C, const long long[::1] order):
    cdef Py_ssize_t d = w.shape[0] - 1, oi, i
    cdef long long p
    cdef double G, a, na, pg, step, delta, viol = 0.0, gain = 0.0
    with nogil:
        for oi in range(order.shape[0]):
            i = order[oi]
            G = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                G = G + data[p] * w[indices[p]]
            G = y[i] * (G + w[d]) - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = G if G < 0.0 else 0.0
            elif a == C:
                pg = G if G > 0.0 else 0.0
            else:
                pg = G
            if fabs(pg) > viol:
                viol = fabs(pg)
            if pg != 0.0:
                na = a - G / qdiag[i]
                if na < 0.0:
                    na = 0.0
                if na > C:
                    na = C
                alpha[i] = na
                step = na - a
                gain = gain + (-G * step - 0.5 * qdiag[i] * step * step)
                delta = step * y[i]
                for p in range(indptr[i], indptr[i + 1]):
                    w[indices[p]] = w[indices[p]] + delta * data[p]
                w[d] = w[d] + delta
    return viol, gain


def rmsprop_dense(double[::1] theta, const double[::1] g, double[::1] cache,
                  double lr, double rho, double eps):
    cdef Py_ssize_t i, n = theta.shape[0]
    cdef double c
    with nogil:
        for i in range(n):
            c = cache[i] * rho + ((1.0 - rho) * g[i]) * g[i]
            cache[i] = c
            theta[i] = theta[i] - (lr * g[i]) / (sqrt(c) + eps)


def rmsprop_rows(double[:, ::1] theta, const long long[::1] rows, const double[:, ::1] g,
                 double[:, ::1] cache, double lr, double rho, double eps):
    cdef Py_ssize_t r, q, dim = theta.shape[1]
    cdef long long row
    cdef double c
    with nogil:
        for r in range(rows.shape[0]):
            row = rows[r]
            for q in range(dim):
                c = cache[row, q] * rho + ((1.0 - rho) * g[r, q]) * g[r, q]
                cache[row, q] = c
                theta[row, q] = theta[row, q] - (lr * g[r, q]) / (sqrt(c) + eps)
