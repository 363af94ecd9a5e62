"""Truncated SVD baseline via randomized subspace iteration.

The patient-CUI matrix is factored as ``M ~ U S V^T`` keeping the ``k``
largest singular values; new patients are mapped to ``x V_k`` (no rescaling
by the singular values).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .numeric import Rng


@dataclass
class SvdFactorization:
    singular_values: np.ndarray   # k, non-increasing
    components: np.ndarray        # V_k, n_features x k, orthonormal columns

    @property
    def k(self) -> int:
        return len(self.singular_values)


def _orthonormal(Y):
    q, _ = np.linalg.qr(Y)
    return q


def _fix_signs(V):
    """Flip columns so each column's largest-magnitude entry is positive."""
    i = np.argmax(np.abs(V), axis=0)
    V *= np.where(V[i, np.arange(V.shape[1])] < 0, -1.0, 1.0)
    return V


def fit_truncated_svd(m, k: int, seed: int = 0, oversample: int = 10, power_iters: int = 2,
                      rtol: float = 1e-10, max_power_iters: int = 100) -> SvdFactorization:
    """Top-``k`` right singular vectors and values of ``m``.

    Runs ``power_iters`` rounds of subspace iteration on a Gaussian sketch of
    width ``k + oversample``, then keeps iterating (up to ``max_power_iters``)
    until the leading ``k`` Ritz values change by less than ``rtol``
    relative and the entries of ``V_k`` by less than ``rtol``. Each column of ``V_k`` is signed so its largest-magnitude
    entry is positive.
    """
    m = sp.csr_matrix(m, dtype=np.float64) if sp.issparse(m) else np.asarray(m, dtype=np.float64)
    n_rows, n_cols = m.shape
    if n_rows == 0 or n_cols == 0:
        raise ValueError("empty matrix")
    if not 1 <= k <= min(n_rows, n_cols):
        raise ValueError(f"k={k} out of range [1, {min(n_rows, n_cols)}]")
    width = min(k + oversample, min(n_rows, n_cols))
    mt = m.T
    rng = Rng(seed).child("svd-sketch")
    Q = _orthonormal(m @ rng.normal((n_cols, width)))

    prev_s = prev_v = None
    it = 0
    while True:
        B = np.asarray(mt @ Q).T            # width x n_cols
        _, s, vt = np.linalg.svd(B, full_matrices=False)
        top, V = s[:k], _fix_signs(vt[:k].T.copy())
        # Ritz values settle long before the vectors do, so both must be stable
        if (it >= power_iters and prev_s is not None
                and np.all(np.abs(top - prev_s) <= rtol * max(top[0], 1e-300))
                and np.max(np.abs(V - prev_v)) <= rtol):
            break
        if it >= max(max_power_iters, power_iters):
            break
        prev_s, prev_v = top, V
        Z = _orthonormal(np.asarray(mt @ Q))
        Q = _orthonormal(np.asarray(m @ Z))
        it += 1
    return SvdFactorization(top.copy(), V)


def project(fact: SvdFactorization, x) -> np.ndarray:
    """Map feature rows (dense or sparse, 1-D or 2-D) into the latent space: ``x V_k``."""
    n = fact.components.shape[0]
    if sp.issparse(x):
        if x.shape[-1] != n:
            raise ValueError(f"dimension mismatch: {x.shape[-1]} features, factorization has {n}")
        return np.asarray(x @ fact.components)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != n:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} features, factorization has {n}")
    return x @ fact.components
