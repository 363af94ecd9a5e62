"""Deterministic numeric substrate.

Random streams
--------------
:class:`Rng` wraps numpy's ``Philox4x64-10`` counter-based bit generator.
The 128-bit Philox key is derived from the 64-bit user seed through
``numpy.random.SeedSequence``; a child stream for ``(seed, label)`` uses the
entropy ``[seed, label_id]`` where ``label_id`` is the first 8 bytes
(little-endian) of ``sha256(label)``. Distinct labels therefore give distinct
keys, hence disjoint streams. This algorithm is part of the on-disk contract:
golden files in ``tests/golden`` depend on it.

Matrices
--------
Dense matrices are plain ``float64`` numpy arrays (C order). Sparse matrices
are ``scipy.sparse.csr_matrix`` with sorted, duplicate-free column indices.
"""

from __future__ import annotations

import hashlib

import numpy as np
import scipy.sparse as sp

from . import kernels


def _label_id(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")


class Rng:
    """Seedable Philox stream with labelled child streams."""

    def __init__(self, seed: int, _entropy=None):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = int(seed)
        self._entropy = list(_entropy) if _entropy is not None else [self.seed]
        ss = np.random.SeedSequence(self._entropy)
        self.gen = np.random.Generator(np.random.Philox(ss))

    def child(self, label: str) -> "Rng":
        """Independent stream for ``(this stream's entropy, label)``."""
        return Rng(self.seed, self._entropy + [_label_id(label)])

    def uniform(self, lo: float = 0.0, hi: float = 1.0, size=None):
        if lo > hi:
            raise ValueError("lo must be <= hi")
        u = self.gen.random(size)
        out = lo + (hi - lo) * u
        if hi > lo:
            # rounding of lo + (hi-lo)*u may land on hi
            out = np.minimum(out, np.nextafter(hi, lo))
        else:
            out = np.full_like(u, lo) if size is not None else float(lo)
        return float(out) if size is None else out

    def normal(self, size) -> np.ndarray:
        return self.gen.standard_normal(size)

    def integers(self, lo: int, hi: int, size=None):
        return self.gen.integers(lo, hi, size=size, dtype=np.int64)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n).astype(np.int64)

    def random(self, size=None):
        return self.gen.random(size)


def rng_uniform(rng: Rng, lo: float, hi: float) -> float:
    """One draw from ``[lo, hi)``; returns ``lo`` when the interval is empty."""
    return rng.uniform(lo, hi)


def csr_from_rows(rows, values=None, n_cols: int | None = None) -> sp.csr_matrix:
    """Build a CSR matrix from per-row column index lists.

    ``values`` defaults to ones. Column indices within a row must be unique;
    they are sorted here.
    """
    lengths = np.fromiter((len(r) for r in rows), dtype=np.int64, count=len(rows))
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum(lengths, out=indptr[1:])
    if indptr[-1]:
        indices = np.concatenate([np.asarray(r, dtype=np.int64) for r in rows])
        data = (np.concatenate([np.asarray(v, dtype=np.float64) for v in values])
                if values is not None else np.ones(len(indices)))
    else:
        indices = np.zeros(0, dtype=np.int64)
        data = np.zeros(0)
    row_of = np.repeat(np.arange(len(rows)), lengths)
    order = np.lexsort((indices, row_of))
    indices, data = indices[order], data[order]
    if n_cols is None:
        n_cols = int(indices.max()) + 1 if len(indices) else 0
    m = sp.csr_matrix((data, indices, indptr), shape=(len(rows), n_cols))
    check_csr(m)
    return m


def check_csr(m: sp.csr_matrix) -> None:
    """Raise ``ValueError`` unless ``m`` satisfies the compressed-row invariants."""
    indptr, indices = m.indptr, m.indices
    if np.any(np.diff(indptr) < 0):
        raise ValueError("row pointers must be non-decreasing")
    if len(indices) and (indices.min() < 0 or indices.max() >= m.shape[1]):
        raise ValueError("column index out of range")
    same_row = np.ones(max(len(indices) - 1, 0), dtype=bool)
    starts = indptr[1:-1]
    same_row[starts[(starts > 0) & (starts < len(indices))] - 1] = False
    bad = np.flatnonzero(same_row & (np.diff(indices) <= 0))
    if len(bad):
        row = int(np.searchsorted(indptr, bad[0], side="right") - 1)
        raise ValueError(f"column indices of row {row} are not strictly increasing")


def spmv(m: sp.csr_matrix, x) -> np.ndarray:
    """Sparse matrix-vector product with fixed left-to-right row summation."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != m.shape[1]:
        raise ValueError(f"dimension mismatch: matrix has {m.shape[1]} columns, vector has {x.shape}")
    return kernels.spmv(
        np.ascontiguousarray(m.indptr, dtype=np.int64),
        np.ascontiguousarray(m.indices, dtype=np.int64),
        np.ascontiguousarray(m.data, dtype=np.float64),
        x,
    )


def gemm(a, b) -> np.ndarray:
    """Dense matrix product ``a @ b`` in float64."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b
